#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spinorbit/lattice.hpp"
#include "spinorbit/quantum_core.hpp"

namespace spinorbit {

/// Periodic AC shape on [0, 2 pi). The distorted form scales the first half
/// period of sin by a1 and the second half by a2; a1 = a2 = 1 is a pure sinusoid.
struct Waveform {
  enum class Kind { Sinusoid, Distorted };
  Kind kind = Kind::Sinusoid;
  double a1 = 1.0;
  double a2 = 1.0;

  double operator()(double phase) const;
  bool is_pure_sinusoid() const { return kind == Kind::Sinusoid || (a1 == 1.0 && a2 == 1.0); }
};

struct Chirp {
  double omega_start = 0.0;
  double omega_end = 0.0;
};

struct ProtocolSegment {
  long n_pulses = 0;
  double ac_amplitude = 0.0;  // gamma * B_AC, angular frequency
  double ac_omega = 0.0;      // ignored when chirp is set
  std::optional<Chirp> chirp;
  double ac_phase = 0.0;
  Waveform waveform;
  int N = 4;  // pulses per AC period block
  int k = 1;  // AC periods per N pulses
};

struct DriveProtocol {
  std::vector<ProtocolSegment> segments;
  double tau = 0.2;
  double t_pulse = 0.0;
  double t_acq = 0.0;
  double Omega = 0.0;
  double delta = 0.0;
  double theta_nominal = 0.0;
  double delta_theta = 0.0;
  double eta_noise = 0.0;
  double acq_jitter = 0.05;
  bool full_model = false;

  /// Derives t_pulse from (theta, Omega, delta) and t_acq = tau - t_pulse.
  static DriveProtocol from_angle(double tau, double theta, double Omega, double delta);
  /// Derives theta from t_pulse * sqrt(Omega^2 + delta^2).
  static DriveProtocol from_pulse_width(double tau, double t_pulse, double Omega, double delta);

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  double alpha() const;
  Vec3 pulse_axis() const;
  /// Rotation angle of a noiseless pulse, theta_nominal + delta_theta.
  double applied_angle() const { return theta_nominal + delta_theta; }
  long total_pulses() const;
  long segment_start(std::size_t index) const;
  std::size_t segment_of_pulse(long pulse) const;
};

/// omega_AC = 2 pi k / (N tau) to 1e-12 relative, and no chirp.
bool is_resonant(const ProtocolSegment& seg, const DriveProtocol& protocol);
double resonant_omega(const ProtocolSegment& seg, const DriveProtocol& protocol);

/// AC phase at absolute time t for a segment starting at pulse segment_start.
double ac_phase_at(double t, const ProtocolSegment& seg, const DriveProtocol& protocol,
                   long segment_start = 0);

/// Mean of waveform(phase(t)) over acquisition window w = [w tau + t_pulse, (w+1) tau].
double window_average(long window, const ProtocolSegment& seg, const DriveProtocol& protocol,
                      long segment_start = 0);

/// f_{n+k}: window_average of window n + k.
inline double window_phase_weight(long n, long k, const ProtocolSegment& seg,
                                  const DriveProtocol& protocol, long segment_start = 0) {
  return window_average(n + k, seg, protocol, segment_start);
}

/// exp(-i angle (cos alpha I_x + sin alpha I_z)), angle = applied_angle (1 + zeta).
SpinRotation sl_pulse_unitary(int L, const DriveProtocol& protocol, double zeta = 0.0);

/// Dense exp(-i t_acq [H_dd + (delta + B f_w) I_z]) for window w, L <= 12.
SpinOperator acquisition_propagator(const SpinGraph& graph, const ProtocolSegment& seg,
                                    long window, const DriveProtocol& protocol,
                                    long segment_start = 0, double t_acq_scale = 1.0);

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<double> mx;
  std::vector<double> my;
  std::vector<double> mz;
  std::vector<int> segment;
  Vec3 initial = Vec3::Zero();
  double max_norm_deviation = 0.0;
  bool valid = true;
  std::string error;
  std::string protocol_hash;
  std::uint64_t graph_seed = 0;

  std::size_t size() const { return times.size(); }
  Vec3 sample(std::size_t i) const { return Vec3(mx[i], my[i], mz[i]); }
  void push(double t, const Vec3& m, int seg);
};

struct RunOptions {
  bool track_norm = true;
  KrylovOptions krylov;
  int full_model_substeps = 16;  // per pulse
};

/// Stroboscopic evolution: pulse n at t = n tau, sample right after it, then window n.
/// t_acq jitter stretches only the window propagator; the clock and AC phase stay
/// on the nominal grid.
TrajectoryRecord run_protocol(const SpinGraph& graph, const DriveProtocol& protocol,
                              StateVector state, std::uint64_t seed, const RunOptions& opts = {});

/// Reusable evolution engine; run_protocol builds one per call.
class DriveEngine {
 public:
  DriveEngine(const SpinGraph& graph, const DriveProtocol& protocol, std::uint64_t seed,
              RunOptions opts = {});

  void apply_pulse(Eigen::VectorXcd& psi, long pulse) const;
  void apply_window(Eigen::VectorXcd& psi, long window) const;
  double flip_noise(long pulse) const;
  double jitter_scale(long window) const;
  const SectorEvolver& evolver() const { return evolver_; }

 private:
  const SpinGraph& graph_;
  DriveProtocol protocol_;
  std::uint64_t seed_;
  RunOptions opts_;
  SpinOperator hdd_;
  SectorEvolver evolver_;
  SpinRotation pulse_;
  std::vector<long> seg_start_;
  std::optional<SpinOperator> ix_;
  std::optional<SpinOperator> iz_;
};

struct DisorderSpec {
  int L = 10;
  double r_min = 0.9;
  double r_max = 1.1;
  GraphOptions graph_opts;
  bool normalize_to_median = true;
  DriveProtocol protocol;
  int n_realizations = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  RunOptions run;
};

struct DisorderResult {
  TrajectoryRecord mean;
  std::vector<TrajectoryRecord> realizations;
  std::vector<SpinGraph> graphs;
};

/// Realization i uses graph seed and noise seed seed + i.
DisorderResult disorder_average(const DisorderSpec& spec);
TrajectoryRecord mean_record(const std::vector<TrajectoryRecord>& records);

struct FidTrace {
  std::vector<double> times;
  std::vector<double> mx;  // per spin
};

struct FidCrossing {
  std::optional<double> time;
  bool flagged = false;
};

/// <I_x>/L under H_dd alone from the x-polarized product state. Stops a few
/// samples after the signal has dropped below 1/e of its start value.
FidTrace free_induction_decay(const SpinGraph& graph, double dt, double t_max);
FidCrossing fid_one_over_e(const FidTrace& trace);

}  // namespace spinorbit
