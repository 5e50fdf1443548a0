#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "spinorbit/drive.hpp"

namespace spinorbit {

struct InductionSeries {
  std::vector<double> times;
  std::vector<double> S;
  std::vector<double> phi_raw;  // wrapped to (-pi, pi]
  double tau = 1.0;
  std::optional<double> ramp_per_pulse;  // set when the ramp is known exactly

  std::size_t size() const { return S.size(); }
};

/// A0 exp[-(t/T)^stretch]; T = inf gives a flat envelope.
struct Envelope {
  double amplitude = 1.0;
  double T = std::numeric_limits<double>::infinity();
  double stretch = 0.5;
  double operator()(double t) const;
};

struct ReadoutNoise {
  double gaussian_sigma = 0.0;  // relative, multiplies S
  double mains_amplitude = 0.0; // additive, in S units
  double mains_freq = 0.0;      // cycles per unit time
  double mains_phase = 0.0;
};

double wrap_phase(double x);

/// S_j = envelope(t_j) |m_perp| (1 + noise) + mains, phi_j = atan2(my, mx) + j ramp.
InductionSeries synthesize_readout(const TrajectoryRecord& truth, double ramp_per_pulse, const Envelope& envelope,
                                   const ReadoutNoise& noise, std::uint64_t seed, bool ramp_known = false);

struct PhaseOptions {
  long fit_first = 0;
  long fit_last = -1;  // exclusive; -1 means the whole series
  double ambiguity_margin = 0.1 * 3.14159265358979323846;  // flag |step| > pi - margin
};

struct DressedPhase {
  std::vector<double> phi;
  std::vector<double> unwrapped;
  double slope = 0.0;  // per sample
  double offset = 0.0;
  std::vector<long> ambiguous;  // indices j whose step from j-1 is ambiguous
  bool flagged() const { return !ambiguous.empty(); }
};

std::vector<double> unwrap_phase(const std::vector<double>& wrapped, double margin, std::vector<long>* ambiguous);

/// Subtracts the Larmor ramp. With a known ramp the exact j * ramp is removed; otherwise
/// a straight line fitted to the unwrapped phase of the reference (or of the series
/// itself) is removed, which also fixes the constant gauge.
DressedPhase remove_phase_ramp(const InductionSeries& series, const InductionSeries* reference = nullptr,
                               const PhaseOptions& opts = {});

struct Decomposition {
  std::vector<double> S_dec;
  std::vector<double> S_osc;
};

/// Centered moving average of width window_len, shrinking at the edges.
Decomposition decompose_decay(const std::vector<double>& S, int window_len);

struct ReconstructOptions {
  double delta0_fraction = 0.05;
  int window_len = 4;
  std::optional<std::vector<double>> norm_model;  // replaces S_dec + delta0 when set
};

struct BlochTrajectory {
  std::vector<double> times;
  std::vector<double> Ix;
  std::vector<double> Iy;
  std::vector<double> Iz_abs;
  std::vector<double> norm_model;
  double delta0 = 0.0;
  std::vector<double> S_dec;
  std::vector<double> S_osc;
  long clamped = 0;
  bool clamp_warning = false;  // clamped on more than 5% of the samples

  std::size_t size() const { return Ix.size(); }
  Vec3 sample(std::size_t i) const { return Vec3(Ix[i], Iy[i], Iz_abs[i]); }
};

BlochTrajectory reconstruct_bloch(const InductionSeries& series, const DressedPhase& phase,
                                  const ReconstructOptions& opts = {});

struct LifetimeFit {
  double T2_prime = 0.0;
  double amplitude = 0.0;
  double stretch = 0.5;
  double residual_rms = 0.0;
  double r_squared = 0.0;
  long first = 0;
  long last = 0;
  bool truncated = false;
  bool divergent = false;
};

enum class StretchModel { FixedHalf, Free };

/// Fixed mode: linear least squares of log S against sqrt(t). Free mode: the stretch
/// exponent is scanned and refined, each candidate solved linearly in t^stretch.
LifetimeFit fit_lifetime(const std::vector<double>& times, const std::vector<double>& S_dec,
                         StretchModel model = StretchModel::FixedHalf, long first = 0, long last = -1);

struct ManifoldSeries {
  int k = 0;
  std::vector<long> indices;
  std::vector<Vec3> samples;
  Vec3 mean = Vec3::Zero();
  double rms = 0.0;
};

std::vector<ManifoldSeries> manifold_series(const std::vector<Vec3>& samples, int N, long first = 0, long last = -1);
std::vector<ManifoldSeries> manifold_series(const TrajectoryRecord& record, int N, long first = 0, long last = -1);

struct PrecessionFit {
  double rate = 0.0;  // rad per unit time, right-handed about the axis
  std::vector<double> per_manifold;
};

/// Angle of each manifold about the given axis, measured from the common centre,
/// unwrapped and fitted with a line in time.
PrecessionFit fit_manifold_precession(const std::vector<Vec3>& samples, const std::vector<double>& times, int N,
                                      const Vec3& axis, long first = 0, long last = -1);

}  // namespace spinorbit
