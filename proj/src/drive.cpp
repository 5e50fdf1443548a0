#include "spinorbit/drive.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "spinorbit/errors.hpp"
#include "spinorbit/rng.hpp"

namespace spinorbit {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_2pi(double x) {
  double r = std::fmod(x, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  return r;
}

// Root of phase(t) = target on [a, b] by bisection; phase is monotone there.
template <class F>
double bisect_root(const F& phase, double a, double b, double target) {
  double fa = phase(a) - target;
  for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(b)); ++it) {
    const double m = 0.5 * (a + b);
    const double fm = phase(m) - target;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

double Waveform::operator()(double phase) const {
  const double s = std::sin(phase);
  if (kind == Kind::Sinusoid) return s;
  return wrap_2pi(phase) < kPi ? a1 * s : a2 * s;
}

DriveProtocol DriveProtocol::from_angle(double tau, double theta, double Omega, double delta) {
  DriveProtocol p;
  p.tau = tau;
  p.Omega = Omega;
  p.delta = delta;
  p.theta_nominal = theta;
  const double rabi = std::hypot(Omega, delta);
  if (!(rabi > 0.0)) throw std::invalid_argument("DriveProtocol: Omega and delta both zero");
  p.t_pulse = theta / rabi;
  p.t_acq = tau - p.t_pulse;
  return p;
}

DriveProtocol DriveProtocol::from_pulse_width(double tau, double t_pulse, double Omega,
                                              double delta) {
  DriveProtocol p;
  p.tau = tau;
  p.Omega = Omega;
  p.delta = delta;
  p.t_pulse = t_pulse;
  p.t_acq = tau - t_pulse;
  p.theta_nominal = t_pulse * std::hypot(Omega, delta);
  return p;
}

void DriveProtocol::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("DriveProtocol: " + m); };
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(t_pulse >= 0.0) || !(t_acq > 0.0)) fail("need t_pulse >= 0 and t_acq > 0");
  if (std::abs(t_pulse + t_acq - tau) > 1e-12 * tau) fail("tau != t_pulse + t_acq");
  if (!(Omega > 0.0)) fail("Omega must be positive");
  if (t_pulse > 0.0 &&
      std::abs(theta_nominal - t_pulse * std::hypot(Omega, delta)) > 1e-9 * std::max(1.0, theta_nominal))
    fail("theta_nominal != t_pulse sqrt(Omega^2 + delta^2)");
  if (!(eta_noise >= 0.0 && eta_noise < 1.0)) fail("eta_noise must lie in [0, 1)");
  if (!(acq_jitter >= 0.0 && acq_jitter < 1.0)) fail("acq_jitter must lie in [0, 1)");
  if (segments.empty()) fail("no segments");
  for (const auto& s : segments) {
    if (s.n_pulses < 1) fail("segment with n_pulses < 1");
    if (s.N < 1 || s.k < 0) fail("segment needs N >= 1 and k >= 0");
  }
}

double DriveProtocol::alpha() const { return std::atan2(delta, Omega); }

Vec3 DriveProtocol::pulse_axis() const {
  const double a = alpha();
  return Vec3(std::cos(a), 0.0, std::sin(a));
}

long DriveProtocol::total_pulses() const {
  long n = 0;
  for (const auto& s : segments) n += s.n_pulses;
  return n;
}

long DriveProtocol::segment_start(std::size_t index) const {
  long n = 0;
  for (std::size_t i = 0; i < index && i < segments.size(); ++i) n += segments[i].n_pulses;
  return n;
}

std::size_t DriveProtocol::segment_of_pulse(long pulse) const {
  long end = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    end += segments[i].n_pulses;
    if (pulse < end) return i;
  }
  return segments.empty() ? 0 : segments.size() - 1;
}

double resonant_omega(const ProtocolSegment& seg, const DriveProtocol& protocol) {
  return 2.0 * kPi * seg.k / (seg.N * protocol.tau);
}

bool is_resonant(const ProtocolSegment& seg, const DriveProtocol& protocol) {
  if (seg.chirp) return false;
  const double w = resonant_omega(seg, protocol);
  return std::abs(seg.ac_omega - w) <= 1e-12 * std::max(std::abs(w), 1e-300);
}

double ac_phase_at(double t, const ProtocolSegment& seg, const DriveProtocol& protocol,
                   long segment_start) {
  if (!seg.chirp) return seg.ac_omega * t + seg.ac_phase;
  const double t0 = segment_start * protocol.tau;
  const double rate = (seg.chirp->omega_end - seg.chirp->omega_start) / (seg.n_pulses * protocol.tau);
  const double tp = t - t0;
  return seg.ac_phase + seg.chirp->omega_start * t + 0.5 * rate * tp * tp;
}

double window_average(long window, const ProtocolSegment& seg, const DriveProtocol& protocol,
                      long segment_start) {
  const double a = window * protocol.tau + protocol.t_pulse;
  const double b = (window + 1) * protocol.tau;
  const double len = b - a;

  if (!seg.chirp && seg.waveform.kind == Waveform::Kind::Sinusoid) {
    const double w = seg.ac_omega;
    if (w == 0.0) return std::sin(seg.ac_phase);
    // (cos(wa + phi) - cos(wb + phi)) / (w len), written with a product to avoid cancellation
    const double mid = w * 0.5 * (a + b) + seg.ac_phase;
    const double half = 0.5 * w * len;
    const double sinc = half == 0.0 ? 1.0 : std::sin(half) / half;
    return std::sin(mid) * sinc;
  }

  auto phase = [&](double t) { return ac_phase_at(t, seg, protocol, segment_start); };
  auto g = [&](double t) { return seg.waveform(phase(t)); };

  // Split at the waveform kinks (phase = m pi) so each piece is smooth.
  std::vector<double> cuts{a};
  if (seg.waveform.kind == Waveform::Kind::Distorted) {
    const double pa = phase(a);
    const double pb = phase(b);
    const double mid = phase(0.5 * (a + b));
    const bool monotone = (mid - pa) * (pb - mid) >= 0.0;
    if (monotone && pa != pb) {
      const double lo = std::min(pa, pb);
      const double hi = std::max(pa, pb);
      for (double m = std::ceil(lo / kPi); m * kPi < hi; m += 1.0) {
        const double target = m * kPi;
        if (target <= lo) continue;
        const double root = pa < pb ? bisect_root(phase, a, b, target)
                                    : bisect_root([&](double t) { return -phase(t); }, a, b, -target);
        if (root > cuts.back() && root < b) cuts.push_back(root);
      }
    }
  }
  cuts.push_back(b);

  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double err = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 21>::integrate(g, cuts[i], cuts[i + 1],
                                                                           15, 1e-10, &err);
  }
  return total / len;
}

SpinRotation sl_pulse_unitary(int L, const DriveProtocol& protocol, double zeta) {
  return SpinRotation::about_axis(L, protocol.pulse_axis(), protocol.applied_angle() * (1.0 + zeta));
}

SpinOperator acquisition_propagator(const SpinGraph& graph, const ProtocolSegment& seg, long window,
                                    const DriveProtocol& protocol, long segment_start,
                                    double t_acq_scale) {
  const SectorEvolver ev(dipolar_hamiltonian(graph));
  const double z = protocol.delta + seg.ac_amplitude * window_average(window, seg, protocol, segment_start);
  const Eigen::MatrixXcd U = ev.dense(protocol.t_acq * t_acq_scale, z);
  SpinOperator::Sparse S = U.sparseView(cplx(0.0), 0.0);
  return SpinOperator(graph.size(), std::move(S), false);
}

void TrajectoryRecord::push(double t, const Vec3& m, int seg) {
  times.push_back(t);
  mx.push_back(m.x());
  my.push_back(m.y());
  mz.push_back(m.z());
  segment.push_back(seg);
}

DriveEngine::DriveEngine(const SpinGraph& graph, const DriveProtocol& protocol, std::uint64_t seed,
                         RunOptions opts)
    : graph_(graph),
      protocol_(protocol),
      seed_(seed),
      opts_(opts),
      hdd_(dipolar_hamiltonian(graph)),
      evolver_(hdd_),
      pulse_(sl_pulse_unitary(graph.size(), protocol)) {
  protocol_.validate();
  for (std::size_t i = 0; i < protocol_.segments.size(); ++i)
    seg_start_.push_back(protocol_.segment_start(i));
  if (protocol_.full_model) {
    ix_ = collective_operator(graph.size(), Axis::X);
    iz_ = collective_operator(graph.size(), Axis::Z);
  }
}

double DriveEngine::flip_noise(long pulse) const {
  if (protocol_.eta_noise == 0.0) return 0.0;
  return CounterRng(seed_, kFlipNoiseStream).symmetric(static_cast<std::uint64_t>(pulse), protocol_.eta_noise);
}

double DriveEngine::jitter_scale(long window) const {
  if (protocol_.acq_jitter == 0.0) return 1.0;
  return 1.0 + CounterRng(seed_, kAcqJitterStream)
                   .symmetric(static_cast<std::uint64_t>(window), protocol_.acq_jitter);
}

void DriveEngine::apply_pulse(Eigen::VectorXcd& psi, long pulse) const {
  const double zeta = flip_noise(pulse);
  if (!protocol_.full_model) {
    if (zeta == 0.0) pulse_.apply(psi);
    else sl_pulse_unitary(graph_.size(), protocol_, zeta).apply(psi);
    return;
  }
  if (protocol_.t_pulse == 0.0) {
    sl_pulse_unitary(graph_.size(), protocol_, zeta).apply(psi);
    return;
  }
  // Dipolar and AC terms kept during the pulse; midpoint substeps.
  const std::size_t si = protocol_.segment_of_pulse(pulse);
  const auto& seg = protocol_.segments[si];
  const double rabi = std::hypot(protocol_.Omega, protocol_.delta);
  const double drive = protocol_.applied_angle() * (1.0 + zeta) / (protocol_.t_pulse * rabi);
  const int n = std::max(1, opts_.full_model_substeps);
  const double dt = protocol_.t_pulse / n;
  const auto& hdd = hdd_.matrix();
  const auto& ix = ix_->matrix();
  const auto& iz = iz_->matrix();
  for (int s = 0; s < n; ++s) {
    const double tm = pulse * protocol_.tau + (s + 0.5) * dt;
    const double zc = drive * protocol_.delta +
                      seg.ac_amplitude * seg.waveform(ac_phase_at(tm, seg, protocol_, seg_start_[si]));
    const double xc = drive * protocol_.Omega;
    MatVec mv = [&](const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
      out.noalias() = hdd * in;
      out += xc * (ix * in);
      out += zc * (iz * in);
    };
    psi = krylov_expm_apply(mv, psi, dt, opts_.krylov);
  }
}

void DriveEngine::apply_window(Eigen::VectorXcd& psi, long window) const {
  const std::size_t si = protocol_.segment_of_pulse(window);
  const auto& seg = protocol_.segments[si];
  const double f = seg.ac_amplitude == 0.0 ? 0.0 : window_average(window, seg, protocol_, seg_start_[si]);
  evolver_.apply(psi, protocol_.t_acq * jitter_scale(window), protocol_.delta + seg.ac_amplitude * f);
}

TrajectoryRecord run_protocol(const SpinGraph& graph, const DriveProtocol& protocol,
                              StateVector state, std::uint64_t seed, const RunOptions& opts) {
  if (state.num_spins() != graph.size())
    throw std::invalid_argument("run_protocol: state and graph sizes differ");
  const DriveEngine engine(graph, protocol, seed, opts);
  const int L = graph.size();
  const long total = protocol.total_pulses();

  TrajectoryRecord rec;
  rec.graph_seed = graph.seed();
  rec.times.reserve(total);
  rec.mx.reserve(total);
  rec.my.reserve(total);
  rec.mz.reserve(total);
  rec.segment.reserve(total);
  Eigen::VectorXcd& psi = state.amplitudes();
  rec.initial = magnetization(psi, L);

  try {
    for (long n = 0; n < total; ++n) {
      engine.apply_pulse(psi, n);
      const int seg = static_cast<int>(protocol.segment_of_pulse(n));
      rec.push(n * protocol.tau + protocol.t_pulse, magnetization(psi, L), seg);
      if (opts.track_norm)
        rec.max_norm_deviation = std::max(rec.max_norm_deviation, std::abs(psi.norm() - 1.0));
      engine.apply_window(psi, n);
    }
  } catch (const NumericError& e) {
    rec.valid = false;
    rec.error = e.what();
  }
  if (!std::isfinite(rec.max_norm_deviation)) {
    rec.valid = false;
    rec.error = "non-finite state norm";
  }
  return rec;
}

TrajectoryRecord mean_record(const std::vector<TrajectoryRecord>& records) {
  if (records.empty()) throw std::invalid_argument("mean_record: no records");
  std::size_t n = records.front().size();
  for (const auto& r : records) n = std::min(n, r.size());
  TrajectoryRecord out;
  out.graph_seed = records.front().graph_seed;
  out.protocol_hash = records.front().protocol_hash;
  const double w = 1.0 / records.size();
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 m = Vec3::Zero();
    for (const auto& r : records) m += r.sample(i);
    out.push(records.front().times[i], m * w, records.front().segment[i]);
  }
  for (const auto& r : records) {
    out.initial += r.initial * w;
    out.max_norm_deviation = std::max(out.max_norm_deviation, r.max_norm_deviation);
    if (!r.valid) {
      out.valid = false;
      if (out.error.empty()) out.error = r.error;
    }
  }
  return out;
}

DisorderResult disorder_average(const DisorderSpec& spec) {
  if (spec.n_realizations < 1) throw std::invalid_argument("disorder_average: n_realizations < 1");
  const int n = spec.n_realizations;
  std::vector<std::optional<SpinGraph>> graphs(n);
  std::vector<TrajectoryRecord> records(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};

  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        const std::uint64_t s = spec.seed + static_cast<std::uint64_t>(i);
        SpinGraph g = generate_graph(spec.L, spec.r_min, spec.r_max, s, spec.graph_opts);
        if (spec.normalize_to_median) g = g.normalized_to_median();
        records[i] = run_protocol(g, spec.protocol, product_state_x(spec.L), s, spec.run);
        graphs[i].emplace(std::move(g));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int nt = std::clamp(spec.threads, 1, n);
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  DisorderResult out;
  out.mean = mean_record(records);
  out.realizations = std::move(records);
  for (auto& g : graphs) out.graphs.push_back(std::move(*g));
  return out;
}

FidTrace free_induction_decay(const SpinGraph& graph, double dt, double t_max) {
  if (!(dt > 0.0) || !(t_max > 0.0)) throw std::invalid_argument("free_induction_decay: dt, t_max > 0");
  const int L = graph.size();
  const SectorEvolver ev(dipolar_hamiltonian(graph));
  StateVector psi = product_state_x(L);
  FidTrace tr;
  tr.times.push_back(0.0);
  tr.mx.push_back(magnetization(psi).x());
  const double target = tr.mx.front() / std::numbers::e;
  int after_crossing = -1;
  const long steps = static_cast<long>(std::ceil(t_max / dt));
  for (long s = 1; s <= steps; ++s) {
    ev.apply(psi.amplitudes(), dt);
    tr.times.push_back(s * dt);
    tr.mx.push_back(magnetization(psi).x());
    if (after_crossing < 0 && tr.mx.back() <= target) after_crossing = 0;
    if (after_crossing >= 0 && ++after_crossing > 10) break;
  }
  return tr;
}

FidCrossing fid_one_over_e(const FidTrace& trace) {
  FidCrossing out;
  if (trace.mx.size() < 2) {
    out.flagged = true;
    return out;
  }
  const double target = trace.mx.front() / std::numbers::e;
  for (std::size_t i = 1; i < trace.mx.size(); ++i) {
    if (trace.mx[i] > trace.mx[i - 1] + 1e-12) out.flagged = true;
    if (trace.mx[i] <= target) {
      const double y0 = trace.mx[i - 1];
      const double y1 = trace.mx[i];
      const double frac = y0 == y1 ? 0.0 : (y0 - target) / (y0 - y1);
      out.time = trace.times[i - 1] + frac * (trace.times[i] - trace.times[i - 1]);
      return out;
    }
  }
  out.flagged = true;
  return out;
}

}  // namespace spinorbit
