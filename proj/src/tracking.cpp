#include "spinorbit/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "spinorbit/rng.hpp"

namespace spinorbit {

namespace {

constexpr double kPi = std::numbers::pi;

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double rss = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  LineFit f;
  if (n < 2) return f;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    f.rss += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - f.rss / syy : 1.0;
  return f;
}

// Box-Muller on two counter-indexed uniforms.
double gaussian(const CounterRng& rng, std::uint64_t i) {
  const double u1 = 1.0 - rng.uniform(2 * i);
  const double u2 = rng.uniform(2 * i + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

}  // namespace

double Envelope::operator()(double t) const {
  if (!std::isfinite(T)) return amplitude;
  return amplitude * std::exp(-std::pow(std::max(t, 0.0) / T, stretch));
}

double wrap_phase(double x) {
  double r = std::remainder(x, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

InductionSeries synthesize_readout(const TrajectoryRecord& truth, double ramp_per_pulse, const Envelope& envelope,
                                   const ReadoutNoise& noise, std::uint64_t seed, bool ramp_known) {
  InductionSeries s;
  const std::size_t n = truth.size();
  s.times = truth.times;
  s.S.resize(n);
  s.phi_raw.resize(n);
  s.tau = n >= 2 ? truth.times[1] - truth.times[0] : 1.0;
  if (ramp_known) s.ramp_per_pulse = ramp_per_pulse;
  const CounterRng rng(seed, kReadoutNoiseStream);
  for (std::size_t j = 0; j < n; ++j) {
    const double t = truth.times[j];
    double S = envelope(t) * std::hypot(truth.mx[j], truth.my[j]);
    if (noise.gaussian_sigma > 0.0) S *= 1.0 + noise.gaussian_sigma * gaussian(rng, j);
    if (noise.mains_amplitude != 0.0)
      S += noise.mains_amplitude * std::sin(2.0 * kPi * noise.mains_freq * t + noise.mains_phase);
    s.S[j] = std::max(S, 0.0);
    s.phi_raw[j] = wrap_phase(std::atan2(truth.my[j], truth.mx[j]) + static_cast<double>(j) * ramp_per_pulse);
  }
  return s;
}

std::vector<double> unwrap_phase(const std::vector<double>& wrapped, double margin, std::vector<long>* ambiguous) {
  std::vector<double> out(wrapped.size());
  if (wrapped.empty()) return out;
  out[0] = wrapped[0];
  for (std::size_t j = 1; j < wrapped.size(); ++j) {
    const double step = wrap_phase(wrapped[j] - wrapped[j - 1]);
    if (ambiguous && std::abs(step) > kPi - margin) ambiguous->push_back(static_cast<long>(j));
    out[j] = out[j - 1] + step;
  }
  return out;
}

DressedPhase remove_phase_ramp(const InductionSeries& series, const InductionSeries* reference,
                               const PhaseOptions& opts) {
  const std::size_t n = series.size();
  if (n < 16) throw std::invalid_argument("remove_phase_ramp: series needs at least 16 samples");
  DressedPhase out;
  out.unwrapped = unwrap_phase(series.phi_raw, opts.ambiguity_margin, &out.ambiguous);

  if (series.ramp_per_pulse && !reference) {
    out.slope = *series.ramp_per_pulse;
    out.offset = 0.0;
  } else {
    const InductionSeries& src = reference ? *reference : series;
    const std::vector<double> uw = reference ? unwrap_phase(src.phi_raw, opts.ambiguity_margin, nullptr) : out.unwrapped;
    const long last = opts.fit_last < 0 ? static_cast<long>(uw.size()) : std::min<long>(opts.fit_last, uw.size());
    const long first = std::clamp<long>(opts.fit_first, 0, std::max<long>(last - 2, 0));
    std::vector<double> x, y;
    for (long j = first; j < last; ++j) {
      x.push_back(static_cast<double>(j));
      y.push_back(uw[j]);
    }
    const LineFit f = fit_line(x, y);
    out.slope = f.slope;
    out.offset = f.intercept;
  }
  out.phi.resize(n);
  for (std::size_t j = 0; j < n; ++j) out.phi[j] = out.unwrapped[j] - out.offset - out.slope * static_cast<double>(j);
  // keep the result on the principal branch nearest zero
  for (double& p : out.phi) p = wrap_phase(p);
  return out;
}

Decomposition decompose_decay(const std::vector<double>& S, int window_len) {
  if (window_len < 1) throw std::invalid_argument("decompose_decay: window_len >= 1");
  const long n = static_cast<long>(S.size());
  Decomposition d;
  d.S_dec.resize(n);
  d.S_osc.resize(n);
  std::vector<double> prefix(n + 1, 0.0);
  for (long i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + S[i];
  const long back = (window_len - 1) / 2;
  const long fwd = window_len - 1 - back;
  for (long i = 0; i < n; ++i) {
    const long a = std::max<long>(0, i - back);
    const long b = std::min<long>(n - 1, i + fwd);
    d.S_dec[i] = (prefix[b + 1] - prefix[a]) / static_cast<double>(b - a + 1);
    d.S_osc[i] = S[i] - d.S_dec[i];
  }
  return d;
}

BlochTrajectory reconstruct_bloch(const InductionSeries& series, const DressedPhase& phase,
                                  const ReconstructOptions& opts) {
  const std::size_t n = series.size();
  if (phase.phi.size() != n) throw std::invalid_argument("reconstruct_bloch: phase length differs from series");
  BlochTrajectory b;
  b.times = series.times;
  const Decomposition d = decompose_decay(series.S, opts.window_len);
  b.S_dec = d.S_dec;
  b.S_osc = d.S_osc;
  b.delta0 = n ? opts.delta0_fraction * b.S_dec[0] : 0.0;
  if (opts.norm_model) {
    if (opts.norm_model->size() != n) throw std::invalid_argument("reconstruct_bloch: norm model length");
    b.norm_model = *opts.norm_model;
  } else {
    b.norm_model.resize(n);
    for (std::size_t j = 0; j < n; ++j) b.norm_model[j] = b.S_dec[j] + b.delta0;
  }
  b.Ix.resize(n);
  b.Iy.resize(n);
  b.Iz_abs.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    b.Ix[j] = series.S[j] * std::cos(phase.phi[j]);
    b.Iy[j] = series.S[j] * std::sin(phase.phi[j]);
    const double rad = b.norm_model[j] * b.norm_model[j] - series.S[j] * series.S[j];
    if (rad < 0.0) ++b.clamped;
    b.Iz_abs[j] = std::sqrt(std::max(0.0, rad));
  }
  b.clamp_warning = n > 0 && b.clamped > 0.05 * static_cast<double>(n);
  return b;
}

LifetimeFit fit_lifetime(const std::vector<double>& times, const std::vector<double>& S_dec, StretchModel model,
                         long first, long last) {
  if (times.size() != S_dec.size()) throw std::invalid_argument("fit_lifetime: length mismatch");
  LifetimeFit out;
  last = last < 0 ? static_cast<long>(S_dec.size()) : std::min<long>(last, S_dec.size());
  first = std::max<long>(first, 0);
  for (long j = first; j < last; ++j)
    if (!(S_dec[j] > 0.0)) {
      last = j;
      out.truncated = true;
      break;
    }
  out.first = first;
  out.last = last;
  if (last - first < 3) throw std::invalid_argument("fit_lifetime: fewer than 3 positive samples in the window");

  std::vector<double> logS;
  for (long j = first; j < last; ++j) logS.push_back(std::log(S_dec[j]));
  auto solve = [&](double stretch) {
    std::vector<double> x;
    for (long j = first; j < last; ++j) x.push_back(std::pow(std::max(times[j], 0.0), stretch));
    return fit_line(x, logS);
  };
  auto finish = [&](double stretch, const LineFit& f) {
    out.stretch = stretch;
    out.amplitude = std::exp(f.intercept);
    out.r_squared = f.r2;
    out.residual_rms = std::sqrt(f.rss / static_cast<double>(logS.size()));
    const double scale = std::abs(f.intercept) + 1.0;
    if (f.slope >= -1e-12 * scale) {
      out.divergent = true;
      out.T2_prime = std::numeric_limits<double>::infinity();
    } else {
      out.T2_prime = std::pow(-1.0 / f.slope, 1.0 / stretch);
    }
  };

  if (model == StretchModel::FixedHalf) {
    finish(0.5, solve(0.5));
    return out;
  }
  double best = 0.5, best_rss = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 60; ++i) {
    const double s = 0.1 + 0.05 * i;
    const double r = solve(s).rss;
    if (r < best_rss) {
      best_rss = r;
      best = s;
    }
  }
  double a = std::max(0.05, best - 0.05), b = best + 0.05;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 100; ++it) {
    const double c = b - gr * (b - a), d = a + gr * (b - a);
    if (solve(c).rss < solve(d).rss) b = d;
    else a = c;
  }
  const double s = 0.5 * (a + b);
  finish(s, solve(s));
  return out;
}

std::vector<ManifoldSeries> manifold_series(const std::vector<Vec3>& samples, int N, long first, long last) {
  if (N < 1) throw std::invalid_argument("manifold_series: N >= 1");
  last = last < 0 ? static_cast<long>(samples.size()) : std::min<long>(last, samples.size());
  first = std::max<long>(first, 0);
  if (last - first < 2L * N) throw std::invalid_argument("manifold_series: need at least 2 N samples");
  std::vector<ManifoldSeries> out(N);
  for (int k = 0; k < N; ++k) out[k].k = k;
  for (long i = first; i < last; ++i) {
    auto& m = out[i % N];
    m.indices.push_back(i);
    m.samples.push_back(samples[i]);
    m.mean += samples[i];
  }
  for (auto& m : out) {
    m.mean /= static_cast<double>(m.samples.size());
    for (const auto& s : m.samples) m.rms += (s - m.mean).squaredNorm();
    m.rms = std::sqrt(m.rms / static_cast<double>(m.samples.size()));
  }
  return out;
}

std::vector<ManifoldSeries> manifold_series(const TrajectoryRecord& record, int N, long first, long last) {
  std::vector<Vec3> s(record.size());
  for (std::size_t i = 0; i < record.size(); ++i) s[i] = record.sample(i);
  return manifold_series(s, N, first, last);
}

PrecessionFit fit_manifold_precession(const std::vector<Vec3>& samples, const std::vector<double>& times, int N,
                                      const Vec3& axis, long first, long last) {
  if (samples.size() != times.size()) throw std::invalid_argument("fit_manifold_precession: length mismatch");
  const auto ms = manifold_series(samples, N, first, last);
  const Vec3 a = axis.normalized();
  const Vec3 e1 = (std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).cross(a).normalized().cross(a).normalized();
  const Vec3 e2 = a.cross(e1);
  Vec3 centre = Vec3::Zero();
  long count = 0;
  for (const auto& m : ms) {
    for (const auto& s : m.samples) centre += s;
    count += static_cast<long>(m.samples.size());
  }
  centre /= static_cast<double>(count);

  PrecessionFit fit;
  for (const auto& m : ms) {
    std::vector<double> ang, t;
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
      const Vec3 p = m.samples[i] - centre;
      ang.push_back(std::atan2(p.dot(e2), p.dot(e1)));
      t.push_back(times[m.indices[i]]);
    }
    const std::vector<double> uw = unwrap_phase(ang, 0.0, nullptr);
    fit.per_manifold.push_back(fit_line(t, uw).slope);
  }
  double s = 0.0;
  for (double r : fit.per_manifold) s += r;
  fit.rate = s / static_cast<double>(fit.per_manifold.size());
  return fit;
}

}  // namespace spinorbit
