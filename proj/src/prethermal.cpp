#include "spinorbit/prethermal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace spinorbit {

double energy_density(double mu, double delta, double Omega, double delta_theta, double tau) {
  if (!(Omega > 0.0)) throw std::invalid_argument("energy_density: Omega must be positive");
  return mu * std::abs(delta / std::hypot(delta, Omega) + delta_theta / tau);
}

double effective_coupling_scale_sq(const SpinGraph& graph, const DriveProtocol& protocol,
                                   const ProtocolSegment& segment, const FloquetOptions& opts) {
  const CommensurateAngle ang =
      commensurate_angle(protocol.applied_angle(), segment.N, opts.max_angle_deviation);
  const Mat3 D = averaged_dipolar_tensor(protocol.alpha(), ang);
  const double duty = protocol.t_acq / protocol.tau;
  const int L = graph.size();
  double sum = 0.0;
  for (int n = 0; n < L; ++n)
    for (int m = n + 1; m < L; ++m) sum += graph.coupling(n, m) * graph.coupling(n, m);
  return duty * duty * sum * D.squaredNorm() / (4.0 * L);
}

PlateauPrediction plateau_from_field(const EmergentFieldFamily& field, double h, double h_dd, double mu) {
  PlateauPrediction p;
  p.mu = mu;
  p.h_dd = h_dd;
  p.h_used = h;
  p.field = field;
  p.n_hat = Vec3(std::cos(field.alpha), 0.0, std::sin(field.alpha));
  for (const Vec3& w : field.w_rot) {
    const double eps = mu * p.n_hat.dot(w);
    const double beta = -eps / (h * h + w.squaredNorm());
    p.w_k.push_back(w);
    p.epsilon_k.push_back(eps);
    p.beta_k.push_back(beta);
    p.M_k.push_back(-0.5 * beta * w);
  }
  const Vec3& M0 = p.M_k.front();
  p.center = p.n_hat * p.n_hat.dot(M0);
  p.ell = (M0 - p.center).norm();
  const double c = p.center.norm();
  if (c == 0.0) {
    p.Phi = std::numbers::pi;
    p.phi_flagged = true;
  } else {
    p.Phi = 2.0 * std::atan(p.ell / c);
  }
  return p;
}

PlateauPrediction plateau_magnetization(const SpinGraph& graph, const DriveProtocol& protocol,
                                        const ProtocolSegment& segment, const PlateauOptions& opts) {
  const EmergentFieldFamily field = emergent_field(protocol, segment, opts.floquet);
  const double h_dd = std::sqrt(std::max(0.0, dipolar_energy_scale_sq(graph, protocol.alpha())));
  double h = 0.0;
  if (opts.h_override) h = *opts.h_override;
  else if (opts.scale == CouplingScaleChoice::Lattice) h = h_dd;
  else h = std::sqrt(effective_coupling_scale_sq(graph, protocol, segment, opts.floquet));
  return plateau_from_field(field, h, h_dd, opts.mu);
}

std::vector<SaturationPoint> saturation_curve(const SpinGraph& graph, const DriveProtocol& protocol,
                                              const ProtocolSegment& segment, const std::vector<double>& B_values,
                                              const PlateauOptions& opts) {
  if (!std::is_sorted(B_values.begin(), B_values.end()))
    throw std::invalid_argument("saturation_curve: B values must be ascending");
  std::vector<SaturationPoint> out;
  for (double B : B_values) {
    ProtocolSegment seg = segment;
    seg.ac_amplitude = B;
    const PlateauPrediction p = plateau_magnetization(graph, protocol, seg, opts);
    out.push_back({B, p.ell, p.Phi});
  }
  return out;
}

SaturationFit fit_saturation(const std::vector<SaturationPoint>& points) {
  if (points.size() < 3) throw std::invalid_argument("fit_saturation: need at least 3 points");
  auto solve = [&](double h, double* a_out) {
    double sgg = 0.0, slg = 0.0;
    for (const auto& p : points) {
      const double g = p.B / (1.0 + (p.B / h) * (p.B / h));
      sgg += g * g;
      slg += p.ell * g;
    }
    const double a = sgg > 0.0 ? slg / sgg : 0.0;
    double r = 0.0;
    for (const auto& p : points) {
      const double g = p.B / (1.0 + (p.B / h) * (p.B / h));
      r += (p.ell - a * g) * (p.ell - a * g);
    }
    if (a_out) *a_out = a;
    return r;
  };
  double bmin = std::numeric_limits<double>::infinity(), bmax = 0.0;
  for (const auto& p : points)
    if (p.B > 0.0) {
      bmin = std::min(bmin, p.B);
      bmax = std::max(bmax, p.B);
    }
  if (!(bmax > 0.0)) throw std::invalid_argument("fit_saturation: no positive B");
  // coarse scan then golden-section refinement in log h
  double lo = std::log(bmin) - 4.0, hi = std::log(bmax) + 4.0;
  const int n_scan = 400;
  double best_x = lo, best_r = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n_scan; ++i) {
    const double x = lo + (hi - lo) * i / n_scan;
    const double r = solve(std::exp(x), nullptr);
    if (r < best_r) {
      best_r = r;
      best_x = x;
    }
  }
  double a = best_x - (hi - lo) / n_scan, b = best_x + (hi - lo) / n_scan;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  for (int it = 0; it < 200; ++it) {
    if (solve(std::exp(c), nullptr) < solve(std::exp(d), nullptr)) b = d;
    else a = c;
    c = b - gr * (b - a);
    d = a + gr * (b - a);
  }
  SaturationFit fit;
  fit.h = std::exp(0.5 * (a + b));
  fit.rms = std::sqrt(solve(fit.h, &fit.a) / points.size());
  return fit;
}

QuenchPrediction quench_predictions(const PlateauPrediction& before, const PlateauPrediction& after,
                                    bool after_closed, int k) {
  const int N = static_cast<int>(before.w_k.size());
  if (N == 0 || after.w_k.size() != before.w_k.size())
    throw std::invalid_argument("quench_predictions: mismatched families");
  const int kk = ((k % N) + N) % N;
  QuenchPrediction q;
  q.beta_before = before.beta_k[kk];
  q.closing = after_closed;
  if (after_closed) {
    q.beta_after = q.beta_before;
    q.gamma = 0.0;
  } else {
    const double h2 = after.h_used * after.h_used;
    const Vec3& wi = before.w_k[kk];
    const Vec3& wf = after.w_k[kk];
    q.beta_after = q.beta_before * (h2 + wi.dot(wf)) / (h2 + wf.squaredNorm());
  }
  q.magnetization_ratio = q.beta_before != 0.0 ? q.beta_after / q.beta_before : 1.0;
  q.sigma = 1.0 - q.magnetization_ratio;
  return q;
}

std::vector<Vec3> predicted_samples(const PlateauPrediction& pred, const DriveProtocol& protocol) {
  const int N = static_cast<int>(pred.M_k.size());
  const Mat3 R = rotation_matrix(protocol.pulse_axis(), protocol.applied_angle());
  std::vector<Vec3> out(N);
  for (int c = 0; c < N; ++c) out[c] = R * pred.M_k[((c - 1) % N + N) % N];
  return out;
}

namespace {

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

double angle_between(const Vec3& a, const Vec3& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 180.0;
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

PlateauExtraction extract_plateaus(const TrajectoryRecord& record, int N, long first, long last,
                                   const std::vector<Vec3>* predictions) {
  if (N < 1) throw std::invalid_argument("extract_plateaus: N >= 1");
  last = std::min<long>(last, static_cast<long>(record.size()));
  first = std::max<long>(first, 0);
  if (last - first < 20L * N)
    throw std::invalid_argument("extract_plateaus: window must hold at least 20 N samples");
  PlateauExtraction ex;
  ex.N = N;
  ex.first = first;
  ex.last = last;
  ex.centroids.assign(N, Vec3::Zero());
  ex.dispersion.assign(N, 0.0);
  std::vector<long> count(N, 0);
  for (long i = first; i < last; ++i) {
    ex.centroids[i % N] += record.sample(i);
    ++count[i % N];
  }
  for (int c = 0; c < N; ++c) ex.centroids[c] /= static_cast<double>(count[c]);
  for (long i = first; i < last; ++i) ex.dispersion[i % N] += (record.sample(i) - ex.centroids[i % N]).squaredNorm();
  for (int c = 0; c < N; ++c) ex.dispersion[c] = std::sqrt(ex.dispersion[c] / count[c]);
  ex.max_dispersion = *std::max_element(ex.dispersion.begin(), ex.dispersion.end());

  ex.min_separation = std::numeric_limits<double>::infinity();
  std::vector<int> parent(N);
  std::iota(parent.begin(), parent.end(), 0);
  for (int a = 0; a < N; ++a)
    for (int b = a + 1; b < N; ++b) {
      const double d = (ex.centroids[a] - ex.centroids[b]).norm();
      ex.min_separation = std::min(ex.min_separation, d);
      if (d < 2.0 * std::max(ex.dispersion[a], ex.dispersion[b]))
        parent[find_root(parent, a)] = find_root(parent, b);
    }
  ex.stable = N == 1 || ex.max_dispersion <= 0.5 * ex.min_separation;
  for (int c = 0; c < N; ++c) ex.manifold_count += find_root(parent, c) == c;

  for (const Vec3& c : ex.centroids) ex.centre += c;
  ex.centre /= N;
  if (N >= 3) {
    Eigen::MatrixXd X(N, 3);
    for (int c = 0; c < N; ++c) X.row(c) = (ex.centroids[c] - ex.centre).transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeFullV);
    ex.plane_normal = svd.matrixV().col(2);
    if (ex.plane_normal.dot(ex.centre) < 0.0) ex.plane_normal = -ex.plane_normal;
  }

  if (predictions) {
    if (static_cast<int>(predictions->size()) != N)
      throw std::invalid_argument("extract_plateaus: prediction count differs from N");
    double best = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < N; ++s) {
      double score = 0.0;
      for (int c = 0; c < N; ++c) {
        const Vec3& p = (*predictions)[(c + s) % N];
        const double den = ex.centroids[c].norm() * p.norm();
        score += den > 0.0 ? ex.centroids[c].dot(p) / den : 0.0;
      }
      if (score > best + 1e-12) {
        best = score;
        ex.shift = s;
      }
    }
    for (int c = 0; c < N; ++c) ex.angle_deg.push_back(angle_between(ex.centroids[c], (*predictions)[(c + ex.shift) % N]));
  }
  return ex;
}

PolygonGeometry polygon_geometry(const std::vector<Vec3>& centroids, const Vec3& n_hat) {
  PolygonGeometry g;
  if (centroids.empty()) return g;
  const Vec3 n = n_hat.normalized();
  Vec3 centre = Vec3::Zero();
  for (const Vec3& c : centroids) centre += c;
  centre /= static_cast<double>(centroids.size());
  g.along = n.dot(centre);
  for (const Vec3& c : centroids) {
    const Vec3 d = c - centre;
    g.ell += (d - n * n.dot(d)).norm();
    g.magnitude += c.norm();
  }
  g.ell /= static_cast<double>(centroids.size());
  g.magnitude /= static_cast<double>(centroids.size());
  g.Phi = 2.0 * std::atan2(g.ell, std::abs(g.along));
  return g;
}

PlateauHalfLife plateau_half_life(const TrajectoryRecord& record, long ref_first, long ref_last, int smoothing) {
  const long n = static_cast<long>(record.size());
  if (ref_first < 0 || ref_last <= ref_first || ref_last > n)
    throw std::invalid_argument("plateau_half_life: reference window outside the record");
  if (smoothing < 1) throw std::invalid_argument("plateau_half_life: smoothing >= 1");
  std::vector<double> prefix(n + 1, 0.0);
  for (long i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + record.sample(i).norm();
  PlateauHalfLife out;
  out.plateau = (prefix[ref_last] - prefix[ref_first]) / static_cast<double>(ref_last - ref_first);
  const long half = smoothing / 2;
  auto smooth = [&](long i) {
    const long a = std::max<long>(0, i - half), b = std::min<long>(n, i - half + smoothing);
    return (prefix[b] - prefix[a]) / static_cast<double>(b - a);
  };
  const double target = 0.5 * out.plateau;
  double prev = smooth(ref_last - 1);
  for (long i = ref_last; i < n; ++i) {
    const double cur = smooth(i);
    if (cur < target) {
      const double frac = prev > cur ? (prev - target) / (prev - cur) : 1.0;
      out.pulse = static_cast<double>(i - 1) + frac;
      out.time = record.times[i - 1] + frac * (record.times[i] - record.times[i - 1]);
      break;
    }
    prev = cur;
  }
  return out;
}

}  // namespace spinorbit
