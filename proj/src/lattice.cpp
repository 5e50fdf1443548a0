#include "spinorbit/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "spinorbit/drive.hpp"
#include "spinorbit/rng.hpp"

namespace spinorbit {

SpinGraph::SpinGraph(std::vector<Vec3> positions, Vec3 field_axis, double c_exp, double r_min,
                     double r_max, std::uint64_t seed)
    : positions_(std::move(positions)),
      field_axis_(field_axis.normalized()),
      c_exp_(c_exp),
      r_min_(r_min),
      r_max_(r_max),
      seed_(seed) {
  const int L = size();
  if (L < 1) throw std::invalid_argument("SpinGraph: needs at least one spin");
  couplings_ = Eigen::MatrixXd::Zero(L, L);
  for (int n = 0; n < L; ++n) {
    for (int m = n + 1; m < L; ++m) {
      const double b = dipolar_coupling(positions_[m] - positions_[n], field_axis_, c_exp_);
      couplings_(n, m) = b;
      couplings_(m, n) = b;
    }
  }
}

SpinGraph SpinGraph::with_coupling_constant(double c_exp) const {
  return SpinGraph(positions_, field_axis_, c_exp, r_min_, r_max_, seed_);
}

SpinGraph SpinGraph::normalized_to_median() const {
  const double J = median_coupling(*this, true);
  if (!(J > 0.0)) throw std::invalid_argument("normalized_to_median: median coupling is zero");
  return with_coupling_constant(c_exp_ / J);
}

double dipolar_coupling(const Vec3& r, const Vec3& field_axis, double c_exp) {
  const double dist = r.norm();
  if (!(dist > 0.0)) throw std::invalid_argument("dipolar_coupling: zero-length separation");
  const double cos_beta = r.dot(field_axis) / (dist * field_axis.norm());
  double angular = 3.0 * cos_beta * cos_beta - 1.0;
  // a pair at the magic angle has no secular coupling; do not keep the round-off
  if (std::abs(angular) < 1e-12) angular = 0.0;
  return c_exp * angular / (dist * dist * dist);
}

SpinGraph generate_graph(int L, double r_min, double r_max, std::uint64_t seed,
                         const GraphOptions& opts) {
  if (L < 2) throw std::invalid_argument("generate_graph: L must be >= 2");
  if (!(r_min > 0.0) || !(r_min < r_max)) {
    std::ostringstream msg;
    msg << "generate_graph: need 0 < r_min < r_max (got r_min=" << r_min << ", r_max=" << r_max
        << ")";
    throw std::invalid_argument(msg.str());
  }
  const double side = std::cbrt(static_cast<double>(L)) * 0.5 * (r_min + r_max) * opts.c_pack;
  std::mt19937_64 gen(seed);
  auto propose = [&] {
    return Vec3(uniform_in(gen, 0.0, side), uniform_in(gen, 0.0, side),
                uniform_in(gen, 0.0, side));
  };

  std::vector<Vec3> pos;
  pos.reserve(L);
  pos.push_back(propose());
  long rejections = 0;
  while (static_cast<int>(pos.size()) < L) {
    const Vec3 cand = propose();
    bool too_close = false;
    bool has_neighbor = false;
    for (const auto& p : pos) {
      const double d = (cand - p).norm();
      if (d <= r_min) {
        too_close = true;
        break;
      }
      if (d < r_max) has_neighbor = true;
    }
    if (!too_close && has_neighbor) {
      pos.push_back(cand);
      rejections = 0;
    } else if (++rejections >= opts.max_rejections) {
      std::ostringstream msg;
      msg << "generate_graph: " << opts.max_rejections << " consecutive rejections after placing "
          << pos.size() << " of " << L << " spins (r_min=" << r_min << ", r_max=" << r_max
          << ", box side=" << side << ")";
      throw std::runtime_error(msg.str());
    }
  }
  return SpinGraph(std::move(pos), opts.field_axis, opts.c_exp, r_min, r_max, seed);
}

double median_coupling(const SpinGraph& graph, bool within_rmax) {
  std::vector<double> vals;
  const int L = graph.size();
  for (int n = 0; n < L; ++n)
    for (int m = n + 1; m < L; ++m)
      if (!within_rmax || graph.distance(n, m) < graph.r_max())
        vals.push_back(std::abs(graph.coupling(n, m)));
  if (vals.empty()) return 0.0;
  std::sort(vals.begin(), vals.end());
  const std::size_t mid = vals.size() / 2;
  return vals.size() % 2 ? vals[mid] : 0.5 * (vals[mid - 1] + vals[mid]);
}

double dipolar_energy_scale_sq(const SpinGraph& graph, double alpha) {
  const int L = graph.size();
  double sum = 0.0;
  for (int n = 0; n < L; ++n)
    for (int m = n + 1; m < L; ++m) sum += graph.coupling(n, m) * graph.coupling(n, m);
  const double s = std::sin(alpha);
  return 2.0 * (1.0 - 3.0 * s * s) * sum / L;
}

CouplingScale coupling_scales(const SpinGraph& graph, double alpha, const ScaleOptions& opts) {
  CouplingScale out;
  out.J_median = median_coupling(graph, opts.median_within_rmax);
  out.h_dd_sq = dipolar_energy_scale_sq(graph, alpha);
  out.h_dd = std::sqrt(std::max(out.h_dd_sq, 0.0));
  if (!opts.compute_fid) return out;

  if (!(out.J_median > 0.0)) {
    out.fid_flagged = true;
    return out;
  }
  const double unit = 1.0 / out.J_median;
  const FidTrace trace = free_induction_decay(graph, opts.fid_dt * unit, opts.fid_t_max * unit);
  const FidCrossing crossing = fid_one_over_e(trace);
  out.fid_flagged = crossing.flagged || !crossing.time;
  if (crossing.time && *crossing.time > 0.0) out.J_fid = 1.0 / *crossing.time;
  return out;
}

}  // namespace spinorbit
