#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

namespace spinorbit {

using Vec3 = Eigen::Vector3d;

struct GraphOptions {
  double c_exp = 1.0;           // coupling prefactor, simulation units by default
  double c_pack = 1.5;          // bounding-box packing factor
  long max_rejections = 100000; // consecutive rejections before giving up
  Vec3 field_axis = Vec3::UnitZ();
};

/// Positions of L spins plus their secular dipolar couplings b_nm.
/// Positions are canonical; couplings are always derived from them.
class SpinGraph {
 public:
  SpinGraph(std::vector<Vec3> positions, Vec3 field_axis, double c_exp, double r_min,
            double r_max, std::uint64_t seed);

  int size() const { return static_cast<int>(positions_.size()); }
  const std::vector<Vec3>& positions() const { return positions_; }
  const Eigen::MatrixXd& couplings() const { return couplings_; }
  double coupling(int n, int m) const { return couplings_(n, m); }
  const Vec3& field_axis() const { return field_axis_; }
  double c_exp() const { return c_exp_; }
  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  std::uint64_t seed() const { return seed_; }

  double distance(int n, int m) const { return (positions_[n] - positions_[m]).norm(); }

  /// Same geometry, couplings rescaled by a new prefactor.
  SpinGraph with_coupling_constant(double c_exp) const;
  /// Rescales c_exp so that the median nearest-shell coupling equals 1.
  SpinGraph normalized_to_median() const;

 private:
  std::vector<Vec3> positions_;
  Vec3 field_axis_;
  double c_exp_;
  double r_min_;
  double r_max_;
  std::uint64_t seed_;
  Eigen::MatrixXd couplings_;
};

/// Accept/reject construction: each proposed spin must keep every distance
/// above r_min and have at least one partner closer than r_max.
SpinGraph generate_graph(int L, double r_min, double r_max, std::uint64_t seed,
                         const GraphOptions& opts = {});

/// c_exp (3 cos^2 beta - 1) / |r|^3, beta the angle between r and the field axis.
double dipolar_coupling(const Vec3& r, const Vec3& field_axis, double c_exp);

struct CouplingScale {
  double J_median = 0.0;
  std::optional<double> J_fid;  // empty when the FID never reaches 1/e
  double h_dd = 0.0;            // sqrt(max(h_dd_sq, 0))
  double h_dd_sq = 0.0;         // signed; negative beyond the magic angle
  bool fid_flagged = false;     // non-monotone decay before the crossing, or no crossing
};

struct ScaleOptions {
  bool median_within_rmax = true;
  bool compute_fid = true;
  double fid_dt = 0.01;    // in units of 1/J_median
  double fid_t_max = 50.0; // in units of 1/J_median
};

double median_coupling(const SpinGraph& graph, bool within_rmax = true);

/// 2 (1 - 3 sin^2 alpha) sum_{n<m} b_nm^2 / L
double dipolar_energy_scale_sq(const SpinGraph& graph, double alpha);

CouplingScale coupling_scales(const SpinGraph& graph, double alpha, const ScaleOptions& opts = {});

}  // namespace spinorbit
