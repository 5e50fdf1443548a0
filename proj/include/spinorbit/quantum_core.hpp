#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>
#include <functional>
#include <vector>

#include "spinorbit/lattice.hpp"

// Basis convention: spin j is bit j of the computational-basis index (spin 0 is
// the least-significant bit); bit value 0 is |up> (I_z = +1/2). Spin operators
// are I = sigma / 2.

namespace spinorbit {

using cplx = std::complex<double>;
using Mat3 = Eigen::Matrix3d;

enum class Axis { X, Y, Z };

inline std::size_t hilbert_dim(int L) { return std::size_t{1} << L; }

class StateVector {
 public:
  StateVector(int L, Eigen::VectorXcd amplitudes);

  int num_spins() const { return L_; }
  Eigen::Index dim() const { return amp_.size(); }
  const Eigen::VectorXcd& amplitudes() const { return amp_; }
  Eigen::VectorXcd& amplitudes() { return amp_; }
  double norm() const { return amp_.norm(); }

 private:
  int L_;
  Eigen::VectorXcd amp_;
};

class SpinOperator {
 public:
  using Sparse = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

  SpinOperator(int L, Sparse matrix, bool hermitian);

  int num_spins() const { return L_; }
  Eigen::Index dim() const { return m_.rows(); }
  const Sparse& matrix() const { return m_; }
  bool hermitian() const { return hermitian_; }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const { return m_ * v; }
  Eigen::MatrixXcd dense() const;
  /// Upper bound on the spectral norm (max absolute row sum).
  double norm_bound() const;

  SpinOperator operator+(const SpinOperator& other) const;
  SpinOperator operator*(double s) const;

 private:
  int L_;
  Sparse m_;
  bool hermitian_;
};

/// One two-spin term sum_ab D_ab I_a^n I_b^m.
struct PairTensor {
  int n;
  int m;
  Mat3 D;
};

SpinOperator collective_operator(int L, Axis axis);
/// h . I with I the collective spin.
SpinOperator field_operator(int L, const Vec3& h);
SpinOperator pair_tensor_operator(int L, const std::vector<PairTensor>& terms);
/// sum_{n<m} b_nm (3 I_nz I_mz - I_n . I_m); real symmetric, conserves total I_z.
SpinOperator dipolar_hamiltonian(const SpinGraph& graph);
SpinOperator identity_operator(int L);

StateVector product_state_x(int L);
/// Product state with every spin along the given unit vector.
StateVector product_state_along(int L, const Vec3& direction);

/// <psi|A|psi> for hermitian A; throws on dimension mismatch or a non-negligible
/// imaginary part.
double expectation(const StateVector& state, const SpinOperator& op);

/// (<I_x>, <I_y>, <I_z>) / L without building operators.
Vec3 magnetization(const Eigen::VectorXcd& amplitudes, int L);
inline Vec3 magnetization(const StateVector& s) { return magnetization(s.amplitudes(), s.num_spins()); }

struct KrylovOptions {
  double tol = 1e-12;
  int max_dim = 40;
  long max_substeps = 1000000;
};

using MatVec = std::function<void(const Eigen::VectorXcd& in, Eigen::VectorXcd& out)>;

/// exp(-i t H) v for hermitian H given only through its action. Lanczos with full
/// reorthogonalization; time steps are split until the a-posteriori error estimate
/// per step drops below tol. Throws NumericError when the substep cap is hit.
Eigen::VectorXcd krylov_expm_apply(const MatVec& H, const Eigen::VectorXcd& v, double t,
                                   const KrylovOptions& opts = {});

StateVector propagate(const StateVector& state, const SpinOperator& H, double t,
                      const KrylovOptions& opts = {});

/// exp(-i t H) from a dense hermitian eigendecomposition.
Eigen::MatrixXcd dense_expm_hermitian(const Eigen::MatrixXcd& H, double t);

/// SO(3) matrix of the right-handed rotation by angle about a unit axis.
Mat3 rotation_matrix(const Vec3& axis, double angle);

/// Uniform product unitary u^{(x)L}; with u = exp(-i angle n.sigma/2) it satisfies
/// U^dag I_a U = sum_b R_ab I_b, R = rotation_matrix(n, angle).
class SpinRotation {
 public:
  SpinRotation(int L, const Eigen::Matrix2cd& single_spin);
  static SpinRotation about_axis(int L, const Vec3& axis, double angle);

  int num_spins() const { return L_; }
  const Eigen::Matrix2cd& single_spin() const { return u_; }
  void apply(Eigen::VectorXcd& amplitudes) const;
  void apply(StateVector& s) const { apply(s.amplitudes()); }
  SpinRotation inverse() const { return SpinRotation(L_, u_.adjoint()); }
  SpinRotation power(int p) const;
  Eigen::MatrixXcd dense() const;

 private:
  int L_;
  Eigen::Matrix2cd u_;
};

/// Exact propagator for a real symmetric operator that conserves total I_z,
/// through per-magnetization-sector eigendecomposition. apply() evaluates
/// exp(-i t [H + z_field I_z]) for any t at O(sum_s dim_s^2) cost.
class SectorEvolver {
 public:
  explicit SectorEvolver(const SpinOperator& H);

  int num_spins() const { return L_; }
  void apply(Eigen::VectorXcd& amplitudes, double t, double z_field = 0.0) const;
  Eigen::MatrixXcd dense(double t, double z_field = 0.0) const;
  double spectral_radius() const { return spectral_radius_; }

 private:
  struct Sector {
    std::vector<Eigen::Index> indices;
    double mz;
    Eigen::MatrixXd vectors;
    Eigen::VectorXd values;
  };
  int L_;
  std::vector<Sector> sectors_;
  double spectral_radius_ = 0.0;
};

}  // namespace spinorbit
