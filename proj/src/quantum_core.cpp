#include "spinorbit/quantum_core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "spinorbit/errors.hpp"

#include <unsupported/Eigen/KroneckerProduct>

namespace spinorbit {

namespace {

using Triplet = Eigen::Triplet<cplx>;

const cplx kI(0.0, 1.0);

// Spin-1/2 matrices in the (up, down) = (bit 0, bit 1) basis.
Eigen::Matrix2cd spin_matrix(int a) {
  Eigen::Matrix2cd s;
  switch (a) {
    case 0: s << 0.0, 0.5, 0.5, 0.0; break;
    case 1: s << 0.0, -0.5 * kI, 0.5 * kI, 0.0; break;
    default: s << 0.5, 0.0, 0.0, -0.5; break;
  }
  return s;
}

void check_spin_count(int L) {
  if (L < 1 || L > 26) throw std::invalid_argument("spin count out of range [1, 26]");
}

// Adds a two-site operator M (local index = 2*bit_n + bit_m) acting on spins n, m.
void embed_two_site(int L, int n, int m, const Eigen::Matrix4cd& M, std::vector<Triplet>& out) {
  const std::size_t dim = hilbert_dim(L);
  const std::size_t bn = std::size_t{1} << n;
  const std::size_t bm = std::size_t{1} << m;
  for (std::size_t col = 0; col < dim; ++col) {
    const int lc = 2 * static_cast<int>((col & bn) != 0) + static_cast<int>((col & bm) != 0);
    const std::size_t base = col & ~(bn | bm);
    for (int lr = 0; lr < 4; ++lr) {
      const cplx v = M(lr, lc);
      if (v == cplx(0.0)) continue;
      const std::size_t row = base | ((lr & 2) ? bn : 0) | ((lr & 1) ? bm : 0);
      out.emplace_back(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col), v);
    }
  }
}

void embed_one_site(int L, int n, const Eigen::Matrix2cd& A, std::vector<Triplet>& out) {
  const std::size_t dim = hilbert_dim(L);
  const std::size_t bn = std::size_t{1} << n;
  for (std::size_t col = 0; col < dim; ++col) {
    const int lc = (col & bn) ? 1 : 0;
    for (int lr = 0; lr < 2; ++lr) {
      const cplx v = A(lr, lc);
      if (v == cplx(0.0)) continue;
      const std::size_t row = lr ? (col | bn) : (col & ~bn);
      out.emplace_back(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col), v);
    }
  }
}

SpinOperator from_triplets(int L, const std::vector<Triplet>& t, bool hermitian) {
  const auto dim = static_cast<Eigen::Index>(hilbert_dim(L));
  SpinOperator::Sparse m(dim, dim);
  m.setFromTriplets(t.begin(), t.end());
  m.prune(cplx(0.0), 0.0);
  m.makeCompressed();
  return SpinOperator(L, std::move(m), hermitian);
}

}  // namespace

StateVector::StateVector(int L, Eigen::VectorXcd amplitudes) : L_(L), amp_(std::move(amplitudes)) {
  check_spin_count(L);
  if (static_cast<std::size_t>(amp_.size()) != hilbert_dim(L))
    throw std::invalid_argument("StateVector: amplitude length must be 2^L");
}

SpinOperator::SpinOperator(int L, Sparse matrix, bool hermitian)
    : L_(L), m_(std::move(matrix)), hermitian_(hermitian) {
  check_spin_count(L);
  if (static_cast<std::size_t>(m_.rows()) != hilbert_dim(L) || m_.rows() != m_.cols())
    throw std::invalid_argument("SpinOperator: matrix must be 2^L x 2^L");
}

Eigen::MatrixXcd SpinOperator::dense() const {
  if (L_ > 12) throw std::invalid_argument("SpinOperator::dense: refusing L > 12");
  return Eigen::MatrixXcd(m_);
}

double SpinOperator::norm_bound() const {
  double best = 0.0;
  for (Eigen::Index r = 0; r < m_.outerSize(); ++r) {
    double row = 0.0;
    for (Sparse::InnerIterator it(m_, r); it; ++it) row += std::abs(it.value());
    best = std::max(best, row);
  }
  return best;
}

SpinOperator SpinOperator::operator+(const SpinOperator& other) const {
  if (other.L_ != L_) throw std::invalid_argument("SpinOperator: spin count mismatch");
  Sparse sum = m_ + other.m_;
  return SpinOperator(L_, std::move(sum), hermitian_ && other.hermitian_);
}

SpinOperator SpinOperator::operator*(double s) const {
  Sparse scaled = m_ * cplx(s);
  return SpinOperator(L_, std::move(scaled), hermitian_);
}

SpinOperator collective_operator(int L, Axis axis) {
  check_spin_count(L);
  const int a = axis == Axis::X ? 0 : axis == Axis::Y ? 1 : 2;
  const Eigen::Matrix2cd s = spin_matrix(a);
  std::vector<Triplet> t;
  for (int n = 0; n < L; ++n) embed_one_site(L, n, s, t);
  return from_triplets(L, t, true);
}

SpinOperator field_operator(int L, const Vec3& h) {
  check_spin_count(L);
  const Eigen::Matrix2cd s = h.x() * spin_matrix(0) + h.y() * spin_matrix(1) + h.z() * spin_matrix(2);
  std::vector<Triplet> t;
  for (int n = 0; n < L; ++n) embed_one_site(L, n, s, t);
  return from_triplets(L, t, true);
}

SpinOperator pair_tensor_operator(int L, const std::vector<PairTensor>& terms) {
  check_spin_count(L);
  std::vector<Triplet> t;
  for (const auto& term : terms) {
    if (term.n == term.m || term.n < 0 || term.m < 0 || term.n >= L || term.m >= L)
      throw std::invalid_argument("pair_tensor_operator: invalid spin pair");
    Eigen::Matrix4cd M = Eigen::Matrix4cd::Zero();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (term.D(a, b) != 0.0)
          M += term.D(a, b) * Eigen::kroneckerProduct(spin_matrix(a), spin_matrix(b));
    embed_two_site(L, term.n, term.m, M, t);
  }
  return from_triplets(L, t, true);
}

SpinOperator dipolar_hamiltonian(const SpinGraph& graph) {
  const int L = graph.size();
  check_spin_count(L);
  const std::size_t dim = hilbert_dim(L);
  std::vector<Triplet> t;
  std::vector<double> diag(dim, 0.0);
  for (int n = 0; n < L; ++n) {
    for (int m = n + 1; m < L; ++m) {
      const double b = graph.coupling(n, m);
      if (b == 0.0) continue;
      const std::size_t bn = std::size_t{1} << n;
      const std::size_t bm = std::size_t{1} << m;
      for (std::size_t i = 0; i < dim; ++i) {
        const bool up_n = !(i & bn);
        const bool up_m = !(i & bm);
        // 3 IzIz - I.I = 2 IzIz - (I+I- + I-I+)/2
        diag[i] += (up_n == up_m) ? 0.5 * b : -0.5 * b;
        if (up_n != up_m)
          t.emplace_back(static_cast<Eigen::Index>(i ^ (bn | bm)), static_cast<Eigen::Index>(i),
                         cplx(-0.5 * b));
      }
    }
  }
  for (std::size_t i = 0; i < dim; ++i)
    if (diag[i] != 0.0)
      t.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), cplx(diag[i]));
  return from_triplets(L, t, true);
}

SpinOperator identity_operator(int L) {
  check_spin_count(L);
  const auto dim = static_cast<Eigen::Index>(hilbert_dim(L));
  SpinOperator::Sparse m(dim, dim);
  m.setIdentity();
  return SpinOperator(L, std::move(m), true);
}

StateVector product_state_x(int L) {
  check_spin_count(L);
  const auto dim = static_cast<Eigen::Index>(hilbert_dim(L));
  return StateVector(L, Eigen::VectorXcd::Constant(dim, cplx(std::pow(2.0, -0.5 * L))));
}

StateVector product_state_along(int L, const Vec3& direction) {
  check_spin_count(L);
  const Vec3 d = direction.normalized();
  const double theta = std::acos(std::clamp(d.z(), -1.0, 1.0));
  const double phi = std::atan2(d.y(), d.x());
  const cplx up(std::cos(0.5 * theta), 0.0);
  const cplx down = std::sin(0.5 * theta) * std::exp(kI * phi);
  const std::size_t dim = hilbert_dim(L);
  Eigen::VectorXcd amp(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    const int n_down = std::popcount(i);
    amp(static_cast<Eigen::Index>(i)) = std::pow(up, L - n_down) * std::pow(down, n_down);
  }
  return StateVector(L, std::move(amp));
}

double expectation(const StateVector& state, const SpinOperator& op) {
  if (state.dim() != op.dim()) throw std::invalid_argument("expectation: dimension mismatch");
  const cplx v = state.amplitudes().dot(op.apply(state.amplitudes()));
  if (std::abs(v.imag()) > 1e-12 * std::max(1.0, std::abs(v.real())))
    throw NumericError("expectation: imaginary part exceeds 1e-12; operator not hermitian?");
  return v.real();
}

Vec3 magnetization(const Eigen::VectorXcd& a, int L) {
  const std::size_t dim = hilbert_dim(L);
  double mz = 0.0;
  for (std::size_t i = 0; i < dim; ++i)
    mz += std::norm(a(static_cast<Eigen::Index>(i))) * (0.5 * L - std::popcount(i));
  double mx = 0.0;
  double my = 0.0;
  for (int j = 0; j < L; ++j) {
    const std::size_t b = std::size_t{1} << j;
    cplx z(0.0);
    for (std::size_t i = 0; i < dim; ++i)
      if (!(i & b)) z += std::conj(a(static_cast<Eigen::Index>(i))) * a(static_cast<Eigen::Index>(i | b));
    mx += z.real();
    my += z.imag();
  }
  return Vec3(mx, my, mz) / L;
}

StateVector propagate(const StateVector& state, const SpinOperator& H, double t,
                      const KrylovOptions& opts) {
  if (!H.hermitian()) throw std::invalid_argument("propagate: operator must be hermitian");
  if (H.dim() != state.dim()) throw std::invalid_argument("propagate: dimension mismatch");
  const auto& m = H.matrix();
  MatVec mv = [&m](const Eigen::VectorXcd& in, Eigen::VectorXcd& out) { out.noalias() = m * in; };
  return StateVector(state.num_spins(), krylov_expm_apply(mv, state.amplitudes(), t, opts));
}

Eigen::MatrixXcd dense_expm_hermitian(const Eigen::MatrixXcd& H, double t) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
  if (es.info() != Eigen::Success) throw NumericError("dense_expm_hermitian: eigensolver failed");
  const Eigen::VectorXcd phases =
      (es.eigenvalues().cast<cplx>() * cplx(0.0, -t)).array().exp().matrix();
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

Mat3 rotation_matrix(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

SpinRotation::SpinRotation(int L, const Eigen::Matrix2cd& single_spin) : L_(L), u_(single_spin) {
  check_spin_count(L);
}

SpinRotation SpinRotation::about_axis(int L, const Vec3& axis, double angle) {
  const Vec3 n = axis.normalized();
  const Eigen::Matrix2cd ndots = 2.0 * (n.x() * spin_matrix(0) + n.y() * spin_matrix(1) +
                                        n.z() * spin_matrix(2));
  const Eigen::Matrix2cd u =
      std::cos(0.5 * angle) * Eigen::Matrix2cd::Identity() - kI * std::sin(0.5 * angle) * ndots;
  return SpinRotation(L, u);
}

void SpinRotation::apply(Eigen::VectorXcd& a) const {
  const std::size_t dim = hilbert_dim(L_);
  if (static_cast<std::size_t>(a.size()) != dim) throw std::invalid_argument("SpinRotation: dimension mismatch");
  const cplx u00 = u_(0, 0), u01 = u_(0, 1), u10 = u_(1, 0), u11 = u_(1, 1);
  cplx* p = a.data();
  for (int j = 0; j < L_; ++j) {
    const std::size_t b = std::size_t{1} << j;
    for (std::size_t hi = 0; hi < dim; hi += 2 * b) {
      for (std::size_t i = hi; i < hi + b; ++i) {
        const cplx x0 = p[i];
        const cplx x1 = p[i | b];
        p[i] = u00 * x0 + u01 * x1;
        p[i | b] = u10 * x0 + u11 * x1;
      }
    }
  }
}

SpinRotation SpinRotation::power(int p) const {
  Eigen::Matrix2cd base = p >= 0 ? u_ : Eigen::Matrix2cd(u_.adjoint());
  Eigen::Matrix2cd acc = Eigen::Matrix2cd::Identity();
  for (int i = 0; i < std::abs(p); ++i) acc = base * acc;
  return SpinRotation(L_, acc);
}

Eigen::MatrixXcd SpinRotation::dense() const {
  if (L_ > 12) throw std::invalid_argument("SpinRotation::dense: refusing L > 12");
  const auto dim = static_cast<Eigen::Index>(hilbert_dim(L_));
  Eigen::MatrixXcd out(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c) {
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(dim);
    e(c) = 1.0;
    apply(e);
    out.col(c) = e;
  }
  return out;
}

}  // namespace spinorbit
