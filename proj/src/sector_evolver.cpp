#include <bit>
#include <cmath>

#include "spinorbit/errors.hpp"
#include "spinorbit/quantum_core.hpp"

namespace spinorbit {

SectorEvolver::SectorEvolver(const SpinOperator& H) : L_(H.num_spins()) {
  const std::size_t dim = hilbert_dim(L_);
  std::vector<int> pos_in_sector(dim);
  sectors_.resize(L_ + 1);
  for (int s = 0; s <= L_; ++s) sectors_[s].mz = 0.5 * L_ - s;
  for (std::size_t i = 0; i < dim; ++i) {
    auto& sec = sectors_[std::popcount(i)];
    pos_in_sector[i] = static_cast<int>(sec.indices.size());
    sec.indices.push_back(static_cast<Eigen::Index>(i));
  }

  std::vector<Eigen::MatrixXd> blocks(L_ + 1);
  for (int s = 0; s <= L_; ++s) {
    const auto n = static_cast<Eigen::Index>(sectors_[s].indices.size());
    blocks[s] = Eigen::MatrixXd::Zero(n, n);
  }
  const auto& m = H.matrix();
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    const int sr = std::popcount(static_cast<std::size_t>(r));
    for (SpinOperator::Sparse::InnerIterator it(m, r); it; ++it) {
      const auto c = static_cast<std::size_t>(it.col());
      if (std::popcount(c) != sr)
        throw std::invalid_argument("SectorEvolver: operator does not conserve total I_z");
      if (std::abs(it.value().imag()) > 1e-14)
        throw std::invalid_argument("SectorEvolver: operator must be real");
      blocks[sr](pos_in_sector[r], pos_in_sector[c]) = it.value().real();
    }
  }

  for (int s = 0; s <= L_; ++s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blocks[s]);
    if (es.info() != Eigen::Success) throw NumericError("SectorEvolver: eigensolver failed");
    sectors_[s].vectors = es.eigenvectors();
    sectors_[s].values = es.eigenvalues();
    if (es.eigenvalues().size() > 0)
      spectral_radius_ = std::max({spectral_radius_, std::abs(es.eigenvalues()(0)),
                                   std::abs(es.eigenvalues()(es.eigenvalues().size() - 1))});
  }
}

void SectorEvolver::apply(Eigen::VectorXcd& a, double t, double z_field) const {
  if (static_cast<std::size_t>(a.size()) != hilbert_dim(L_))
    throw std::invalid_argument("SectorEvolver::apply: dimension mismatch");
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
  for (const auto& sec : sectors_) {
    const auto n = static_cast<Eigen::Index>(sec.indices.size());
    const cplx zphase = std::exp(cplx(0.0, -t * z_field * sec.mz));
    if (n == 1) {
      a(sec.indices[0]) *= std::exp(cplx(0.0, -t * sec.values(0))) * zphase;
      continue;
    }
    X.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const cplx v = a(sec.indices[i]);
      X(i, 0) = v.real();
      X(i, 1) = v.imag();
    }
    Y.noalias() = sec.vectors.transpose() * X;
    for (Eigen::Index i = 0; i < n; ++i) {
      const cplx p = std::exp(cplx(0.0, -t * sec.values(i))) * zphase;
      const cplx v = p * cplx(Y(i, 0), Y(i, 1));
      Y(i, 0) = v.real();
      Y(i, 1) = v.imag();
    }
    X.noalias() = sec.vectors * Y;
    for (Eigen::Index i = 0; i < n; ++i) a(sec.indices[i]) = cplx(X(i, 0), X(i, 1));
  }
}

Eigen::MatrixXcd SectorEvolver::dense(double t, double z_field) const {
  if (L_ > 12) throw std::invalid_argument("SectorEvolver::dense: refusing L > 12");
  const auto dim = static_cast<Eigen::Index>(hilbert_dim(L_));
  Eigen::MatrixXcd out(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c) {
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(dim);
    e(c) = 1.0;
    apply(e, t, z_field);
    out.col(c) = e;
  }
  return out;
}

}  // namespace spinorbit
