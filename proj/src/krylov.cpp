#include <algorithm>
#include <cmath>
#include <sstream>

#include "spinorbit/errors.hpp"
#include "spinorbit/quantum_core.hpp"

namespace spinorbit {

namespace {

// Lanczos basis built from a normalized start vector.
struct LanczosBasis {
  std::vector<Eigen::VectorXcd> V;
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;  // beta(j) couples V[j] and V[j+1]; beta(m-1) is the residual norm
  bool exact = false;    // invariant subspace found
};

LanczosBasis build_basis(const MatVec& H, const Eigen::VectorXcd& v0, int max_dim) {
  LanczosBasis b;
  const Eigen::Index n = v0.size();
  const int m_cap = static_cast<int>(std::min<Eigen::Index>(max_dim, n));
  b.alpha.resize(m_cap);
  b.beta.resize(m_cap);
  b.V.reserve(m_cap + 1);
  b.V.push_back(v0);
  Eigen::VectorXcd w(n);
  int m = 0;
  for (int j = 0; j < m_cap; ++j) {
    H(b.V[j], w);
    // two passes of classical Gram-Schmidt against the full basis
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i <= j; ++i) {
        const cplx c = b.V[i].dot(w);
        if (pass == 0 && i == j) b.alpha(j) = c.real();
        else if (pass == 1 && i == j) b.alpha(j) += c.real();
        w.noalias() -= c * b.V[i];
      }
    }
    const double h = w.norm();
    b.beta(j) = h;
    m = j + 1;
    const double scale = std::max(1.0, std::abs(b.alpha(j)) + (j > 0 ? b.beta(j - 1) : 0.0));
    if (h <= 1e-14 * scale || m == n) {
      b.exact = true;
      b.beta(j) = 0.0;
      break;
    }
    if (j + 1 < m_cap) b.V.push_back(w / h);
  }
  b.alpha.conservativeResize(m);
  b.beta.conservativeResize(m);
  b.V.resize(m);
  return b;
}

}  // namespace

Eigen::VectorXcd krylov_expm_apply(const MatVec& H, const Eigen::VectorXcd& v, double t,
                                   const KrylovOptions& opts) {
  if (t == 0.0 || v.size() == 0) return v;
  const double v_norm = v.norm();
  if (v_norm == 0.0) return v;

  Eigen::VectorXcd cur = v;
  double remaining = std::abs(t);
  const double sign = t > 0.0 ? 1.0 : -1.0;
  double dt = remaining;
  long steps = 0;

  while (remaining > 0.0) {
    const double nrm = cur.norm();
    const LanczosBasis b = build_basis(H, cur / nrm, opts.max_dim);
    const int m = static_cast<int>(b.alpha.size());

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < m; ++j) {
      T(j, j) = b.alpha(j);
      if (j + 1 < m) T(j, j + 1) = T(j + 1, j) = b.beta(j);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    if (es.info() != Eigen::Success) throw NumericError("krylov: tridiagonal eigensolver failed");
    const Eigen::MatrixXd& Q = es.eigenvectors();
    const Eigen::VectorXd& lam = es.eigenvalues();

    dt = std::min(dt, remaining);
    Eigen::VectorXcd y(m);
    for (;;) {
      if (++steps > opts.max_substeps) {
        std::ostringstream msg;
        msg << "krylov: substep cap " << opts.max_substeps << " reached with " << remaining
            << " of " << std::abs(t) << " remaining";
        throw NumericError(msg.str());
      }
      Eigen::VectorXcd coef(m);
      for (int i = 0; i < m; ++i) coef(i) = std::exp(cplx(0.0, -sign * dt * lam(i))) * Q(0, i);
      y = Q.cast<cplx>() * coef;
      if (b.exact) break;
      const double err = nrm * b.beta(m - 1) * std::abs(y(m - 1));
      if (err <= opts.tol) break;
      dt *= 0.5;
    }

    Eigen::VectorXcd next = Eigen::VectorXcd::Zero(cur.size());
    for (int j = 0; j < m; ++j) next.noalias() += (nrm * y(j)) * b.V[j];
    cur = std::move(next);
    remaining -= dt;
    if (remaining < 1e-15 * std::abs(t)) remaining = 0.0;
    dt *= 2.0;
  }
  return cur;
}

}  // namespace spinorbit
