#include "spinorbit/floquet.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "spinorbit/errors.hpp"

namespace spinorbit {

namespace {

constexpr double kPi = std::numbers::pi;

long positive_mod(long a, long n) { return ((a % n) + n) % n; }

}  // namespace

CommensurateAngle commensurate_angle(double applied_angle, int N, double max_deviation) {
  if (N < 1) throw std::invalid_argument("commensurate_angle: N must be >= 1");
  CommensurateAngle out;
  out.N = N;
  const double step = 2.0 * kPi / N;
  const long p = std::lround(applied_angle / step);
  out.theta_c = p * step;
  out.delta_theta = applied_angle - out.theta_c;
  out.p = static_cast<int>(p);
  if (std::abs(out.delta_theta) > max_deviation) {
    std::ostringstream msg;
    msg << "pulse angle " << applied_angle << " is " << out.delta_theta
        << " rad away from the nearest 2 pi p / " << N << " (limit " << max_deviation << ")";
    throw std::invalid_argument(msg.str());
  }
  return out;
}

Mat3 rotation_x(double angle) { return rotation_matrix(Vec3::UnitX(), angle); }

Mat3 tilde_basis(double alpha) { return rotation_matrix(Vec3::UnitY(), alpha); }

Mat3 averaged_dipolar_tensor(double alpha, const CommensurateAngle& angle) {
  const Mat3 Q = tilde_basis(alpha);
  Mat3 D0 = -Mat3::Identity();
  D0(2, 2) = 2.0;
  const Mat3 Dt = Q * D0 * Q.transpose();
  Mat3 acc = Mat3::Zero();
  for (int j = 1; j <= angle.N; ++j) {
    const Mat3 R = rotation_x(-j * angle.theta_c);
    acc += R * Dt * R.transpose();
  }
  return acc / angle.N;
}

EmergentFieldFamily emergent_field(const DriveProtocol& protocol, const ProtocolSegment& seg,
                                   const FloquetOptions& opts) {
  if (!is_resonant(seg, protocol))
    throw std::invalid_argument("emergent_field: segment is not resonant (omega_AC != 2 pi k / (N tau))");
  EmergentFieldFamily fam;
  fam.alpha = protocol.alpha();
  fam.N = seg.N;
  fam.angle = commensurate_angle(protocol.applied_angle(), seg.N, opts.max_angle_deviation);
  fam.duty = protocol.t_acq / protocol.tau;
  const int N = seg.N;
  const Mat3 Q = tilde_basis(fam.alpha);
  const Vec3 qz = Q * Vec3::UnitZ();

  fam.f.resize(N);
  for (int n = 1; n <= N; ++n) fam.f[n - 1] = window_average(n, seg, protocol);

  auto f_at = [&](long idx) { return fam.f[positive_mod(idx - 1, N)]; };
  const double B = seg.ac_amplitude;
  const double ca = std::cos(fam.alpha);

  // static part: detuning plus any DC component of the waveform, plus the flip-angle residue
  const double fsum = [&] {
    double s = 0.0;
    for (double x : fam.f) s += x;
    return s;
  }();
  fam.v_x = fam.duty * (protocol.delta + B * fsum / N) * std::sin(fam.alpha) +
            fam.angle.delta_theta / protocol.tau;

  for (int k = 0; k < N; ++k) {
    Vec3 w = Vec3::Zero();
    Vec3 raw = Vec3::Zero();
    for (int j = 1; j <= N; ++j) {
      const Mat3 R = rotation_x(-j * fam.angle.theta_c);
      const double f = f_at(k + j);
      w += (protocol.delta + B * f) * (R * qz);
      raw += f * (R * Vec3::UnitZ());
    }
    w *= fam.duty / N;
    w.x() += fam.angle.delta_theta / protocol.tau;
    const Vec3 u = w - fam.v_x * Vec3::UnitX();
    fam.w_tilde.push_back(w);
    fam.u_tilde.push_back(u);
    fam.interference.push_back(B * ca * raw);
    fam.w_rot.push_back(Q.transpose() * w);
    fam.u_rot.push_back(Q.transpose() * u);
  }
  fam.v_rot = Q.transpose() * (fam.v_x * Vec3::UnitX());
  return fam;
}

SpinRotation basis_rotation(double alpha, int L) {
  return SpinRotation::about_axis(L, Vec3::UnitY(), alpha);
}

FloquetHamiltonian floquet_hamiltonian(const SpinGraph& graph, const DriveProtocol& protocol,
                                       const ProtocolSegment& seg, int k, Frame frame,
                                       const FloquetOptions& opts) {
  const EmergentFieldFamily fam = emergent_field(protocol, seg, opts);
  const int kk = static_cast<int>(positive_mod(k, seg.N));
  const Mat3 Q = tilde_basis(fam.alpha);
  Mat3 D = averaged_dipolar_tensor(fam.alpha, fam.angle);
  Vec3 field = fam.w_tilde[kk];
  if (frame == Frame::Rotated) {
    D = Q.transpose() * D * Q;
    field = Q.transpose() * field;
  }
  const int L = graph.size();
  std::vector<PairTensor> terms;
  for (int n = 0; n < L; ++n)
    for (int m = n + 1; m < L; ++m) {
      const double b = graph.coupling(n, m);
      if (b != 0.0) terms.push_back({n, m, fam.duty * b * D});
    }
  SpinOperator op = pair_tensor_operator(L, terms) + field_operator(L, field);
  return FloquetHamiltonian{kk, frame, field, D, fam.duty, std::move(op)};
}

Eigen::MatrixXcd exact_block_propagator(const SpinGraph& graph, const DriveProtocol& protocol,
                                        const ProtocolSegment& seg, int k) {
  const int L = graph.size();
  if (L > 10) throw std::invalid_argument("exact_block_propagator: L <= 10 required");
  const SectorEvolver ev(dipolar_hamiltonian(graph));
  const Eigen::MatrixXcd P = sl_pulse_unitary(L, protocol).dense();
  const auto dim = static_cast<Eigen::Index>(hilbert_dim(L));
  Eigen::MatrixXcd U = Eigen::MatrixXcd::Identity(dim, dim);
  for (int j = 1; j <= seg.N; ++j) {
    const long w = k + j;
    const double z = protocol.delta + seg.ac_amplitude * window_average(w, seg, protocol);
    U = P * U;
    for (Eigen::Index c = 0; c < dim; ++c) {
      Eigen::VectorXcd col = U.col(c);
      ev.apply(col, protocol.t_acq, z);
      U.col(c) = col;
    }
  }
  return U;
}

DefectNorms operator_defect(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, int iterations) {
  const Eigen::MatrixXcd D = A - B;
  DefectNorms out;
  out.frobenius = D.norm();
  // deterministic, non-degenerate start vector
  Eigen::VectorXcd v(D.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v(i) = cplx(std::cos(0.7 * i + 0.3), std::sin(1.3 * i + 0.1));
  v.normalize();
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXcd w = D.adjoint() * (D * v);
    const double n = w.norm();
    if (n == 0.0) break;
    v = w / n;
  }
  out.spectral = (D * v).norm();
  return out;
}

namespace {

DriveProtocol scaled_protocol(const DriveProtocol& base, double factor) {
  DriveProtocol p = DriveProtocol::from_angle(base.tau * factor, base.theta_nominal,
                                              std::sqrt(std::pow(std::hypot(base.Omega, base.delta) / factor, 2) -
                                                        base.delta * base.delta),
                                              base.delta);
  p.delta_theta = base.delta_theta * factor;
  p.eta_noise = 0.0;
  p.acq_jitter = 0.0;
  p.full_model = false;
  return p;
}

double block_defect(const SpinGraph& graph, const DriveProtocol& p, const ProtocolSegment& seg, int k,
                    const FloquetOptions& opts, DefectNorms* norms) {
  const FloquetHamiltonian hf = floquet_hamiltonian(graph, p, seg, k, Frame::Rotated, opts);
  const CommensurateAngle ang = commensurate_angle(p.applied_angle(), seg.N, opts.max_angle_deviation);
  const double sign = ((std::abs(static_cast<long>(ang.p)) * graph.size()) % 2 == 0) ? 1.0 : -1.0;
  const Eigen::MatrixXcd pred = sign * dense_expm_hermitian(hf.op.dense(), seg.N * p.tau);
  const Eigen::MatrixXcd exact = exact_block_propagator(graph, p, seg, k);
  const DefectNorms d = operator_defect(exact, pred);
  if (norms) *norms = d;
  return d.spectral;
}

}  // namespace

ConvergenceReport validate_effective_hamiltonian(const SpinGraph& graph, const DriveProtocol& protocol,
                                                 const ProtocolSegment& segment, int k, int halvings,
                                                 bool scan_k, const FloquetOptions& opts) {
  if (graph.size() > 8) throw std::invalid_argument("validate_effective_hamiltonian: L <= 8 required");
  if (halvings < 1) throw std::invalid_argument("validate_effective_hamiltonian: halvings >= 1");
  if (!is_resonant(segment, protocol))
    throw std::invalid_argument("validate_effective_hamiltonian: segment must be resonant");

  ConvergenceReport rep;
  rep.k = k;
  for (int h = 0; h <= halvings; ++h) {
    const double factor = std::ldexp(1.0, -h);
    const DriveProtocol p = scaled_protocol(protocol, factor);
    ProtocolSegment seg = segment;
    seg.ac_omega = resonant_omega(seg, p);
    ConvergencePoint pt;
    pt.tau = p.tau;
    pt.period = seg.N * p.tau;
    pt.alpha = p.alpha();
    block_defect(graph, p, seg, k, opts, &pt.defect);
    if (!std::isfinite(pt.defect.spectral)) throw NumericError("validate_effective_hamiltonian: non-finite defect");
    rep.points.push_back(pt);
  }
  // least-squares slope of log d against log T
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& pt : rep.points) {
    if (!(pt.defect.spectral > 0.0)) continue;
    const double x = std::log(pt.period);
    const double y = std::log(pt.defect.spectral);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  rep.order = n >= 2 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
  for (std::size_t i = 0; i + 1 < rep.points.size(); ++i)
    rep.ratios.push_back(rep.points[i].defect.spectral / rep.points[i + 1].defect.spectral);

  if (scan_k) {
    DriveProtocol p = scaled_protocol(protocol, 1.0);
    for (int kk = 0; kk < segment.N; ++kk) rep.k_defects.push_back(block_defect(graph, p, segment, kk, opts, nullptr));
  }
  return rep;
}

}  // namespace spinorbit
