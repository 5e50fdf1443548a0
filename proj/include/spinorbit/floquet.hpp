#pragma once

#include <vector>

#include "spinorbit/drive.hpp"

// Frames. The tilde frame is reached with V = exp(-i alpha I_y) as H~ = V H V^dag,
// which maps the pulse axis n = (cos alpha, 0, sin alpha) onto x. Vectors follow
// h~ = Q h with Q = R_y(alpha). The rotated frame is the ordinary rotating frame.
//
// Frame k starts right before pulse k+1 and spans windows k+1 .. k+N, so the
// stroboscopic sample taken after pulse n sits in frame (n-1) mod N rotated by
// that pulse.

namespace spinorbit {

struct CommensurateAngle {
  int p = 0;                 // theta_c = 2 pi p / N, p not reduced mod N
  int N = 1;
  double theta_c = 0.0;
  double delta_theta = 0.0;  // applied angle - theta_c
};

/// Nearest 2 pi p / N to the applied pulse angle. Throws std::invalid_argument when
/// the residual exceeds max_deviation (radians).
CommensurateAngle commensurate_angle(double applied_angle, int N, double max_deviation = 0.3);

struct FloquetOptions {
  double max_angle_deviation = 0.3;
};

struct EmergentFieldFamily {
  double alpha = 0.0;
  int N = 1;
  CommensurateAngle angle;
  double duty = 1.0;  // t_acq / tau
  double v_x = 0.0;
  std::vector<Vec3> w_tilde;
  std::vector<Vec3> u_tilde;
  std::vector<Vec3> w_rot;
  std::vector<Vec3> u_rot;
  Vec3 v_rot = Vec3::Zero();
  /// B cos(alpha) sum_n nu_n f_{n+k}: the bare interference sum without the
  /// t_acq / (N tau) prefactor that the true emergent field carries.
  std::vector<Vec3> interference;
  /// Window weights f_1 .. f_N of frame 0.
  std::vector<double> f;
};

Mat3 rotation_x(double angle);
Mat3 tilde_basis(double alpha);  // Q

/// Requires a resonant segment (std::invalid_argument otherwise).
EmergentFieldFamily emergent_field(const DriveProtocol& protocol, const ProtocolSegment& segment,
                                   const FloquetOptions& opts = {});

/// Averaged two-body tensor D-bar (tilde frame): mean over j of
/// R_x(-j theta_c) Q (3 z z^T - 1) Q^T R_x(-j theta_c)^T.
Mat3 averaged_dipolar_tensor(double alpha, const CommensurateAngle& angle);

enum class Frame { Tilde, Rotated };

struct FloquetHamiltonian {
  int k = 0;
  Frame frame = Frame::Tilde;
  Vec3 field = Vec3::Zero();  // single-body coefficient vector
  Mat3 D = Mat3::Zero();      // pair tensor, multiplied by duty * b_nm
  double duty = 1.0;
  SpinOperator op;
};

/// H = field . I + duty sum_{n<m} b_nm I_n D I_m, the leading-order generator of
/// one N-pulse block: U_F = (-1)^{pL} exp(-i N tau H).
FloquetHamiltonian floquet_hamiltonian(const SpinGraph& graph, const DriveProtocol& protocol,
                                       const ProtocolSegment& segment, int k, Frame frame,
                                       const FloquetOptions& opts = {});

/// V = exp(-i alpha I_y).
SpinRotation basis_rotation(double alpha, int L);

/// Exact block propagator of frame k (pulses k+1 .. k+N with their windows), noise
/// and jitter off, in the rotating frame. Dense, L <= 10.
Eigen::MatrixXcd exact_block_propagator(const SpinGraph& graph, const DriveProtocol& protocol,
                                        const ProtocolSegment& segment, int k);

struct DefectNorms {
  double spectral = 0.0;
  double frobenius = 0.0;
};

/// Power iteration on (A-B)^dag (A-B), 20 iterations, deterministic start.
DefectNorms operator_defect(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, int iterations = 20);

struct ConvergencePoint {
  double tau = 0.0;
  double period = 0.0;  // N tau
  double alpha = 0.0;
  DefectNorms defect;
};

struct ConvergenceReport {
  int k = 0;
  std::vector<ConvergencePoint> points;
  double order = 0.0;                 // fitted p in d ~ T^p (spectral)
  std::vector<double> ratios;         // d(T) / d(T/2)
  std::vector<double> k_defects;      // base-period defect for each k = 0..N-1
};

/// Halves tau, t_pulse and t_acq together at fixed pulse angle; Omega is re-derived,
/// B_AC is held, omega_AC follows the resonance and delta_theta scales with tau.
ConvergenceReport validate_effective_hamiltonian(const SpinGraph& graph, const DriveProtocol& protocol,
                                                 const ProtocolSegment& segment, int k, int halvings,
                                                 bool scan_k = true, const FloquetOptions& opts = {});

}  // namespace spinorbit
