#pragma once

#include <optional>
#include <vector>

#include "spinorbit/drive.hpp"
#include "spinorbit/floquet.hpp"

namespace spinorbit {

/// mu |delta / sqrt(delta^2 + Omega^2) + delta_theta / tau|.
double energy_density(double mu, double delta, double Omega, double delta_theta, double tau);

enum class CouplingScaleChoice {
  Effective,  // h^2 = duty^2 sum b^2 ||D-bar||_F^2 / (4 L): the interaction variance of H_F
  Lattice,    // h_dd^2 = 2 (1 - 3 sin^2 alpha) sum b^2 / L
};

struct PlateauOptions {
  double mu = 1.0;  // 2 <I_x> / L of the initial state
  CouplingScaleChoice scale = CouplingScaleChoice::Effective;
  std::optional<double> h_override;
  FloquetOptions floquet;
};

struct PlateauPrediction {
  double mu = 1.0;
  std::vector<double> epsilon_k;
  std::vector<double> beta_k;
  double h_dd = 0.0;      // lattice scale
  double h_used = 0.0;    // scale entering beta
  std::vector<Vec3> w_k;  // rotated frame
  std::vector<Vec3> M_k;  // rotated frame, per spin
  Vec3 n_hat = Vec3::UnitX();
  Vec3 center = Vec3::Zero();  // n (n . M_k)
  double ell = 0.0;
  double Phi = 0.0;
  bool phi_flagged = false;
  EmergentFieldFamily field;
};

/// Prediction from the emergent field family and a coupling scale h.
PlateauPrediction plateau_from_field(const EmergentFieldFamily& field, double h, double h_dd, double mu);

/// Inverse temperature beta = -eps / (h^2 + |w|^2) and M = -(beta / 2) w.
PlateauPrediction plateau_magnetization(const SpinGraph& graph, const DriveProtocol& protocol,
                                        const ProtocolSegment& segment, const PlateauOptions& opts = {});

/// duty^2 sum_{n<m} b^2 ||D-bar||_F^2 / (4 L).
double effective_coupling_scale_sq(const SpinGraph& graph, const DriveProtocol& protocol,
                                   const ProtocolSegment& segment, const FloquetOptions& opts = {});

struct SaturationPoint {
  double B = 0.0;
  double ell = 0.0;
  double Phi = 0.0;
};

struct SaturationFit {
  double a = 0.0;  // ell ~ a B / (1 + (B / h)^2)
  double h = 0.0;
  double rms = 0.0;
};

std::vector<SaturationPoint> saturation_curve(const SpinGraph& graph, const DriveProtocol& protocol,
                                              const ProtocolSegment& segment, const std::vector<double>& B_values,
                                              const PlateauOptions& opts = {});

/// Least-squares fit of a B / (1 + (B/h)^2); h by golden-section search in log h,
/// a in closed form.
SaturationFit fit_saturation(const std::vector<SaturationPoint>& points);

struct QuenchPrediction {
  double beta_before = 0.0;
  double beta_after = 0.0;
  double gamma = 0.0;
  bool closing = false;
  double sigma = 0.0;
  double magnetization_ratio = 1.0;  // beta_after / beta_before
};

/// Energy conservation across the switch: beta_f = beta_i (h^2 + w_i . w_f) / (h^2 + |w_f|^2).
/// Closing (after.B = 0) leaves beta unchanged with gamma = 0; reopening gives
/// 1 - sigma = (h^2 + v . w) / (h^2 + |w|^2).
QuenchPrediction quench_predictions(const PlateauPrediction& before, const PlateauPrediction& after,
                                    bool after_closed, int k = 0);

struct PlateauExtraction {
  int N = 1;
  long first = 0;
  long last = 0;
  std::vector<Vec3> centroids;     // class c = pulse index mod N
  std::vector<double> dispersion;  // RMS distance to centroid
  double max_dispersion = 0.0;
  double min_separation = 0.0;
  bool stable = false;
  int manifold_count = 0;
  int shift = 0;                  // class c matched to prediction (c + shift) mod N
  std::vector<double> angle_deg;  // per class, to the matched prediction
  Vec3 plane_normal = Vec3::UnitX();
  Vec3 centre = Vec3::Zero();
};

/// Predicted sample after pulse n: the pulse rotation applied to M_{(n-1) mod N}.
std::vector<Vec3> predicted_samples(const PlateauPrediction& pred, const DriveProtocol& protocol);

/// Splits [first, last) by pulse index mod N. Predictions, when given, are indexed
/// by class and only used to report alignment.
PlateauExtraction extract_plateaus(const TrajectoryRecord& record, int N, long first, long last,
                                   const std::vector<Vec3>* predictions = nullptr);

struct PolygonGeometry {
  double ell = 0.0;       // mean distance of the centroids from the n axis
  double along = 0.0;     // n . centre
  double Phi = 0.0;       // 2 atan(ell / |along|)
  double magnitude = 0.0; // mean centroid norm
};

PolygonGeometry polygon_geometry(const std::vector<Vec3>& centroids, const Vec3& n_hat);

struct PlateauHalfLife {
  double plateau = 0.0;  // mean |m| over the reference window
  std::optional<double> time;
  std::optional<double> pulse;  // fractional pulse index of the crossing
};

/// Time for |m|, smoothed by a centred moving average of `smoothing` samples, to fall
/// to half of its mean over pulses [ref_first, ref_last). Empty when it never does.
PlateauHalfLife plateau_half_life(const TrajectoryRecord& record, long ref_first, long ref_last, int smoothing);

}  // namespace spinorbit
