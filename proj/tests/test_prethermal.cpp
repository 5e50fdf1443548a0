#include <doctest.h>

#include <numbers>

#include "oracles.hpp"
#include "spinorbit/prethermal.hpp"

using namespace spinorbit;

namespace {

constexpr double kPi = std::numbers::pi;

DriveProtocol protocol_with(double theta, double delta) {
  const double t_pulse = 0.13333333333333333;
  const double rabi = theta / t_pulse;
  DriveProtocol p = DriveProtocol::from_pulse_width(0.2, t_pulse, std::sqrt(rabi * rabi - delta * delta), delta);
  p.theta_nominal = theta;
  return p;
}

ProtocolSegment segment_for(const DriveProtocol& p, double B, long n = 100) {
  ProtocolSegment s;
  s.n_pulses = n;
  s.ac_amplitude = B;
  s.ac_omega = resonant_omega(s, p);
  return s;
}

TrajectoryRecord synthetic_record(const std::vector<Vec3>& centres, long n, double noise, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> g(0.0, noise);
  TrajectoryRecord r;
  for (long i = 0; i < n; ++i)
    r.push(0.2 * i, centres[i % centres.size()] + Vec3(g(gen), g(gen), g(gen)), 0);
  return r;
}

}  // namespace

TEST_SUITE("prethermal") {
  TEST_CASE("energy density") {
    CHECK(energy_density(1.0, 0.0, 3.0, 0.0, 0.2) == 0.0);
    CHECK(energy_density(1.0, 2.0, 2.0, 0.0, 0.2) == doctest::Approx(1 / std::sqrt(2.0)));
    CHECK(energy_density(0.5, 2.0, 2.0, 0.0, 0.2) == doctest::Approx(0.5 / std::sqrt(2.0)));
    CHECK(energy_density(1.0, -2.0, 2.0, 0.0, 0.2) > 0.0);
    CHECK(energy_density(1.0, 0.0, 2.0, -0.02, 0.2) == doctest::Approx(0.1));
    CHECK_THROWS_AS(energy_density(1.0, 1.0, 0.0, 0.0, 0.2), std::invalid_argument);
  }

  TEST_CASE("zero energy density gives an infinite-temperature plateau") {
    const SpinGraph g = generate_graph(6, 0.9, 1.1, 1).normalized_to_median();
    const DriveProtocol p = protocol_with(kPi / 2, 0.0);
    const PlateauPrediction pred = plateau_magnetization(g, p, segment_for(p, 0.5));
    for (int k = 0; k < 4; ++k) {
      CHECK(pred.epsilon_k[k] == doctest::Approx(0.0));
      CHECK(pred.beta_k[k] == doctest::Approx(0.0));
      CHECK(pred.M_k[k].norm() < 1e-15);
    }
  }

  TEST_CASE("plateau magnetization follows the emergent field") {
    const SpinGraph g = generate_graph(8, 0.9, 1.1, 2).normalized_to_median();
    const DriveProtocol p = protocol_with(kPi / 2, 1.0);
    const PlateauPrediction pred = plateau_magnetization(g, p, segment_for(p, 0.5));
    REQUIRE(pred.M_k.size() == 4);
    for (int k = 0; k < 4; ++k) {
      CHECK(pred.epsilon_k[k] > 0.0);
      CHECK(pred.beta_k[k] < 0.0);
      CHECK(pred.M_k[k].cross(pred.w_k[k]).norm() < 1e-14);
      CHECK(pred.M_k[k].dot(pred.w_k[k]) > 0.0);
      CHECK(pred.M_k[k].norm() == doctest::Approx(pred.M_k[0].norm()).epsilon(1e-10));
    }
    CHECK((pred.n_hat - p.pulse_axis()).norm() < 1e-15);
    CHECK(pred.ell > 0.0);
  }

  TEST_CASE("coupling scale plus field equals the trace norm of the Floquet Hamiltonian") {
    const int L = 5;
    const SpinGraph g = generate_graph(L, 0.9, 1.1, 3).normalized_to_median();
    const DriveProtocol p = protocol_with(1.5, 1.0);
    const ProtocolSegment s = segment_for(p, 0.7);
    const PlateauPrediction pred = plateau_magnetization(g, p, s);
    for (int k = 0; k < 4; ++k) {
      const Eigen::MatrixXcd H = floquet_hamiltonian(g, p, s, k, Frame::Rotated).op.dense();
      const double tr = (H * H).trace().real();
      const double expect = 4.0 * tr / ((1 << L) * L);
      CHECK(pred.h_used * pred.h_used + pred.w_k[k].squaredNorm() == doctest::Approx(expect).epsilon(1e-12));
    }
    PlateauOptions lat;
    lat.scale = CouplingScaleChoice::Lattice;
    const PlateauPrediction pl = plateau_magnetization(g, p, s, lat);
    CHECK(pl.h_used == doctest::Approx(std::sqrt(dipolar_energy_scale_sq(g, p.alpha()))));
    PlateauOptions fixed;
    fixed.h_override = 0.37;
    CHECK(plateau_magnetization(g, p, s, fixed).h_used == 0.37);
  }

  TEST_CASE("small amplitudes respond linearly") {
    const SpinGraph g = generate_graph(8, 0.9, 1.1, 4).normalized_to_median();
    const DriveProtocol p = protocol_with(kPi / 2, 1.0);
    const double h = plateau_magnetization(g, p, segment_for(p, 0.0)).h_dd;
    for (double B : {0.01 * h, 0.025 * h}) {
      const double l1 = plateau_magnetization(g, p, segment_for(p, B)).ell;
      const double l2 = plateau_magnetization(g, p, segment_for(p, 2 * B)).ell;
      CHECK(l2 / l1 == doctest::Approx(2.0).epsilon(0.01));
    }
    const PlateauPrediction zero = plateau_magnetization(g, p, segment_for(p, 0.0));
    CHECK(zero.ell < 1e-15);
    CHECK(zero.Phi < 1e-14);
  }

  TEST_CASE("opening angle: tan(Phi / 2) is proportional to B") {
    const SpinGraph g = generate_graph(8, 0.9, 1.1, 4).normalized_to_median();
    const DriveProtocol p = protocol_with(1.45, 1.0);
    const std::vector<double> Bs{0.05, 0.2, 0.8, 2.0, 6.0};
    const auto curve = saturation_curve(g, p, segment_for(p, 0.0), Bs);
    const double ref = std::tan(curve[0].Phi / 2) / Bs[0];
    for (const auto& pt : curve) CHECK(std::tan(pt.Phi / 2) / pt.B == doctest::Approx(ref).epsilon(1e-9));
    CHECK_THROWS_AS(saturation_curve(g, p, segment_for(p, 0.0), {1.0, 0.5}), std::invalid_argument);
  }

  TEST_CASE("saturation curve rolls over where the fitted form peaks") {
    const SpinGraph g = generate_graph(8, 0.9, 1.1, 4).normalized_to_median();
    const DriveProtocol p = protocol_with(kPi / 2, 1.0);
    std::vector<double> Bs;
    for (int i = 1; i <= 400; ++i) Bs.push_back(0.025 * i);
    const auto curve = saturation_curve(g, p, segment_for(p, 0.0), Bs);
    const SaturationFit fit = fit_saturation(curve);
    const auto peak = std::max_element(curve.begin(), curve.end(),
                                       [](const auto& a, const auto& b) { return a.ell < b.ell; });
    CHECK(peak->B == doctest::Approx(fit.h).epsilon(0.05));
    CHECK(peak != curve.begin());
    CHECK(peak != curve.end() - 1);
    CHECK(fit.rms < 1e-6 * peak->ell);
  }

  TEST_CASE("saturation fit recovers synthetic parameters") {
    std::vector<SaturationPoint> pts;
    for (double B : {0.1, 0.3, 0.7, 1.2, 2.0, 3.5, 5.0}) pts.push_back({B, 0.8 * B / (1 + (B / 1.3) * (B / 1.3)), 0});
    const SaturationFit fit = fit_saturation(pts);
    CHECK(fit.a == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(fit.h == doctest::Approx(1.3).epsilon(1e-6));
    CHECK_THROWS_AS(fit_saturation({{1, 1, 0}, {2, 1, 0}}), std::invalid_argument);
  }

  TEST_CASE("quench predictions") {
    const SpinGraph g = generate_graph(8, 0.9, 1.1, 6).normalized_to_median();
    const DriveProtocol p = protocol_with(kPi / 2, 1.0);
    const PlateauPrediction open = plateau_magnetization(g, p, segment_for(p, 0.5));
    const PlateauPrediction closed = plateau_magnetization(g, p, segment_for(p, 0.0));

    const QuenchPrediction c = quench_predictions(open, closed, true, 0);
    CHECK(c.closing);
    CHECK(c.gamma == 0.0);
    CHECK(c.magnetization_ratio == 1.0);

    const QuenchPrediction r = quench_predictions(closed, open, false, 2);
    const double h2 = open.h_used * open.h_used;
    const Vec3 v = closed.w_k[2], w = open.w_k[2];
    CHECK(r.magnetization_ratio == doctest::Approx((h2 + v.dot(w)) / (h2 + w.squaredNorm())));
    CHECK(w.norm() > v.norm());
    CHECK(r.sigma > 0.0);
    CHECK(r.sigma == doctest::Approx(1 - r.magnetization_ratio));

    const PlateauPrediction faint = plateau_magnetization(g, p, segment_for(p, 1e-6));
    CHECK(quench_predictions(closed, faint, false, 0).sigma == doctest::Approx(0.0).epsilon(1e-9));

    // two cycles compound
    PlateauPrediction after_one = closed;
    for (auto& b : after_one.beta_k) b *= r.magnetization_ratio;
    const QuenchPrediction r2 = quench_predictions(after_one, open, false, 2);
    CHECK(r2.beta_after / r.beta_before == doctest::Approx(std::pow(1 - r.sigma, 2)));

    const PlateauPrediction n8 = [&] {
      DriveProtocol q = protocol_with(3 * kPi / 4, 1.0);
      ProtocolSegment s = segment_for(q, 0.5);
      s.N = 8;
      s.k = 3;
      s.ac_omega = resonant_omega(s, q);
      return plateau_magnetization(g, q, s);
    }();
    CHECK_THROWS_AS(quench_predictions(open, n8, false, 0), std::invalid_argument);
  }

  TEST_CASE("predicted samples are the pulse-rotated plateaus") {
    const SpinGraph g = generate_graph(6, 0.9, 1.1, 2).normalized_to_median();
    const DriveProtocol p = protocol_with(1.5, 1.0);
    const PlateauPrediction pred = plateau_magnetization(g, p, segment_for(p, 0.5));
    const auto s = predicted_samples(pred, p);
    const Eigen::Matrix3d R = oracle::rodrigues(p.pulse_axis(), 1.5);
    for (int c = 0; c < 4; ++c) CHECK((s[c] - R * pred.M_k[(c + 3) % 4]).norm() < 1e-15);
  }

  TEST_CASE("polygon geometry") {
    const Vec3 n = Vec3(1, 0, 1).normalized();
    const Vec3 e1 = Vec3(0, 1, 0), e2 = n.cross(e1);
    std::vector<Vec3> square;
    for (int c = 0; c < 4; ++c)
      square.push_back(0.3 * n + 0.3 * (std::cos(c * kPi / 2) * e1 + std::sin(c * kPi / 2) * e2));
    const PolygonGeometry geo = polygon_geometry(square, n);
    CHECK(geo.ell == doctest::Approx(0.3));
    CHECK(geo.along == doctest::Approx(0.3));
    CHECK(geo.Phi == doctest::Approx(kPi / 2));
    CHECK(geo.magnitude == doctest::Approx(0.3 * std::sqrt(2.0)));
    CHECK(polygon_geometry({}, n).ell == 0.0);
  }

  TEST_CASE("plateau extraction on synthetic manifolds") {
    const Vec3 n = Vec3(1, 0, 1).normalized();
    const Vec3 e1 = Vec3(0, 1, 0), e2 = n.cross(e1);
    std::vector<Vec3> square;
    for (int c = 0; c < 4; ++c)
      square.push_back(0.2 * n + 0.1 * (std::cos(c * kPi / 2) * e1 + std::sin(c * kPi / 2) * e2));
    const TrajectoryRecord r = synthetic_record(square, 800, 0.005, 3);
    std::vector<Vec3> shifted{square[1], square[2], square[3], square[0]};
    const PlateauExtraction ex = extract_plateaus(r, 4, 0, 800, &shifted);
    CHECK(ex.stable);
    CHECK(ex.manifold_count == 4);
    CHECK(ex.shift == 3);
    for (double a : ex.angle_deg) CHECK(a < 3.0);
    CHECK(std::abs(ex.plane_normal.dot(n)) > std::cos(3.0 * kPi / 180));
    for (int c = 0; c < 4; ++c) CHECK((ex.centroids[c] - square[c]).norm() < 0.003);
    CHECK_THROWS_AS(extract_plateaus(r, 4, 0, 60), std::invalid_argument);

    const TrajectoryRecord flat = synthetic_record({0.3 * n}, 400, 0.01, 4);
    const PlateauExtraction one = extract_plateaus(flat, 4, 0, 400);
    CHECK(one.manifold_count == 1);
    CHECK_FALSE(one.stable);
  }

  TEST_CASE("spin lock without AC drive gives a single cluster") {
    const SpinGraph g = generate_graph(8, 0.9, 1.1, 5).normalized_to_median();
    DriveProtocol p = protocol_with(kPi / 2, 1.0);
    p.segments = {segment_for(p, 0.0, 600)};
    const TrajectoryRecord r = run_protocol(g, p, product_state_x(8), 5);
    const PlateauExtraction ex = extract_plateaus(r, 4, 200, 600);
    CHECK(ex.manifold_count == 1);
  }

  TEST_CASE("resonant square drive separates into four manifolds") {
    DisorderSpec spec;
    spec.L = 10;
    spec.protocol = protocol_with(kPi / 2, 1.0);
    spec.protocol.segments = {segment_for(spec.protocol, 0.5, 280)};
    spec.n_realizations = 5;
    const DisorderResult res = disorder_average(spec);
    // the plateaus drift slowly at this flip angle, so statistics use a short window
    const PlateauExtraction ex = extract_plateaus(res.mean, 4, 200, 280);
    CHECK(ex.manifold_count == 4);
    CHECK(ex.stable);

    SUBCASE("averaging narrows the manifolds") {
      double single = 0.0;
      for (const auto& r : res.realizations) single += extract_plateaus(r, 4, 200, 280).max_dispersion / 5.0;
      CHECK(ex.max_dispersion < single);
    }
  }

  TEST_CASE("plateau half-life on a synthetic decay") {
    TrajectoryRecord r;
    for (int i = 0; i < 2000; ++i) {
      const double amp = i < 100 ? 0.4 : 0.4 * std::exp(-(i - 100) / 300.0);
      r.push(0.2 * i, Vec3(amp * 0.6, 0.0, amp * 0.8), 0);
    }
    const PlateauHalfLife hl = plateau_half_life(r, 20, 60, 1);
    CHECK(hl.plateau == doctest::Approx(0.4));
    REQUIRE(hl.pulse.has_value());
    const double expect = 100 + 300 * std::log(2.0);
    CHECK(*hl.pulse == doctest::Approx(expect).epsilon(0.002));
    CHECK(*hl.time == doctest::Approx(0.2 * *hl.pulse));
    const PlateauHalfLife smooth = plateau_half_life(r, 20, 60, 41);
    CHECK(*smooth.pulse == doctest::Approx(expect).epsilon(0.01));

    TrajectoryRecord steady;
    for (int i = 0; i < 300; ++i) steady.push(0.2 * i, Vec3(0.3, 0, 0), 0);
    CHECK_FALSE(plateau_half_life(steady, 0, 50, 5).time.has_value());
    CHECK_THROWS_AS(plateau_half_life(steady, 50, 400, 5), std::invalid_argument);
  }
}
