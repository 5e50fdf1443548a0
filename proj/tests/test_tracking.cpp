#include <doctest.h>

#include <numbers>
#include <random>

#include "spinorbit/tracking.hpp"

using namespace spinorbit;

namespace {

constexpr double kPi = std::numbers::pi;

// Square-protocol ground truth from the simulator.
TrajectoryRecord square_truth(long pulses, int L = 6) {
  const SpinGraph g = generate_graph(L, 0.9, 1.1, 1).normalized_to_median();
  const double t_pulse = 0.13333333333333333;
  const double theta = 0.45 * kPi;
  const double rabi = theta / t_pulse;
  DriveProtocol p = DriveProtocol::from_pulse_width(0.2, t_pulse, std::sqrt(rabi * rabi - 1.0), 1.0);
  p.theta_nominal = theta;
  ProtocolSegment s;
  s.n_pulses = pulses;
  s.ac_amplitude = 0.5;
  s.ac_omega = resonant_omega(s, p);
  p.segments = {s};
  return run_protocol(g, p, product_state_x(L), 2);
}

std::vector<double> norms(const TrajectoryRecord& r) {
  std::vector<double> n;
  for (std::size_t i = 0; i < r.size(); ++i) n.push_back(r.sample(i).norm());
  return n;
}

}  // namespace

TEST_SUITE("tracking") {
  TEST_CASE("identity readout and round trip") {
    const TrajectoryRecord truth = square_truth(200);
    const InductionSeries s = synthesize_readout(truth, 0.0, Envelope{}, ReadoutNoise{}, 1, true);
    for (std::size_t j = 0; j < truth.size(); ++j) {
      CHECK(s.S[j] == doctest::Approx(std::hypot(truth.mx[j], truth.my[j])).epsilon(1e-15));
      CHECK(s.phi_raw[j] == doctest::Approx(std::atan2(truth.my[j], truth.mx[j])).epsilon(1e-15));
    }
    const DressedPhase ph = remove_phase_ramp(s);
    CHECK_FALSE(ph.flagged());
    ReconstructOptions ro;
    ro.norm_model = norms(truth);
    const BlochTrajectory b = reconstruct_bloch(s, ph, ro);
    double err = 0.0;
    for (std::size_t j = 0; j < truth.size(); ++j)
      err = std::max({err, std::abs(b.Ix[j] - truth.mx[j]), std::abs(b.Iy[j] - truth.my[j]),
                      std::abs(b.Iz_abs[j] - std::abs(truth.mz[j]))});
    CHECK(err < 1e-9);
  }

  TEST_CASE("ramp is added as a wrapped linear sequence") {
    const TrajectoryRecord truth = square_truth(120);
    const InductionSeries s0 = synthesize_readout(truth, 0.0, Envelope{}, ReadoutNoise{}, 1);
    const InductionSeries s = synthesize_readout(truth, 0.3, Envelope{}, ReadoutNoise{}, 1);
    for (std::size_t j = 0; j < truth.size(); ++j) {
      CHECK(s.phi_raw[j] > -kPi);
      CHECK(s.phi_raw[j] <= kPi);
      CHECK(std::abs(wrap_phase(s.phi_raw[j] - s0.phi_raw[j] - 0.3 * j)) < 1e-12);
    }
  }

  TEST_CASE("a pure ramp removes to zero") {
    TrajectoryRecord flat;
    for (int i = 0; i < 300; ++i) flat.push(0.2 * i, Vec3(0.3, 0.0, 0.1), 0);
    const InductionSeries s = synthesize_readout(flat, 0.3, Envelope{}, ReadoutNoise{}, 1);
    const DressedPhase ph = remove_phase_ramp(s);
    CHECK(ph.slope == doctest::Approx(0.3).epsilon(1e-12));
    for (double p : ph.phi) CHECK(std::abs(p) < 1e-10);
    const DressedPhase viaref = remove_phase_ramp(s, &s);
    for (double p : viaref.phi) CHECK(std::abs(p) < 1e-10);
  }

  TEST_CASE("micromotion survives ramp removal as parallel phase manifolds") {
    const TrajectoryRecord truth = square_truth(400);
    const InductionSeries s = synthesize_readout(truth, 0.3, Envelope{}, ReadoutNoise{}, 1);
    const DressedPhase ph = remove_phase_ramp(s);
    // ramp removal subtracts a straight line, so the distinct azimuth manifolds of the
    // truth reappear unchanged apart from that line
    double lo = 1e9, hi = -1e9;
    for (int k = 0; k < 4; ++k) {
      double t = 0.0;
      int n = 0;
      for (long j = 100 + k; j < 400; j += 4, ++n) t += std::atan2(truth.my[j], truth.mx[j]);
      lo = std::min(lo, t / n);
      hi = std::max(hi, t / n);
    }
    CHECK(hi - lo > 0.05);
    std::vector<double> d;
    for (std::size_t j = 0; j < truth.size(); ++j)
      d.push_back(std::remainder(ph.phi[j] - std::atan2(truth.my[j], truth.mx[j]), 2 * kPi));
    const double n = static_cast<double>(d.size());
    double sj = 0, sd = 0, sjj = 0, sjd = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      sj += j;
      sd += d[j];
      sjj += double(j) * j;
      sjd += j * d[j];
    }
    const double slope = (sjd - sj * sd / n) / (sjj - sj * sj / n);
    const double icpt = (sd - slope * sj) / n;
    double worst = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) worst = std::max(worst, std::abs(d[j] - icpt - slope * j));
    CHECK(worst < 1e-9);
  }

  TEST_CASE("steps close to pi are flagged") {
    std::vector<double> w{0.0, 0.1, 0.1 + kPi + 0.1, 0.3};
    std::vector<long> amb;
    unwrap_phase(w, 0.1 * kPi, &amb);
    REQUIRE_FALSE(amb.empty());
    CHECK(amb.front() == 2);
    InductionSeries s;
    for (int j = 0; j < 20; ++j) {
      s.times.push_back(j);
      s.S.push_back(1.0);
      s.phi_raw.push_back(wrap_phase(j == 10 ? 9 * 0.01 + kPi + 0.1 : j * 0.01));
    }
    CHECK(remove_phase_ramp(s).flagged());
  }

  TEST_CASE("gauge shift only rotates the azimuth") {
    const TrajectoryRecord truth = square_truth(160);
    InductionSeries s = synthesize_readout(truth, 0.0, Envelope{}, ReadoutNoise{}, 1, true);
    InductionSeries g = s;
    for (double& p : g.phi_raw) p = wrap_phase(p + 0.7);
    ReconstructOptions ro;
    ro.norm_model = norms(truth);
    const BlochTrajectory a = reconstruct_bloch(s, remove_phase_ramp(s), ro);
    const BlochTrajectory b = reconstruct_bloch(g, remove_phase_ramp(g), ro);
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(std::hypot(a.Ix[j], a.Iy[j]) == doctest::Approx(std::hypot(b.Ix[j], b.Iy[j])));
      CHECK(a.Iz_abs[j] == doctest::Approx(b.Iz_abs[j]));
    }
  }

  TEST_CASE("moving-average decomposition") {
    const std::vector<double> c(50, 2.5);
    const Decomposition dc = decompose_decay(c, 4);
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(dc.S_dec[i] == doctest::Approx(2.5));
      CHECK(std::abs(dc.S_osc[i]) < 1e-15);
    }
    const double osc[4] = {0.3, -0.1, -0.4, 0.2};
    std::vector<double> S;
    for (int i = 0; i < 80; ++i) S.push_back(1.0 + osc[i % 4]);
    const Decomposition d = decompose_decay(S, 4);
    for (int i = 4; i < 76; ++i) CHECK(std::abs(d.S_osc[i] - osc[i % 4]) < 1e-10);

    const double A = 0.1;
    std::vector<double> E;
    for (int i = 0; i < 2000; ++i) E.push_back(std::exp(-i / 2000.0) * (1.0 + A * std::sin(kPi / 2 * i)));
    const Decomposition de = decompose_decay(E, 4);
    for (int start = 8; start + 4 < 1992; start += 4) {
      double m = 0.0;
      for (int i = start; i < start + 4; ++i) m += de.S_osc[i];
      // an even window is centred half a sample ahead, so S_osc carries half the local slope
      const double lag = 0.5 * std::exp(-(start + 1.5) / 2000.0) / 2000.0;
      CHECK(std::abs(m / 4 - lag) <= 1e-3 * A);
    }
    CHECK_THROWS_AS(decompose_decay(S, 0), std::invalid_argument);
  }

  TEST_CASE("norm model and the delta0 bias") {
    TrajectoryRecord eq;
    for (int i = 0; i < 100; ++i) eq.push(0.2 * i, Vec3(0.3 * std::cos(0.1 * i), 0.3 * std::sin(0.1 * i), 0.0), 0);
    const InductionSeries s = synthesize_readout(eq, 0.0, Envelope{}, ReadoutNoise{}, 1, true);
    const DressedPhase ph = remove_phase_ramp(s);
    const BlochTrajectory def = reconstruct_bloch(s, ph);
    CHECK(def.delta0 == doctest::Approx(0.05 * 0.3));
    for (std::size_t j = 0; j < def.size(); ++j) {
      // |Iz| then comes only from delta0: sqrt((S + d0)^2 - S^2)
      CHECK(def.Iz_abs[j] == doctest::Approx(std::sqrt(std::pow(0.3 + def.delta0, 2) - 0.09)).epsilon(1e-9));
      CHECK(def.Iz_abs[j] <= std::sqrt(2 * def.delta0 * 0.3 + def.delta0 * def.delta0) + 1e-12);
    }
    ReconstructOptions zero;
    zero.delta0_fraction = 0.0;
    for (double z : reconstruct_bloch(s, ph, zero).Iz_abs) CHECK(z < 1e-7);
  }

  TEST_CASE("reconstruction is blind to the sign of mz") {
    TrajectoryRecord down;
    for (int i = 0; i < 60; ++i) down.push(0.2 * i, Vec3(0.2, 0.1, -0.25), 0);
    const InductionSeries s = synthesize_readout(down, 0.0, Envelope{}, ReadoutNoise{}, 1, true);
    ReconstructOptions ro;
    ro.norm_model = std::vector<double>(60, Vec3(0.2, 0.1, -0.25).norm());
    const BlochTrajectory b = reconstruct_bloch(s, remove_phase_ramp(s), ro);
    for (double z : b.Iz_abs) CHECK(z == doctest::Approx(0.25));
  }

  TEST_CASE("clamping is counted rather than fatal") {
    TrajectoryRecord eq;
    for (int i = 0; i < 100; ++i) eq.push(0.2 * i, Vec3(0.3, 0.0, 0.0), 0);
    const InductionSeries s = synthesize_readout(eq, 0.0, Envelope{}, ReadoutNoise{}, 1, true);
    ReconstructOptions ro;
    ro.norm_model = std::vector<double>(100, 0.2);
    const BlochTrajectory b = reconstruct_bloch(s, remove_phase_ramp(s), ro);
    CHECK(b.clamped == 100);
    CHECK(b.clamp_warning);
    for (double z : b.Iz_abs) CHECK(z == 0.0);
  }

  TEST_CASE("stretched-exponential lifetime") {
    std::mt19937 gen(7);
    std::normal_distribution<double> g(0.0, 0.01);
    std::vector<double> t, S, E, C;
    for (int i = 0; i < 400; ++i) {
      t.push_back(0.25 * i);
      S.push_back(std::exp(-std::sqrt(t.back() / 25.0)) * (1.0 + g(gen)));
      E.push_back(0.8 * std::exp(-t.back() / 30.0));
      C.push_back(0.4);
    }
    const LifetimeFit f = fit_lifetime(t, S);
    CHECK(f.T2_prime == doctest::Approx(25.0).epsilon(0.05));
    CHECK(f.r_squared >= 0.99);
    CHECK(f.stretch == 0.5);
    const LifetimeFit e = fit_lifetime(t, E, StretchModel::Free);
    CHECK(e.stretch == doctest::Approx(1.0).epsilon(0.1));
    CHECK(e.T2_prime == doctest::Approx(30.0).epsilon(0.02));
    const LifetimeFit c = fit_lifetime(t, C);
    CHECK(c.divergent);
    CHECK(std::isinf(c.T2_prime));

    std::vector<double> trunc = E;
    trunc[200] = 0.0;
    const LifetimeFit tr = fit_lifetime(t, trunc);
    CHECK(tr.truncated);
    CHECK(tr.last == 200);
  }

  TEST_CASE("mains pickup barely moves the lifetime") {
    std::vector<double> t, clean;
    TrajectoryRecord flat;
    for (int i = 0; i < 2000; ++i) flat.push(0.05 * i, Vec3(0.5, 0.0, 0.0), 0);
    Envelope env{1.0, 25.0, 0.5};
    const InductionSeries a = synthesize_readout(flat, 0.0, env, ReadoutNoise{}, 1);
    ReadoutNoise mains;
    mains.mains_amplitude = 0.01 * a.S.front();
    mains.mains_freq = 0.37;
    const InductionSeries b = synthesize_readout(flat, 0.0, env, mains, 1);
    const LifetimeFit fa = fit_lifetime(a.times, decompose_decay(a.S, 4).S_dec);
    const LifetimeFit fb = fit_lifetime(b.times, decompose_decay(b.S, 4).S_dec);
    CHECK(fa.T2_prime == doctest::Approx(25.0).epsilon(0.01));
    CHECK(std::abs(fb.T2_prime / fa.T2_prime - 1.0) < 0.02);
  }

  TEST_CASE("manifold series") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 40; ++i) pts.push_back(Vec3(i, 0, 0));
    const auto one = manifold_series(pts, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].samples.size() == 40);
    for (int i = 0; i < 40; ++i) CHECK(one[0].samples[i] == pts[i]);

    std::vector<Vec3> periodic;
    for (int i = 0; i < 40; ++i) periodic.push_back(Vec3(i % 4, 1, -1));
    for (const auto& m : manifold_series(periodic, 4)) {
      CHECK(m.rms == 0.0);
      CHECK(m.mean == Vec3(m.k, 1, -1));
    }
    CHECK_THROWS_AS(manifold_series(periodic, 30), std::invalid_argument);
  }

  TEST_CASE("aliased manifolds precess at the offset") {
    const double Delta = 0.02, tau = 0.2;
    const Vec3 axis = Vec3(1, 0, 1).normalized();
    const Vec3 e1 = Vec3(0, 1, 0), e2 = axis.cross(e1);
    std::vector<Vec3> pts;
    std::vector<double> times;
    for (int i = 0; i < 4000; ++i) {
      const double t = i * tau;
      const double ang = (i % 4) * kPi / 2 + Delta * t;
      pts.push_back(0.2 * axis + 0.05 * (std::cos(ang) * e1 + std::sin(ang) * e2));
      times.push_back(t);
    }
    const PrecessionFit f = fit_manifold_precession(pts, times, 4, axis);
    CHECK(f.rate == doctest::Approx(Delta).epsilon(0.05));
    for (double r : f.per_manifold) CHECK(r == doctest::Approx(Delta).epsilon(0.05));
    const PrecessionFit rev = fit_manifold_precession(pts, times, 4, -axis);
    CHECK(rev.rate == doctest::Approx(-Delta).epsilon(0.05));
  }
}
