#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "spinorbit/errors.hpp"
#include "spinorbit/experiments.hpp"

using namespace spinorbit;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

RunConfig small_polygon(const fs::path& dir) {
  json doc = json::parse(R"({
    "experiment": "polygon",
    "graph": {"L": 6},
    "protocol": {"tau": 0.2, "t_pulse": 0.13333333333333333, "theta_nominal": 1.413716694115407, "delta": 1.0,
                 "eta_noise": 0.01, "segments": [{"n_pulses": 400, "ac_amplitude": 0.5}]},
    "realizations": 2,
    "plateau_window": [100, 400]
  })");
  doc["output"] = {{"dir", dir.string()}};
  return parse_run_config(doc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spinorbit_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("identical configs give byte-identical artifacts") {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    std::ostringstream log;
    const ExperimentOutcome oa = run_experiment(small_polygon(a), log);
    const ExperimentOutcome ob = run_experiment(small_polygon(b), log);
    CHECK(oa.violations.empty());
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
      const fs::path other = b / entry.path().filename();
      REQUIRE(fs::exists(other));
      if (entry.path().filename() == "summary.json" || entry.path().filename() == "summary.txt") {
        // these mention the output directory
        continue;
      }
      CHECK_MESSAGE(slurp(entry.path()) == slurp(other), entry.path().filename().string());
      ++files;
    }
    CHECK(files >= 4);
    CHECK(fs::exists(a / "prediction.json"));
    CHECK(oa.summary["segments"][0].contains("extraction"));
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("sweep parameters") {
    const RunConfig cfg = small_polygon(scratch("unused"));
    const DriveProtocol p = cfg.protocol;
    const DriveProtocol amp = with_parameter(p, "ac_amplitude", 1.25);
    CHECK(amp.segments[0].ac_amplitude == 1.25);
    const DriveProtocol d = with_parameter(p, "delta", 2.0);
    CHECK(d.delta == 2.0);
    CHECK(d.t_pulse == p.t_pulse);
    CHECK(d.theta_nominal == p.theta_nominal);
    CHECK(std::hypot(d.Omega, d.delta) * d.t_pulse == doctest::Approx(p.theta_nominal));
    CHECK(d.segments[0].ac_omega == p.segments[0].ac_omega);
    CHECK(with_parameter(p, "delta_theta", 0.05).applied_angle() == doctest::Approx(p.theta_nominal + 0.05));
    CHECK(with_parameter(p, "eta_noise", 0.0316).eta_noise == 0.0316);
    CHECK_THROWS_AS(with_parameter(p, "eta_noise", 2.0), ConfigError);
    CHECK_THROWS_AS(with_parameter(p, "delta", 100.0), ConfigError);
    CHECK_THROWS_AS(with_parameter(p, "phase", 0.1), ConfigError);
  }

  TEST_CASE("ensemble prediction averages per k") {
    const RunConfig cfg = small_polygon(scratch("unused"));
    std::vector<PlateauPrediction> preds;
    for (std::uint64_t s : {1, 2, 3}) {
      const SpinGraph g = generate_graph(6, 0.9, 1.1, s).normalized_to_median();
      preds.push_back(plateau_magnetization(g, cfg.protocol, cfg.protocol.segments[0]));
    }
    const PlateauPrediction e = ensemble_prediction(preds);
    for (int k = 0; k < 4; ++k) {
      const Vec3 mean = (preds[0].M_k[k] + preds[1].M_k[k] + preds[2].M_k[k]) / 3.0;
      CHECK((e.M_k[k] - mean).norm() < 1e-15);
    }
    const PlateauPrediction single = ensemble_prediction({preds[1]});
    CHECK(single.ell == doctest::Approx(preds[1].ell));
    CHECK(single.Phi == doctest::Approx(preds[1].Phi));
  }

  TEST_CASE("quench cycles measured on a synthetic record") {
    const RunConfig cfg = small_polygon(scratch("unused"));
    DriveProtocol p = cfg.protocol;
    ProtocolSegment open = p.segments[0], closed = p.segments[0];
    open.n_pulses = 200;
    closed.n_pulses = 100;
    closed.ac_amplitude = 0.0;
    p.segments = {open, closed, open, closed, open};
    TrajectoryRecord r;
    const double level[5] = {0.3, 0.3, 0.24, 0.24, 0.192};
    long n = 0;
    for (int s = 0; s < 5; ++s)
      for (long i = 0; i < p.segments[s].n_pulses; ++i, ++n) {
        const double a = level[s];
        r.push(n * p.tau, Vec3(a * std::cos(n * kPi / 2), 0.0, a * std::sin(n * kPi / 2)), s);
      }
    const std::vector<SpinGraph> graphs{generate_graph(6, 0.9, 1.1, 1).normalized_to_median()};
    const auto cycles = measure_quench_cycles(r, p, graphs);
    REQUIRE(cycles.size() == 2);
    CHECK(cycles[0].reopen_segment == 2);
    CHECK(cycles[1].reopen_segment == 4);
    for (const auto& c : cycles) {
      CHECK(c.ratio == doctest::Approx(0.8));
      CHECK(c.predicted > 0.0);
      CHECK(c.predicted < 1.0);
    }
  }

  TEST_CASE("sweep rejects an empty run plan before simulating") {
    RunConfig cfg = small_polygon(scratch("sweep_bad"));
    cfg.sweep = SweepSpec{"eta_noise", {0.0, 1.5}};
    std::ostringstream log;
    CHECK_THROWS_AS(run_sweep(cfg, log), ConfigError);
    CHECK(log.str().find("realization") == std::string::npos);
  }
}
