#include "spinorbit/config.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "spinorbit/errors.hpp"

namespace spinorbit {

namespace {

const std::map<std::string, Experiment>& experiment_names() {
  static const std::map<std::string, Experiment> names{
      {"fid", Experiment::Fid},
      {"polygon", Experiment::Polygon},
      {"amplitude-sweep", Experiment::AmplitudeSweep},
      {"offset-screw", Experiment::OffsetScrew},
      {"emergence", Experiment::Emergence},
      {"amp-quench", Experiment::AmpQuench},
      {"phase-quench", Experiment::PhaseQuench},
      {"designer", Experiment::Designer},
      {"chirp-rap", Experiment::ChirpRap},
      {"floquet-validate", Experiment::FloquetValidate},
      {"reconstruct", Experiment::Reconstruct},
  };
  return names;
}

[[noreturn]] void fail(const std::string& pointer, const std::string& msg) { throw ConfigError(pointer + ": " + msg); }

void check_keys(const json& j, const std::string& where, const std::vector<std::string>& known) {
  if (!j.is_object()) fail(where.empty() ? "/" : where, "expected an object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) fail(where + "/" + key, "unknown field");
}

double num(const json& j, const std::string& key, const std::string& where, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number() || !std::isfinite(v.get<double>())) fail(where + "/" + key, "expected a finite number");
  return v.get<double>();
}

long integer(const json& j, const std::string& key, const std::string& where, long fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) fail(where + "/" + key, "expected an integer");
  return v.get<long>();
}

bool boolean(const json& j, const std::string& key, const std::string& where, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) fail(where + "/" + key, "expected a boolean");
  return j.at(key).get<bool>();
}

}  // namespace

Experiment experiment_from_string(const std::string& name) {
  const auto& names = experiment_names();
  const auto it = names.find(name);
  if (it == names.end()) fail("/experiment", "unknown experiment '" + name + "'");
  return it->second;
}

std::string to_string(Experiment e) {
  for (const auto& [name, value] : experiment_names())
    if (value == e) return name;
  return "unknown";
}

RunConfig parse_run_config(const json& doc, Profile profile) {
  check_keys(doc, "", {"experiment", "graph", "protocol", "realizations", "seed", "threads", "output", "plateau_window",
                       "sweep", "readout", "floquet", "description"});
  RunConfig cfg;
  cfg.raw = doc;
  if (!doc.contains("experiment") || !doc.at("experiment").is_string()) fail("/experiment", "required string");
  cfg.experiment = experiment_from_string(doc.at("experiment").get<std::string>());

  const int default_L = profile == Profile::Paper ? 14 : 10;
  const int default_realizations = 5;
  const json graph = doc.value("graph", json::object());
  check_keys(graph, "/graph", {"L", "r_min", "r_max", "c_pack", "normalize"});
  cfg.graph.L = static_cast<int>(integer(graph, "L", "/graph", default_L));
  cfg.graph.r_min = num(graph, "r_min", "/graph", 0.9);
  cfg.graph.r_max = num(graph, "r_max", "/graph", 1.1);
  cfg.graph.c_pack = num(graph, "c_pack", "/graph", 1.5);
  cfg.graph.normalize = boolean(graph, "normalize", "/graph", true);
  if (cfg.graph.L < 2 || cfg.graph.L > 20) fail("/graph/L", "must lie in [2, 20]");
  if (!(cfg.graph.r_min > 0.0 && cfg.graph.r_min < cfg.graph.r_max)) fail("/graph/r_min", "need 0 < r_min < r_max");
  if (!(cfg.graph.c_pack > 0.0)) fail("/graph/c_pack", "must be positive");

  const bool needs_protocol = cfg.experiment != Experiment::Fid;
  if (doc.contains("protocol")) cfg.protocol = protocol_from_json(doc.at("protocol"), "/protocol");
  else if (needs_protocol) fail("/protocol", "required for experiment " + to_string(cfg.experiment));

  cfg.realizations = static_cast<int>(integer(doc, "realizations", "", default_realizations));
  if (cfg.realizations < 1) fail("/realizations", "must be >= 1");
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned() && !(doc.at("seed").is_number_integer() && doc.at("seed").get<long>() >= 0))
      fail("/seed", "expected a non-negative integer");
    cfg.seed = doc.at("seed").get<std::uint64_t>();
  }
  cfg.threads = static_cast<int>(integer(doc, "threads", "", 1));
  if (cfg.threads < 1) fail("/threads", "must be >= 1");
  if (doc.contains("output")) {
    const json& o = doc.at("output");
    check_keys(o, "/output", {"dir"});
    if (o.contains("dir")) {
      if (!o.at("dir").is_string()) fail("/output/dir", "expected a string");
      cfg.output_dir = o.at("dir").get<std::string>();
    }
  }
  if (doc.contains("plateau_window")) {
    const json& w = doc.at("plateau_window");
    if (!w.is_array() || w.size() != 2 || !w[0].is_number_integer() || !w[1].is_number_integer())
      fail("/plateau_window", "expected [first, last] pulse indices");
    cfg.plateau_first = w[0].get<long>();
    cfg.plateau_last = w[1].get<long>();
    if (cfg.plateau_first < 0 || cfg.plateau_last <= cfg.plateau_first) fail("/plateau_window", "need 0 <= first < last");
  }
  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    check_keys(s, "/sweep", {"parameter", "values"});
    SweepSpec sw;
    if (!s.contains("parameter") || !s.at("parameter").is_string()) fail("/sweep/parameter", "required string");
    sw.parameter = s.at("parameter").get<std::string>();
    static const std::vector<std::string> allowed{"ac_amplitude", "delta", "delta_theta", "eta_noise"};
    if (std::find(allowed.begin(), allowed.end(), sw.parameter) == allowed.end())
      fail("/sweep/parameter", "must be one of ac_amplitude, delta, delta_theta, eta_noise");
    if (!s.contains("values") || !s.at("values").is_array()) fail("/sweep/values", "required array");
    if (s.at("values").empty()) fail("/sweep/values", "grid is empty");
    for (std::size_t i = 0; i < s.at("values").size(); ++i) {
      const json& v = s.at("values")[i];
      if (!v.is_number()) fail("/sweep/values/" + std::to_string(i), "expected a number");
      sw.values.push_back(v.get<double>());
    }
    cfg.sweep = sw;
  }
  if (cfg.experiment == Experiment::AmplitudeSweep && !cfg.sweep) fail("/sweep", "required for amplitude-sweep");
  if (doc.contains("readout")) {
    const json& r = doc.at("readout");
    check_keys(r, "/readout",
               {"ramp_per_pulse", "noise_sigma", "mains_fraction", "mains_freq", "envelope_T", "delta0_fraction",
                "use_reference"});
    cfg.readout.ramp_per_pulse = num(r, "ramp_per_pulse", "/readout", 0.0);
    cfg.readout.noise_sigma = num(r, "noise_sigma", "/readout", 0.0);
    cfg.readout.mains_fraction = num(r, "mains_fraction", "/readout", 0.0);
    cfg.readout.mains_freq = num(r, "mains_freq", "/readout", 0.0);
    cfg.readout.envelope_T = num(r, "envelope_T", "/readout", 0.0);
    cfg.readout.delta0_fraction = num(r, "delta0_fraction", "/readout", 0.05);
    cfg.readout.use_reference = boolean(r, "use_reference", "/readout", false);
    if (cfg.readout.noise_sigma < 0.0) fail("/readout/noise_sigma", "must be >= 0");
    if (cfg.readout.envelope_T < 0.0) fail("/readout/envelope_T", "must be >= 0");
  }
  if (doc.contains("floquet")) {
    const json& f = doc.at("floquet");
    check_keys(f, "/floquet", {"halvings"});
    cfg.floquet_halvings = static_cast<int>(integer(f, "halvings", "/floquet", 3));
    if (cfg.floquet_halvings < 1) fail("/floquet/halvings", "must be >= 1");
  }
  if (cfg.experiment == Experiment::FloquetValidate && cfg.graph.L > 8)
    fail("/graph/L", "floquet-validate needs L <= 8");
  return cfg;
}

RunConfig load_run_config(const std::string& path, Profile profile) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("/: ") + e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("/: invalid JSON: ") + e.what());
  }
  return parse_run_config(doc, profile);
}

}  // namespace spinorbit
