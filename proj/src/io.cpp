#include "spinorbit/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "spinorbit/errors.hpp"

namespace spinorbit {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

namespace {

[[noreturn]] void config_fail(const std::string& pointer, const std::string& msg) {
  throw ConfigError((pointer.empty() ? std::string("/") : pointer) + ": " + msg);
}

double get_number(const json& j, const std::string& key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_number()) config_fail(where + "/" + key, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) config_fail(where + "/" + key, "must be finite");
  return x;
}

double number_or(const json& j, const std::string& key, double fallback, const std::string& where) {
  return j.contains(key) ? get_number(j, key, where) : fallback;
}

long get_count(const json& j, const std::string& key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_number_integer()) config_fail(where + "/" + key, "expected an integer");
  return v.get<long>();
}

ProtocolSegment segment_from_json(const json& j, const std::string& where, double tau) {
  if (!j.is_object()) config_fail(where, "segment must be an object");
  static const std::vector<std::string> known{"n_pulses", "ac_amplitude", "ac_omega", "ac_omega_offset", "chirp",
                                              "ac_phase", "waveform", "N", "k"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) config_fail(where + "/" + key, "unknown field");
  ProtocolSegment s;
  if (!j.contains("n_pulses")) config_fail(where + "/n_pulses", "required");
  s.n_pulses = get_count(j, "n_pulses", where);
  if (s.n_pulses < 1) config_fail(where + "/n_pulses", "must be >= 1");
  s.N = j.contains("N") ? static_cast<int>(get_count(j, "N", where)) : 4;
  s.k = j.contains("k") ? static_cast<int>(get_count(j, "k", where)) : 1;
  if (s.N < 1 || s.N > 64) config_fail(where + "/N", "must lie in [1, 64]");
  if (s.k < 0) config_fail(where + "/k", "must be >= 0");
  s.ac_amplitude = number_or(j, "ac_amplitude", 0.0, where);
  s.ac_phase = number_or(j, "ac_phase", 0.0, where);
  if (j.contains("chirp")) {
    const json& c = j.at("chirp");
    const std::string cw = where + "/chirp";
    if (!c.is_object() || !c.contains("omega_start") || !c.contains("omega_end"))
      config_fail(cw, "needs omega_start and omega_end");
    s.chirp = Chirp{get_number(c, "omega_start", cw), get_number(c, "omega_end", cw)};
    if (j.contains("ac_omega")) config_fail(where + "/ac_omega", "give either ac_omega or chirp");
  }
  // ac_omega defaults to the resonance 2 pi k / (N tau), optionally offset
  const double res = 2.0 * std::numbers::pi * s.k / (s.N * tau);
  s.ac_omega = j.contains("ac_omega") ? get_number(j, "ac_omega", where) : res;
  if (j.contains("ac_omega_offset")) {
    if (j.contains("ac_omega")) config_fail(where + "/ac_omega_offset", "cannot be combined with ac_omega");
    s.ac_omega = res + get_number(j, "ac_omega_offset", where);
  }
  if (j.contains("waveform")) {
    const json& w = j.at("waveform");
    const std::string ww = where + "/waveform";
    if (!w.is_object()) config_fail(ww, "must be an object");
    const std::string type = w.value("type", std::string("sinusoid"));
    if (type == "sinusoid") {
      s.waveform.kind = Waveform::Kind::Sinusoid;
    } else if (type == "distorted") {
      s.waveform.kind = Waveform::Kind::Distorted;
      s.waveform.a1 = number_or(w, "a1", 1.0, ww);
      s.waveform.a2 = number_or(w, "a2", 1.0, ww);
    } else {
      config_fail(ww + "/type", "must be \"sinusoid\" or \"distorted\"");
    }
  }
  return s;
}

}  // namespace

DriveProtocol protocol_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) config_fail(where, "protocol must be an object");
  static const std::vector<std::string> known{"tau", "t_pulse", "t_acq", "Omega", "delta", "theta_nominal",
                                              "delta_theta", "eta_noise", "acq_jitter", "full_model", "segments"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) config_fail(where + "/" + key, "unknown field");

  const double delta = number_or(j, "delta", 0.0, where);
  const bool has_theta = j.contains("theta_nominal");
  const bool has_omega = j.contains("Omega");
  const bool has_tp = j.contains("t_pulse");
  const bool has_tau = j.contains("tau");
  const bool has_tacq = j.contains("t_acq");

  double tau = has_tau ? get_number(j, "tau", where) : 0.0;
  double t_pulse = has_tp ? get_number(j, "t_pulse", where) : 0.0;
  if (!has_tau) {
    if (!(has_tp && has_tacq)) config_fail(where + "/tau", "required (or give t_pulse and t_acq)");
    tau = t_pulse + get_number(j, "t_acq", where);
  }
  if (!(tau > 0.0)) config_fail(where + "/tau", "must be positive");

  DriveProtocol p;
  if (has_theta && has_omega) {
    const double theta = get_number(j, "theta_nominal", where);
    const double omega = get_number(j, "Omega", where);
    if (!(omega > 0.0)) config_fail(where + "/Omega", "must be positive");
    p = DriveProtocol::from_angle(tau, theta, omega, delta);
    if (has_tp && std::abs(p.t_pulse - t_pulse) > 1e-9 * tau)
      config_fail(where + "/t_pulse", "inconsistent with theta_nominal / sqrt(Omega^2 + delta^2)");
  } else if (has_tp && has_omega) {
    const double omega = get_number(j, "Omega", where);
    if (!(omega > 0.0)) config_fail(where + "/Omega", "must be positive");
    p = DriveProtocol::from_pulse_width(tau, t_pulse, omega, delta);
  } else if (has_theta && has_tp) {
    const double theta = get_number(j, "theta_nominal", where);
    if (!(t_pulse > 0.0)) config_fail(where + "/t_pulse", "must be positive");
    const double rabi = theta / t_pulse;
    if (!(rabi > std::abs(delta))) config_fail(where + "/theta_nominal", "theta / t_pulse must exceed |delta|");
    p = DriveProtocol::from_pulse_width(tau, t_pulse, std::sqrt(rabi * rabi - delta * delta), delta);
    p.theta_nominal = theta;
  } else {
    config_fail(where, "give two of theta_nominal, Omega, t_pulse");
  }
  if (!(p.t_acq > 0.0)) config_fail(where + "/t_pulse", "pulse does not fit inside tau");
  if (has_tacq && has_tau && std::abs(get_number(j, "t_acq", where) - p.t_acq) > 1e-9 * tau)
    config_fail(where + "/t_acq", "must equal tau - t_pulse");

  p.delta_theta = number_or(j, "delta_theta", 0.0, where);
  p.eta_noise = number_or(j, "eta_noise", 0.0, where);
  p.acq_jitter = number_or(j, "acq_jitter", 0.05, where);
  if (!(p.eta_noise >= 0.0 && p.eta_noise < 1.0)) config_fail(where + "/eta_noise", "must lie in [0, 1)");
  if (!(p.acq_jitter >= 0.0 && p.acq_jitter < 1.0)) config_fail(where + "/acq_jitter", "must lie in [0, 1)");
  if (j.contains("full_model")) {
    if (!j.at("full_model").is_boolean()) config_fail(where + "/full_model", "expected a boolean");
    p.full_model = j.at("full_model").get<bool>();
  }
  if (!j.contains("segments") || !j.at("segments").is_array() || j.at("segments").empty())
    config_fail(where + "/segments", "required non-empty array");
  const json& segs = j.at("segments");
  for (std::size_t i = 0; i < segs.size(); ++i)
    p.segments.push_back(segment_from_json(segs[i], where + "/segments/" + std::to_string(i), tau));
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    config_fail(where, e.what());
  }
  return p;
}

json protocol_to_json(const DriveProtocol& p) {
  json j;
  j["tau"] = p.tau;
  j["t_pulse"] = p.t_pulse;
  j["t_acq"] = p.t_acq;
  j["Omega"] = p.Omega;
  j["delta"] = p.delta;
  j["theta_nominal"] = p.theta_nominal;
  j["delta_theta"] = p.delta_theta;
  j["eta_noise"] = p.eta_noise;
  j["acq_jitter"] = p.acq_jitter;
  j["full_model"] = p.full_model;
  j["segments"] = json::array();
  for (const auto& s : p.segments) {
    json js;
    js["n_pulses"] = s.n_pulses;
    js["ac_amplitude"] = s.ac_amplitude;
    if (s.chirp) js["chirp"] = {{"omega_start", s.chirp->omega_start}, {"omega_end", s.chirp->omega_end}};
    else js["ac_omega"] = s.ac_omega;
    js["ac_phase"] = s.ac_phase;
    if (s.waveform.kind == Waveform::Kind::Sinusoid) js["waveform"] = {{"type", "sinusoid"}};
    else js["waveform"] = {{"type", "distorted"}, {"a1", s.waveform.a1}, {"a2", s.waveform.a2}};
    js["N"] = s.N;
    js["k"] = s.k;
    j["segments"].push_back(js);
  }
  return j;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string protocol_hash(const DriveProtocol& p) { return fnv1a_hex(protocol_to_json(p).dump()); }

json graph_to_json(const SpinGraph& g) {
  json j;
  j["L"] = g.size();
  j["seed"] = g.seed();
  j["r_min"] = g.r_min();
  j["r_max"] = g.r_max();
  j["c_exp"] = g.c_exp();
  j["field_axis"] = vec_to_json(g.field_axis());
  j["positions"] = json::array();
  for (const auto& p : g.positions()) j["positions"].push_back(vec_to_json(p));
  return j;
}

SpinGraph graph_from_json(const json& j) {
  try {
    std::vector<Vec3> pos;
    for (const auto& p : j.at("positions")) pos.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    if (j.contains("L") && j.at("L").get<std::size_t>() != pos.size())
      throw ConfigError("/L: does not match the number of positions");
    Vec3 axis = Vec3::UnitZ();
    if (j.contains("field_axis")) {
      const auto& a = j.at("field_axis");
      axis = Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
    }
    return SpinGraph(std::move(pos), axis, j.value("c_exp", 1.0), j.at("r_min").get<double>(),
                     j.at("r_max").get<double>(), j.value("seed", std::uint64_t{0}));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, long line) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  if (std::string_view(b, e - b) == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (std::string_view(b, e - b) == "inf") return std::numeric_limits<double>::infinity();
  if (std::string_view(b, e - b) == "-inf") return -std::numeric_limits<double>::infinity();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw std::runtime_error("CSV line " + std::to_string(line) + ": malformed number '" + s + "'");
  return v;
}

void expect_header(std::istream& is, const std::string& header) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("CSV: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw std::runtime_error("CSV: expected header '" + header + "', got '" + line + "'");
}

}  // namespace

void write_record_csv(std::ostream& os, const TrajectoryRecord& rec) {
  os << "pulse,time,mx,my,mz,segment\n";
  for (std::size_t i = 0; i < rec.size(); ++i)
    os << i << ',' << format_double(rec.times[i]) << ',' << format_double(rec.mx[i]) << ','
       << format_double(rec.my[i]) << ',' << format_double(rec.mz[i]) << ',' << rec.segment[i] << '\n';
}

TrajectoryRecord read_record_csv(std::istream& is) {
  expect_header(is, "pulse,time,mx,my,mz,segment");
  TrajectoryRecord rec;
  std::string line;
  long ln = 1;
  while (std::getline(is, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw std::runtime_error("CSV line " + std::to_string(ln) + ": expected 6 fields");
    rec.push(parse_double(f[1], ln), Vec3(parse_double(f[2], ln), parse_double(f[3], ln), parse_double(f[4], ln)),
             static_cast<int>(parse_double(f[5], ln)));
  }
  return rec;
}

void write_series_csv(std::ostream& os, const InductionSeries& s) {
  os << "window,time,S,phi_raw\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    os << i << ',' << format_double(s.times[i]) << ',' << format_double(s.S[i]) << ',' << format_double(s.phi_raw[i])
       << '\n';
}

InductionSeries read_series_csv(std::istream& is) {
  expect_header(is, "window,time,S,phi_raw");
  InductionSeries s;
  std::string line;
  long ln = 1;
  while (std::getline(is, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw std::runtime_error("CSV line " + std::to_string(ln) + ": expected 4 fields");
    s.times.push_back(parse_double(f[1], ln));
    s.S.push_back(parse_double(f[2], ln));
    s.phi_raw.push_back(parse_double(f[3], ln));
  }
  if (s.times.size() >= 2) s.tau = s.times[1] - s.times[0];
  return s;
}

void write_bloch_csv(std::ostream& os, const BlochTrajectory& b) {
  os << "time,Ix,Iy,Iz_abs,S_dec,S_osc\n";
  for (std::size_t i = 0; i < b.size(); ++i)
    os << format_double(b.times[i]) << ',' << format_double(b.Ix[i]) << ',' << format_double(b.Iy[i]) << ','
       << format_double(b.Iz_abs[i]) << ',' << format_double(b.S_dec[i]) << ',' << format_double(b.S_osc[i]) << '\n';
}

json vec_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

namespace {
json vecs_to_json(const std::vector<Vec3>& vs) {
  json a = json::array();
  for (const auto& v : vs) a.push_back(vec_to_json(v));
  return a;
}
// JSON has no infinity; non-finite values become null
json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
}  // namespace

json emergent_field_report(const EmergentFieldFamily& f) {
  json j;
  j["alpha"] = f.alpha;
  j["v_x"] = f.v_x;
  j["N"] = f.N;
  j["theta_c"] = f.angle.theta_c;
  j["delta_theta"] = f.angle.delta_theta;
  j["duty"] = f.duty;
  json uk = json::array();
  for (const auto& u : f.u_tilde) uk.push_back(json::array({u.y(), u.z()}));
  j["u_k"] = uk;
  j["w_tilde"] = vecs_to_json(f.w_tilde);
  j["w_rot"] = vecs_to_json(f.w_rot);
  j["interference"] = vecs_to_json(f.interference);
  j["f"] = f.f;
  json norms = json::array();
  for (const auto& w : f.w_tilde) norms.push_back(w.norm());
  j["norms"] = norms;
  return j;
}

json plateau_report(const PlateauPrediction& p) {
  json j;
  j["mu"] = p.mu;
  j["epsilon_k"] = p.epsilon_k;
  j["beta_k"] = p.beta_k;
  j["h_dd"] = p.h_dd;
  j["h_used"] = p.h_used;
  j["M_k"] = vecs_to_json(p.M_k);
  j["w_k"] = vecs_to_json(p.w_k);
  j["ell"] = p.ell;
  j["Phi"] = p.Phi;
  j["Phi_flagged"] = p.phi_flagged;
  j["center"] = vec_to_json(p.center);
  j["n_hat"] = vec_to_json(p.n_hat);
  return j;
}

json extraction_report(const PlateauExtraction& e) {
  json j;
  j["N"] = e.N;
  j["window"] = json::array({e.first, e.last});
  j["centroids"] = vecs_to_json(e.centroids);
  j["dispersion"] = e.dispersion;
  j["max_dispersion"] = e.max_dispersion;
  j["min_separation"] = finite_or_null(e.min_separation);
  j["stable"] = e.stable;
  j["manifold_count"] = e.manifold_count;
  j["shift"] = e.shift;
  j["angle_deg"] = e.angle_deg;
  j["plane_normal"] = vec_to_json(e.plane_normal);
  j["centre"] = vec_to_json(e.centre);
  return j;
}

json quench_report(const QuenchPrediction& q) {
  return json{{"beta_before", q.beta_before}, {"beta_after", q.beta_after},     {"gamma", q.gamma},
              {"closing", q.closing},         {"sigma", q.sigma},               {"magnetization_ratio", q.magnetization_ratio}};
}

json lifetime_report(const LifetimeFit& f) {
  return json{{"T2_prime", finite_or_null(f.T2_prime)},
              {"amplitude", f.amplitude},
              {"stretch", f.stretch},
              {"residual_rms", f.residual_rms},
              {"r_squared", f.r_squared},
              {"window", json::array({f.first, f.last})},
              {"truncated", f.truncated},
              {"divergent", f.divergent}};
}

json convergence_report(const ConvergenceReport& r) {
  json j;
  j["k"] = r.k;
  j["order"] = r.order;
  j["ratios"] = r.ratios;
  j["k_defects"] = r.k_defects;
  j["points"] = json::array();
  for (const auto& p : r.points)
    j["points"].push_back({{"tau", p.tau},
                           {"period", p.period},
                           {"alpha", p.alpha},
                           {"defect_spectral", p.defect.spectral},
                           {"defect_frobenius", p.defect.frobenius}});
  return j;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << contents;
  if (contents.empty() || contents.back() != '\n') os << '\n';
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace spinorbit
