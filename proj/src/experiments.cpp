#include "spinorbit/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include "spinorbit/errors.hpp"
#include "spinorbit/svg_plot.hpp"

namespace spinorbit {

namespace fs = std::filesystem;

namespace {

constexpr double kUnitarityTol = 1e-9;

struct Artifacts {
  fs::path dir;

  explicit Artifacts(const std::string& d) : dir(d) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + d + "': " + ec.message());
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  void text(const std::string& name, const std::string& body) const { write_text_file(path(name), body); }
  void json_file(const std::string& name, const json& j) const { write_text_file(path(name), j.dump(2)); }
  void record(const std::string& name, const TrajectoryRecord& rec) const {
    std::ostringstream os;
    write_record_csv(os, rec);
    std::ofstream f(path(name), std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path(name));
    f << os.str();
  }
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << x;
  return os.str();
}

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

void check_record(const TrajectoryRecord& rec, std::vector<std::string>& violations, const std::string& what) {
  if (!rec.valid) throw NumericError(what + ": " + rec.error);
  if (rec.max_norm_deviation > kUnitarityTol)
    violations.push_back(what + ": state norm drifted by " + fmt(rec.max_norm_deviation));
}

void check_prediction(const PlateauPrediction& p, std::vector<std::string>& violations, const std::string& what) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const Vec3& m : p.M_k) {
    lo = std::min(lo, m.norm());
    hi = std::max(hi, m.norm());
  }
  if (!p.M_k.empty() && hi - lo > 1e-12 * std::max(1.0, hi))
    violations.push_back(what + ": predicted |M_k| differs across k");
  for (std::size_t k = 0; k < p.beta_k.size(); ++k) {
    const double e = p.epsilon_k[k], b = p.beta_k[k];
    if (e != 0.0 && (b < 0.0) != (e > 0.0)) violations.push_back(what + ": beta sign does not oppose epsilon");
  }
}

std::vector<PlateauPrediction> predictions_for(const std::vector<SpinGraph>& graphs, const DriveProtocol& protocol,
                                               const ProtocolSegment& seg) {
  std::vector<PlateauPrediction> out;
  for (const auto& g : graphs) out.push_back(plateau_magnetization(g, protocol, seg));
  return out;
}

double mean_norm(const TrajectoryRecord& r, long a, long b) {
  a = std::max<long>(a, 0);
  b = std::min<long>(b, static_cast<long>(r.size()));
  if (b <= a) return 0.0;
  double s = 0.0;
  for (long i = a; i < b; ++i) s += r.sample(i).norm();
  return s / static_cast<double>(b - a);
}

LifetimeFit magnitude_lifetime(const TrajectoryRecord& rec, int N, long first) {
  std::vector<double> m(rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) m[i] = rec.sample(i).norm();
  const auto dec = decompose_decay(m, std::max(1, N));
  return fit_lifetime(rec.times, dec.S_dec, StretchModel::FixedHalf, first, -1);
}

struct SegmentAnalysis {
  json report;
  std::optional<PlateauExtraction> extraction;
  std::optional<PlateauPrediction> prediction;
  PolygonGeometry measured;
};

SegmentAnalysis analyse_segment(const DisorderResult& res, const DriveProtocol& protocol, std::size_t si, long first,
                                long last, std::vector<std::string>& violations) {
  SegmentAnalysis out;
  const ProtocolSegment& seg = protocol.segments[si];
  json& j = out.report;
  j["segment"] = si;
  j["ac_amplitude"] = seg.ac_amplitude;
  j["ac_phase"] = seg.ac_phase;
  j["N"] = seg.N;
  j["k"] = seg.k;
  const bool resonant = is_resonant(seg, protocol);
  j["resonant"] = resonant;
  std::vector<Vec3> predicted;
  if (resonant) {
    try {
      out.prediction = ensemble_prediction(predictions_for(res.graphs, protocol, seg));
      check_prediction(*out.prediction, violations, "segment " + std::to_string(si));
      j["prediction"] = plateau_report(*out.prediction);
      j["emergent_field"] = emergent_field_report(out.prediction->field);
      predicted = predicted_samples(*out.prediction, protocol);
    } catch (const std::invalid_argument& e) {
      j["prediction_error"] = e.what();
    }
  }
  const long n = static_cast<long>(res.mean.size());
  last = std::min(last, n);
  if (last - first < 20L * seg.N) {
    j["extraction_error"] = "window [" + std::to_string(first) + ", " + std::to_string(last) +
                            ") holds fewer than 20 N samples";
    return out;
  }
  // pulse indices count from the record start; classes are taken relative to the segment start
  TrajectoryRecord shifted;
  const long start = protocol.segment_start(si);
  for (long i = start; i < last; ++i) shifted.push(res.mean.times[i], res.mean.sample(i), res.mean.segment[i]);
  out.extraction = extract_plateaus(shifted, seg.N, first - start, last - start, predicted.empty() ? nullptr : &predicted);
  out.extraction->first += start;
  out.extraction->last += start;
  j["extraction"] = extraction_report(*out.extraction);
  out.measured = polygon_geometry(out.extraction->centroids, protocol.pulse_axis());
  j["measured"] = {{"ell", out.measured.ell},
                   {"Phi", out.measured.Phi},
                   {"along_n", out.measured.along},
                   {"magnitude", out.measured.magnitude}};
  if (out.prediction && out.prediction->M_k.front().norm() > 0.0)
    j["magnitude_scale"] = out.measured.magnitude / out.prediction->M_k.front().norm();
  return out;
}

std::string polygon_table(const SegmentAnalysis& a) {
  std::ostringstream os;
  if (!a.extraction) return "  (no extraction window)\n";
  const auto& ex = *a.extraction;
  os << "  window [" << ex.first << ", " << ex.last << ")  manifolds " << ex.manifold_count << "/" << ex.N
     << (ex.stable ? "  stable" : "  NOT stable") << "\n";
  os << "  class  |centroid|   dispersion  angle_to_prediction_deg\n";
  for (int c = 0; c < ex.N; ++c) {
    os << "  " << std::setw(5) << c << "  " << std::setw(10) << fmt(ex.centroids[c].norm()) << "  " << std::setw(10)
       << fmt(ex.dispersion[c]) << "  "
       << (ex.angle_deg.empty() ? std::string("-") : fmt(ex.angle_deg[c], 3)) << "\n";
  }
  os << "  ell measured " << fmt(a.measured.ell) << "  Phi measured " << fmt(deg(a.measured.Phi), 3) << " deg";
  if (a.prediction)
    os << "  |  ell predicted " << fmt(a.prediction->ell) << "  Phi predicted " << fmt(deg(a.prediction->Phi), 3)
       << " deg";
  os << "\n";
  return os.str();
}

DriveProtocol closed_copy(const DriveProtocol& p) {
  DriveProtocol q = p;
  for (auto& s : q.segments) s.ac_amplitude = 0.0;
  return q;
}

void stamp(DisorderResult& res, const DriveProtocol& protocol) {
  const std::string h = protocol_hash(protocol);
  res.mean.protocol_hash = h;
  for (auto& r : res.realizations) r.protocol_hash = h;
}

DisorderResult simulate(const RunConfig& cfg, const DriveProtocol& protocol, std::ostream& log) {
  log << "simulating L=" << cfg.graph.L << ", " << cfg.realizations << " realization(s), "
      << protocol.total_pulses() << " pulses\n";
  DisorderResult res = disorder_average(disorder_spec(cfg, protocol));
  stamp(res, protocol);
  return res;
}

void write_records(const Artifacts& art, const DisorderResult& res) {
  art.record("record_mean.csv", res.mean);
  for (std::size_t i = 0; i < res.realizations.size(); ++i)
    art.record("record_r" + std::to_string(i) + ".csv", res.realizations[i]);
}

json base_summary(const RunConfig& cfg, const DriveProtocol& protocol) {
  json s;
  s["experiment"] = to_string(cfg.experiment);
  s["protocol_hash"] = protocol_hash(protocol);
  s["protocol"] = protocol_to_json(protocol);
  s["graph"] = {{"L", cfg.graph.L},
                {"r_min", cfg.graph.r_min},
                {"r_max", cfg.graph.r_max},
                {"c_pack", cfg.graph.c_pack},
                {"normalize", cfg.graph.normalize}};
  s["realizations"] = cfg.realizations;
  s["seed"] = cfg.seed;
  return s;
}

// ---------------------------------------------------------------- experiments

ExperimentOutcome run_fid(const RunConfig& cfg, const Artifacts& art, std::ostream& log) {
  ExperimentOutcome out;
  out.summary = base_summary(cfg, cfg.protocol);
  json reals = json::array();
  std::vector<FidTrace> traces;
  for (int i = 0; i < cfg.realizations; ++i) {
    const std::uint64_t s = cfg.seed + static_cast<std::uint64_t>(i);
    GraphOptions go;
    go.c_pack = cfg.graph.c_pack;
    SpinGraph g = generate_graph(cfg.graph.L, cfg.graph.r_min, cfg.graph.r_max, s, go);
    if (cfg.graph.normalize) g = g.normalized_to_median();
    log << "FID of graph " << s << "\n";
    const CouplingScale cs = coupling_scales(g, cfg.protocol.segments.empty() ? 0.0 : cfg.protocol.alpha());
    traces.push_back(free_induction_decay(g, 0.01, 50.0));
    reals.push_back({{"graph_seed", s},
                     {"J_median", cs.J_median},
                     {"J_fid", cs.J_fid ? json(*cs.J_fid) : json(nullptr)},
                     {"T2_star", cs.J_fid ? json(1.0 / *cs.J_fid) : json(nullptr)},
                     {"h_dd", cs.h_dd},
                     {"fid_flagged", cs.fid_flagged}});
  }
  std::size_t n = traces.front().times.size();
  for (const auto& t : traces) n = std::min(n, t.times.size());
  std::ostringstream csv;
  csv << "time,mx\n";
  FidTrace mean;
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (const auto& t : traces) m += t.mx[i];
    m /= static_cast<double>(traces.size());
    mean.times.push_back(traces.front().times[i]);
    mean.mx.push_back(m);
    csv << format_double(traces.front().times[i]) << ',' << format_double(m) << '\n';
  }
  art.text("fid.csv", csv.str());
  const FidCrossing cross = fid_one_over_e(mean);
  out.summary["realizations_detail"] = reals;
  out.summary["mean_T2_star"] = cross.time ? json(*cross.time) : json(nullptr);
  out.summary["mean_flagged"] = cross.flagged;
  std::ostringstream tab;
  tab << "FID (mean of " << traces.size() << " graphs): T2* = " << (cross.time ? fmt(*cross.time) : "not reached")
      << (cross.flagged ? "  (flagged)" : "") << "\n";
  out.table = tab.str();
  return out;
}

ExperimentOutcome run_polygon(const RunConfig& cfg, const Artifacts& art, std::ostream& log) {
  ExperimentOutcome out;
  const DriveProtocol& p = cfg.protocol;
  out.summary = base_summary(cfg, p);
  DisorderResult res = simulate(cfg, p, log);
  check_record(res.mean, out.violations, "polygon run");
  write_records(art, res);
  const long last = std::min<long>(cfg.plateau_last, static_cast<long>(res.mean.size()));
  if (last - cfg.plateau_first < 20L * p.segments.front().N)
    throw ConfigError("/plateau_window: fewer than 20 N pulses inside the run");
  SegmentAnalysis a = analyse_segment(res, p, 0, cfg.plateau_first, last, out.violations);
  if (a.prediction) art.json_file("prediction.json", a.report["prediction"]);
  if (a.extraction) art.json_file("extraction.json", a.report["extraction"]);
  const LifetimeFit life = magnitude_lifetime(res.mean, p.segments.front().N, cfg.plateau_first);
  art.json_file("lifetime.json", lifetime_report(life));
  out.summary["segments"] = json::array({a.report});
  out.summary["lifetime"] = lifetime_report(life);
  out.summary["max_norm_deviation"] = res.mean.max_norm_deviation;
  std::ostringstream tab;
  tab << "polygon N=" << p.segments.front().N << " k=" << p.segments.front().k << "\n" << polygon_table(a);
  tab << "  T2' (stretch 1/2 fit of |m|) " << fmt(life.T2_prime) << (life.divergent ? " (divergent)" : "") << "\n";
  out.table = tab.str();
  return out;
}

ExperimentOutcome run_segmented(const RunConfig& cfg, const Artifacts& art, std::ostream& log) {
  ExperimentOutcome out;
  const DriveProtocol& p = cfg.protocol;
  out.summary = base_summary(cfg, p);
  DisorderResult res = simulate(cfg, p, log);
  check_record(res.mean, out.violations, to_string(cfg.experiment) + " run");
  write_records(art, res);

  json segs = json::array();
  std::vector<SegmentAnalysis> analyses;
  std::ostringstream tab;
  tab << to_string(cfg.experiment) << ": " << p.segments.size() << " segments\n";
  for (std::size_t si = 0; si < p.segments.size(); ++si) {
    const long start = p.segment_start(si), n = p.segments[si].n_pulses;
    const long skip = std::min(cfg.plateau_first, n / 4);
    analyses.push_back(analyse_segment(res, p, si, start + skip, start + n, out.violations));
    const SegmentAnalysis& a = analyses.back();
    json rep = a.report;
    rep["mean_magnitude"] = mean_norm(res.mean, start + skip, start + n);
    segs.push_back(rep);
    tab << "segment " << si << "  B=" << fmt(p.segments[si].ac_amplitude) << "  phase=" << fmt(p.segments[si].ac_phase)
        << "  pulses [" << start << ", " << start + n << ")\n"
        << polygon_table(a);
  }
  out.summary["segments"] = segs;

  json quenches = json::array();
  for (std::size_t si = 0; si + 1 < p.segments.size(); ++si) {
    const auto& a = analyses[si];
    const auto& b = analyses[si + 1];
    if (!a.prediction || !b.prediction) continue;
    const bool closing = p.segments[si + 1].ac_amplitude == 0.0;
    const int k = static_cast<int>(p.segment_start(si + 1) % p.segments[si + 1].N);
    const QuenchPrediction q = quench_predictions(*a.prediction, *b.prediction, closing, k);
    json jq = quench_report(q);
    jq["from"] = si;
    jq["to"] = si + 1;
    quenches.push_back(jq);
  }
  out.summary["quench_predictions"] = quenches;

  const auto cycles = measure_quench_cycles(res.mean, p, res.graphs);
  json jc = json::array();
  for (const auto& c : cycles) {
    jc.push_back({{"reopen_segment", c.reopen_segment},
                  {"before_close", c.before_close},
                  {"after_reopen", c.after_reopen},
                  {"ratio", c.ratio},
                  {"predicted_ratio", c.predicted}});
    tab << "close/reopen into segment " << c.reopen_segment << ": measured ratio " << fmt(c.ratio)
        << "  predicted 1-sigma " << fmt(c.predicted) << "\n";
  }
  out.summary["quench_cycles"] = jc;

  std::vector<double> open_amp;
  for (std::size_t si = 0; si < p.segments.size(); ++si)
    if (p.segments[si].ac_amplitude != 0.0) open_amp.push_back(segs[si]["mean_magnitude"].get<double>());
  bool monotone = true;
  for (std::size_t i = 1; i < open_amp.size(); ++i) monotone = monotone && open_amp[i] <= open_amp[i - 1];
  out.summary["open_segment_magnitudes"] = open_amp;
  out.summary["open_segments_non_increasing"] = monotone;
  if (open_amp.size() > 1)
    tab << "open-segment plateau magnitude " << (monotone ? "non-increasing" : "NOT monotone") << "\n";

  // time-extruded quick look of the whole run
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < res.mean.size(); ++i) pts.push_back(res.mean.sample(i));
  PlotOptions po;
  po.projection = Projection::TimeYZ;
  po.classes = p.segments.front().N;
  art.text("trajectory_time_yz.svg", plot_points_svg(res.mean.times, pts, po));
  out.table = tab.str();
  return out;
}

ExperimentOutcome run_offset_screw(const RunConfig& cfg, const Artifacts& art, std::ostream& log) {
  ExperimentOutcome out;
  const DriveProtocol& p = cfg.protocol;
  out.summary = base_summary(cfg, p);
  const ProtocolSegment& seg = p.segments.front();
  if (seg.chirp) throw ConfigError("/protocol/segments/0/chirp: offset-screw needs a fixed ac_omega");
  const double Delta = seg.ac_omega - resonant_omega(seg, p);
  DisorderResult res = simulate(cfg, p, log);
  check_record(res.mean, out.violations, "offset-screw run");
  write_records(art, res);
  const long last = std::min<long>(cfg.plateau_last, static_cast<long>(res.mean.size()));
  if (last - cfg.plateau_first < 20L * seg.N)
    throw ConfigError("/plateau_window: fewer than 20 N pulses inside the run");
  // each realization is fitted on its own: realizations drift apart in azimuth, so the
  // mean record loses the polygon long before the individual runs do
  std::vector<double> rates;
  PrecessionFit fit;
  fit.per_manifold.assign(seg.N, 0.0);
  for (const auto& r : res.realizations) {
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < r.size(); ++i) pts.push_back(r.sample(i));
    const PrecessionFit f = fit_manifold_precession(pts, r.times, seg.N, p.pulse_axis(), cfg.plateau_first, last);
    rates.push_back(f.rate);
    fit.rate += f.rate / static_cast<double>(res.realizations.size());
    for (int c = 0; c < seg.N; ++c) fit.per_manifold[c] += f.per_manifold[c] / static_cast<double>(res.realizations.size());
  }

  DriveProtocol resonant = p;
  resonant.segments.front().ac_omega = resonant_omega(seg, p);
  const PlateauPrediction pred = ensemble_prediction(predictions_for(res.graphs, resonant, resonant.segments.front()));
  check_prediction(pred, out.violations, "resonant counterpart");
  art.json_file("prediction.json", plateau_report(pred));
  json fj = {{"Delta", Delta},
             {"rate", fit.rate},
             {"per_manifold", fit.per_manifold},
             {"per_realization", rates},
             {"relative_error", Delta != 0.0 ? json((fit.rate - Delta) / Delta) : json(nullptr)},
             {"window", json::array({cfg.plateau_first, last})}};
  art.json_file("precession.json", fj);
  out.summary["precession"] = fj;
  std::ostringstream tab;
  tab << "offset screw: Delta = " << fmt(Delta) << "  fitted precession rate = " << fmt(fit.rate);
  if (Delta != 0.0) tab << "  (" << fmt(100.0 * (fit.rate - Delta) / Delta, 3) << " %)";
  tab << "\n  per manifold:";
  for (double r : fit.per_manifold) tab << ' ' << fmt(r);
  tab << "\n";
  out.table = tab.str();
  return out;
}

ExperimentOutcome run_chirp(const RunConfig& cfg, const Artifacts& art, std::ostream& log) {
  ExperimentOutcome out;
  const DriveProtocol& p = cfg.protocol;
  out.summary = base_summary(cfg, p);
  std::size_t ci = p.segments.size();
  for (std::size_t i = 0; i < p.segments.size(); ++i)
    if (p.segments[i].chirp) {
      ci = i;
      break;
    }
  if (ci == p.segments.size()) throw ConfigError("/protocol/segments: chirp-rap needs a chirped segment");
  DisorderResult res = simulate(cfg, p, log);
  check_record(res.mean, out.violations, "chirp-rap run");
  write_records(art, res);

  const ProtocolSegment& seg = p.segments[ci];
  const long start = p.segment_start(ci), n = seg.n_pulses;
  const double t0 = start * p.tau, T = n * p.tau;
  const double w_res = resonant_omega(seg, p);
  const double rate = (seg.chirp->omega_end - seg.chirp->omega_start) / T;
  // instantaneous frequency omega_start + rate (t - t0)
  json j;
  j["omega_resonance"] = w_res;
  j["omega_start"] = seg.chirp->omega_start;
  j["omega_end"] = seg.chirp->omega_end;
  const bool crosses = (seg.chirp->omega_start - w_res) * (seg.chirp->omega_end - w_res) < 0.0;
  j["crosses_resonance"] = crosses;
  if (crosses) j["t_resonance"] = t0 + (w_res - seg.chirp->omega_start) / rate;
  const long edge = std::max<long>(seg.N, n / 20);
  double mx0 = 0.0, mx1 = 0.0;
  for (long i = start; i < start + edge; ++i) mx0 += res.mean.mx[i];
  for (long i = start + n - edge; i < start + n; ++i) mx1 += res.mean.mx[i];
  mx0 /= edge;
  mx1 /= edge;
  j["mx_start"] = mx0;
  j["mx_end"] = mx1;
  j["mx_sign_flip"] = mx0 * mx1 < 0.0;
  std::vector<double> S(n);
  for (long i = 0; i < n; ++i) S[i] = std::hypot(res.mean.mx[start + i], res.mean.my[start + i]);
  const auto dec = decompose_decay(S, seg.N);
  const auto it = std::min_element(dec.S_dec.begin(), dec.S_dec.end());
  const long imin = start + static_cast<long>(it - dec.S_dec.begin());
  j["S_min"] = *it;
  j["t_S_min"] = res.mean.times[imin];
  j["S_start"] = dec.S_dec.front();
  j["S_end"] = dec.S_dec.back();
  art.json_file("chirp.json", j);
  out.summary["chirp"] = j;
  std::ostringstream tab;
  tab << "chirp-rap: mx " << fmt(mx0) << " -> " << fmt(mx1) << (mx0 * mx1 < 0.0 ? "  (sign flip)" : "  (no flip)")
      << "\n  S dip " << fmt(*it) << " at t=" << fmt(res.mean.times[imin]);
  if (crosses) tab << "  resonance crossed at t=" << fmt(j["t_resonance"].get<double>());
  tab << "\n";
  out.table = tab.str();
  return out;
}

ExperimentOutcome run_floquet_validate(const RunConfig& cfg, const Artifacts& art, std::ostream& log) {
  ExperimentOutcome out;
  const DriveProtocol& p = cfg.protocol;
  out.summary = base_summary(cfg, p);
  json reports = json::array();
  std::ostringstream tab;
  tab << "effective Hamiltonian convergence (" << cfg.floquet_halvings << " halvings)\n";
  for (int i = 0; i < cfg.realizations; ++i) {
    const std::uint64_t s = cfg.seed + static_cast<std::uint64_t>(i);
    GraphOptions go;
    go.c_pack = cfg.graph.c_pack;
    SpinGraph g = generate_graph(cfg.graph.L, cfg.graph.r_min, cfg.graph.r_max, s, go);
    if (cfg.graph.normalize) g = g.normalized_to_median();
    log << "validating on graph " << s << "\n";
    const ConvergenceReport r = validate_effective_hamiltonian(g, p, p.segments.front(), 0, cfg.floquet_halvings);
    json jr = convergence_report(r);
    jr["graph_seed"] = s;
    reports.push_back(jr);
    tab << "  graph " << s << ": order " << fmt(r.order) << "  ratios";
    for (double x : r.ratios) tab << ' ' << fmt(x);
    tab << "\n";
  }
  art.json_file("convergence.json", reports);
  out.summary["convergence"] = reports;
  out.table = tab.str();
  return out;
}

ExperimentOutcome run_reconstruct(const RunConfig& cfg, const Artifacts& art, std::ostream& log) {
  ExperimentOutcome out;
  const DriveProtocol& p = cfg.protocol;
  out.summary = base_summary(cfg, p);
  DisorderResult res = simulate(cfg, p, log);
  check_record(res.mean, out.violations, "reconstruct truth run");
  write_records(art, res);
  const TrajectoryRecord& truth = res.mean;
  const ReadoutSpec& rs = cfg.readout;

  Envelope env;
  if (rs.envelope_T > 0.0) env.T = rs.envelope_T;
  ReadoutNoise noise;
  noise.gaussian_sigma = rs.noise_sigma;
  noise.mains_amplitude = rs.mains_fraction * std::hypot(truth.mx.front(), truth.my.front());
  noise.mains_freq = rs.mains_freq;
  const InductionSeries series = synthesize_readout(truth, rs.ramp_per_pulse, env, noise, cfg.seed);
  {
    std::ostringstream os;
    write_series_csv(os, series);
    art.text("series.csv", os.str());
  }
  std::optional<InductionSeries> reference;
  if (rs.use_reference) {
    const DriveProtocol closed = closed_copy(p);
    DisorderResult ref = simulate(cfg, closed, log);
    check_record(ref.mean, out.violations, "reference run");
    reference = synthesize_readout(ref.mean, rs.ramp_per_pulse, env, noise, cfg.seed + 1);
  }
  const DressedPhase phase = remove_phase_ramp(series, reference ? &*reference : nullptr);
  ReconstructOptions ro;
  ro.delta0_fraction = rs.delta0_fraction;
  ro.window_len = p.segments.front().N;
  const BlochTrajectory bloch = reconstruct_bloch(series, phase, ro);
  {
    std::ostringstream os;
    write_bloch_csv(os, bloch);
    art.text("bloch.csv", os.str());
  }
  // the same pipeline against the exact norm model isolates the phase and noise handling
  ReconstructOptions exact = ro;
  std::vector<double> norms(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) norms[i] = env(truth.times[i]) * truth.sample(i).norm();
  exact.norm_model = norms;
  const BlochTrajectory bloch_exact = reconstruct_bloch(series, phase, exact);

  // compare after removing the global azimuth, which the ramp fit leaves free
  auto aligned_error = [&](const BlochTrajectory& b, long first, long last) {
    double sdot = 0.0, scross = 0.0;
    for (long i = first; i < last; ++i) {
      const double tx = env(truth.times[i]) * truth.mx[i], ty = env(truth.times[i]) * truth.my[i];
      sdot += b.Ix[i] * tx + b.Iy[i] * ty;
      scross += b.Ix[i] * ty - b.Iy[i] * tx;
    }
    return std::atan2(scross, sdot);
  };
  const int N = p.segments.front().N;
  const long last = std::min<long>(cfg.plateau_last, static_cast<long>(truth.size()));
  json j;
  j["clamped"] = bloch.clamped;
  j["clamp_warning"] = bloch.clamp_warning;
  j["phase_ambiguities"] = phase.ambiguous.size();
  j["ramp_slope"] = phase.slope;
  if (last - cfg.plateau_first >= 20L * N) {
    for (const auto* which : {&bloch, &bloch_exact}) {
      const double rot = aligned_error(*which, cfg.plateau_first, last);
      const double c = std::cos(rot), s = std::sin(rot);
      std::vector<Vec3> rec_pts, truth_pts;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        const double e = env(truth.times[i]);
        rec_pts.emplace_back(c * which->Ix[i] - s * which->Iy[i], s * which->Ix[i] + c * which->Iy[i], which->Iz_abs[i]);
        truth_pts.emplace_back(e * truth.mx[i], e * truth.my[i], e * std::abs(truth.mz[i]));
      }
      const auto rm = manifold_series(rec_pts, N, cfg.plateau_first, last);
      const auto tm = manifold_series(truth_pts, N, cfg.plateau_first, last);
      std::vector<Vec3> tc;
      double err = 0.0, err_perp = 0.0, err_z = 0.0;
      for (int k = 0; k < N; ++k) {
        const Vec3 d = rm[k].mean - tm[k].mean;
        err = std::max(err, d.norm());
        err_perp = std::max(err_perp, d.head<2>().norm());
        err_z = std::max(err_z, std::abs(d.z()));
        tc.push_back(tm[k].mean);
      }
      const PolygonGeometry g = polygon_geometry(tc, p.pulse_axis());
      json jj = {{"azimuth_offset", rot},
                 {"max_centroid_error", err},
                 {"max_transverse_error", err_perp},
                 {"max_abs_z_error", err_z},
                 {"truth_ell", g.ell}};
      jj["error_over_ell"] = g.ell > 0.0 ? json(err / g.ell) : json(nullptr);
      jj["transverse_error_over_ell"] = g.ell > 0.0 ? json(err_perp / g.ell) : json(nullptr);
      j[which == &bloch ? "norm_model" : "exact_norm"] = jj;
    }
  }
  std::vector<double> tt(series.times);
  const LifetimeFit life = fit_lifetime(tt, bloch.S_dec, StretchModel::FixedHalf, cfg.plateau_first, -1);
  j["lifetime"] = lifetime_report(life);
  art.json_file("reconstruction.json", j);
  out.summary["reconstruction"] = j;
  std::ostringstream tab;
  tab << "reconstruct: " << bloch.clamped << " clamped samples" << (bloch.clamp_warning ? " (warning)" : "")
      << ", " << phase.ambiguous.size() << " ambiguous phase steps\n";
  if (j.contains("exact_norm"))
    tab << "  transverse centroid error / ell " << fmt(j["norm_model"]["transverse_error_over_ell"].get<double>())
        << "\n  3D centroid error / ell: norm model " << fmt(j["norm_model"]["error_over_ell"].get<double>())
        << "  exact norm " << fmt(j["exact_norm"]["error_over_ell"].get<double>()) << "\n";
  tab << "  T2' of S_dec " << fmt(life.T2_prime) << "\n";
  out.table = tab.str();
  return out;
}

}  // namespace

DisorderSpec disorder_spec(const RunConfig& cfg, const DriveProtocol& protocol) {
  DisorderSpec s;
  s.L = cfg.graph.L;
  s.r_min = cfg.graph.r_min;
  s.r_max = cfg.graph.r_max;
  s.graph_opts.c_pack = cfg.graph.c_pack;
  s.normalize_to_median = cfg.graph.normalize;
  s.protocol = protocol;
  s.n_realizations = cfg.realizations;
  s.seed = cfg.seed;
  s.threads = cfg.threads;
  return s;
}

PlateauPrediction ensemble_prediction(const std::vector<PlateauPrediction>& predictions) {
  if (predictions.empty()) throw std::invalid_argument("ensemble_prediction: empty");
  PlateauPrediction out = predictions.front();
  const double w = 1.0 / static_cast<double>(predictions.size());
  for (std::size_t k = 0; k < out.M_k.size(); ++k) {
    out.M_k[k].setZero();
    out.beta_k[k] = 0.0;
    out.epsilon_k[k] = 0.0;
  }
  out.h_dd = out.h_used = 0.0;
  for (const auto& p : predictions) {
    for (std::size_t k = 0; k < out.M_k.size(); ++k) {
      out.M_k[k] += w * p.M_k[k];
      out.beta_k[k] += w * p.beta_k[k];
      out.epsilon_k[k] += w * p.epsilon_k[k];
    }
    out.h_dd += w * p.h_dd;
    out.h_used += w * p.h_used;
  }
  const Vec3& M0 = out.M_k.front();
  out.center = out.n_hat * out.n_hat.dot(M0);
  out.ell = (M0 - out.center).norm();
  const double c = out.center.norm();
  out.phi_flagged = c == 0.0;
  out.Phi = c == 0.0 ? std::numbers::pi : 2.0 * std::atan(out.ell / c);
  return out;
}

DriveProtocol with_parameter(const DriveProtocol& protocol, const std::string& parameter, double value) {
  DriveProtocol p = protocol;
  if (parameter == "ac_amplitude") {
    for (auto& s : p.segments) s.ac_amplitude = value;
  } else if (parameter == "delta") {
    const double rabi = p.theta_nominal / p.t_pulse;
    if (std::abs(value) >= rabi) throw ConfigError("/sweep/values: |delta| must stay below theta / t_pulse");
    DriveProtocol q = DriveProtocol::from_pulse_width(p.tau, p.t_pulse, std::sqrt(rabi * rabi - value * value), value);
    q.theta_nominal = p.theta_nominal;
    q.segments = p.segments;
    q.delta_theta = p.delta_theta;
    q.eta_noise = p.eta_noise;
    q.acq_jitter = p.acq_jitter;
    q.full_model = p.full_model;
    // keep the segments on resonance; the resonance does not depend on delta
    p = q;
  } else if (parameter == "delta_theta") {
    p.delta_theta = value;
  } else if (parameter == "eta_noise") {
    p.eta_noise = value;
  } else {
    throw ConfigError("/sweep/parameter: unknown parameter '" + parameter + "'");
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("/sweep/values: ") + e.what());
  }
  return p;
}

std::vector<QuenchMeasurement> measure_quench_cycles(const TrajectoryRecord& record, const DriveProtocol& protocol,
                                                     const std::vector<SpinGraph>& graphs, long settle, long span) {
  std::vector<QuenchMeasurement> out;
  const auto& segs = protocol.segments;
  for (std::size_t si = 2; si < segs.size(); ++si) {
    const auto& before = segs[si - 2];
    const auto& closed = segs[si - 1];
    const auto& after = segs[si];
    if (before.ac_amplitude == 0.0 || closed.ac_amplitude != 0.0 || after.ac_amplitude == 0.0) continue;
    if (!is_resonant(after, protocol)) continue;
    const long close_at = protocol.segment_start(si - 1), reopen_at = protocol.segment_start(si);
    if (reopen_at + settle + span > static_cast<long>(record.size())) continue;
    QuenchMeasurement m;
    m.reopen_segment = si;
    m.before_close = mean_norm(record, close_at - std::min(span, before.n_pulses / 2), close_at);
    m.after_reopen = mean_norm(record, reopen_at + settle, reopen_at + settle + span);
    m.ratio = m.before_close > 0.0 ? m.after_reopen / m.before_close : 0.0;
    if (!graphs.empty()) {
      const PlateauPrediction pc = ensemble_prediction(predictions_for(graphs, protocol, closed));
      const PlateauPrediction po = ensemble_prediction(predictions_for(graphs, protocol, after));
      const int k = static_cast<int>(reopen_at % after.N);
      m.predicted = quench_predictions(pc, po, false, k).magnetization_ratio;
    }
    out.push_back(m);
  }
  return out;
}

ExperimentOutcome run_experiment(const RunConfig& cfg, std::ostream& log) {
  if (cfg.experiment == Experiment::AmplitudeSweep) return run_sweep(cfg, log);
  const Artifacts art(cfg.output_dir);
  ExperimentOutcome out;
  switch (cfg.experiment) {
    case Experiment::Fid: out = run_fid(cfg, art, log); break;
    case Experiment::Polygon: out = run_polygon(cfg, art, log); break;
    case Experiment::OffsetScrew: out = run_offset_screw(cfg, art, log); break;
    case Experiment::Emergence:
    case Experiment::AmpQuench:
    case Experiment::PhaseQuench:
    case Experiment::Designer: out = run_segmented(cfg, art, log); break;
    case Experiment::ChirpRap: out = run_chirp(cfg, art, log); break;
    case Experiment::FloquetValidate: out = run_floquet_validate(cfg, art, log); break;
    case Experiment::Reconstruct: out = run_reconstruct(cfg, art, log); break;
    case Experiment::AmplitudeSweep: break;
  }
  out.summary["violations"] = out.violations;
  art.json_file("summary.json", out.summary);
  art.text("summary.txt", out.table);
  return out;
}

ExperimentOutcome run_sweep(const RunConfig& cfg, std::ostream& log) {
  if (!cfg.sweep) throw ConfigError("/sweep: required for a sweep");
  const SweepSpec& sw = *cfg.sweep;
  if (sw.values.empty()) throw ConfigError("/sweep/values: grid is empty");
  if (cfg.protocol.segments.empty()) throw ConfigError("/protocol/segments: required for a sweep");
  const Artifacts art(cfg.output_dir);
  ExperimentOutcome out;
  out.summary = base_summary(cfg, cfg.protocol);
  out.summary["parameter"] = sw.parameter;
  const int N = cfg.protocol.segments.front().N;

  // validate the whole grid before any compute
  std::vector<DriveProtocol> protocols;
  for (double v : sw.values) protocols.push_back(with_parameter(cfg.protocol, sw.parameter, v));

  json points = json::array();
  std::ostringstream csv;
  csv << "value,manifolds,stable,ell_measured,Phi_measured,magnitude,ell_predicted,Phi_predicted,M_predicted,"
         "half_life,T2_prime\n";
  std::ostringstream tab;
  tab << "sweep over " << sw.parameter << "\n"
      << "  value      manifolds  ell_meas   ell_pred   Phi_meas_deg  Phi_pred_deg  half_life\n";
  std::vector<SaturationPoint> measured_curve;
  for (std::size_t i = 0; i < sw.values.size(); ++i) {
    const DriveProtocol& p = protocols[i];
    DisorderResult res = simulate(cfg, p, log);
    check_record(res.mean, out.violations, sw.parameter + "=" + format_double(sw.values[i]));
    art.record("record_" + std::to_string(i) + ".csv", res.mean);
    const long last = std::min<long>(cfg.plateau_last, static_cast<long>(res.mean.size()));
    if (last - cfg.plateau_first < 20L * N) throw ConfigError("/plateau_window: fewer than 20 N pulses inside the run");
    SegmentAnalysis a = analyse_segment(res, p, 0, cfg.plateau_first, last, out.violations);
    const long ref_first = std::min<long>(5L * N, static_cast<long>(res.mean.size()) - 1);
    const long ref_last = std::min<long>(ref_first + 10L * N, static_cast<long>(res.mean.size()));
    const PlateauHalfLife hl = plateau_half_life(res.mean, ref_first, ref_last, 10 * N);
    const LifetimeFit life = magnitude_lifetime(res.mean, N, ref_first);
    json pt = a.report;
    pt["value"] = sw.values[i];
    pt["half_life"] = hl.time ? json(*hl.time) : json(nullptr);
    pt["plateau_reference"] = hl.plateau;
    pt["lifetime"] = lifetime_report(life);
    points.push_back(pt);
    const double ell_p = a.prediction ? a.prediction->ell : std::nan("");
    const double phi_p = a.prediction ? a.prediction->Phi : std::nan("");
    const double m_p = a.prediction ? a.prediction->M_k.front().norm() : std::nan("");
    csv << format_double(sw.values[i]) << ',' << (a.extraction ? a.extraction->manifold_count : 0) << ','
        << (a.extraction && a.extraction->stable ? 1 : 0) << ',' << format_double(a.measured.ell) << ','
        << format_double(a.measured.Phi) << ',' << format_double(a.measured.magnitude) << ',' << format_double(ell_p)
        << ',' << format_double(phi_p) << ',' << format_double(m_p) << ','
        << (hl.time ? format_double(*hl.time) : std::string("nan")) << ',' << format_double(life.T2_prime) << '\n';
    tab << "  " << std::left << std::setw(10) << fmt(sw.values[i]) << " " << std::setw(10)
        << (a.extraction ? a.extraction->manifold_count : 0) << " " << std::setw(10) << fmt(a.measured.ell) << " "
        << std::setw(10) << fmt(ell_p) << " " << std::setw(13) << fmt(deg(a.measured.Phi), 3) << " " << std::setw(13)
        << fmt(deg(phi_p), 3) << " " << (hl.time ? fmt(*hl.time) : std::string("-")) << std::right << "\n";
    measured_curve.push_back({sw.values[i], a.measured.ell, a.measured.Phi});
  }
  out.summary["points"] = points;
  art.text("sweep.csv", csv.str());

  if (sw.parameter == "ac_amplitude") {
    // analytic curve on a dense grid for the first realization's graph, plus saturation fits
    GraphOptions go;
    go.c_pack = cfg.graph.c_pack;
    SpinGraph g = generate_graph(cfg.graph.L, cfg.graph.r_min, cfg.graph.r_max, cfg.seed, go);
    if (cfg.graph.normalize) g = g.normalized_to_median();
    std::vector<double> grid;
    const double bmax = *std::max_element(sw.values.begin(), sw.values.end());
    for (int i = 1; i <= 60; ++i) grid.push_back(bmax * 1.5 * i / 60.0);
    const auto curve = saturation_curve(g, cfg.protocol, cfg.protocol.segments.front(), grid);
    const SaturationFit af = fit_saturation(curve);
    json jc = json::array();
    for (const auto& c : curve) jc.push_back({{"B", c.B}, {"ell", c.ell}, {"Phi", c.Phi}});
    out.summary["analytic_curve"] = jc;
    out.summary["analytic_fit"] = {{"a", af.a}, {"h", af.h}, {"rms", af.rms}};
    tab << "  analytic saturation fit: h = " << fmt(af.h) << "\n";
    std::vector<SaturationPoint> positive;
    for (const auto& m : measured_curve)
      if (m.B > 0.0) positive.push_back(m);
    std::sort(positive.begin(), positive.end(), [](const auto& a, const auto& b) { return a.B < b.B; });
    if (positive.size() >= 3) {
      const SaturationFit mf = fit_saturation(positive);
      out.summary["measured_fit"] = {{"a", mf.a}, {"h", mf.h}, {"rms", mf.rms}};
      tab << "  measured saturation fit: h = " << fmt(mf.h) << "\n";
    }
  }
  out.summary["violations"] = out.violations;
  art.json_file("summary.json", out.summary);
  art.text("summary.txt", tab.str());
  out.table = tab.str();
  return out;
}

}  // namespace spinorbit
