#pragma once

#include <iosfwd>
#include <json.hpp>
#include <string>
#include <vector>

#include "spinorbit/drive.hpp"
#include "spinorbit/floquet.hpp"
#include "spinorbit/prethermal.hpp"
#include "spinorbit/tracking.hpp"

namespace spinorbit {

using json = nlohmann::json;

/// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

/// Parses a protocol object; errors are ConfigError messages prefixed by the JSON
/// pointer of the offending field (relative to `where`).
DriveProtocol protocol_from_json(const json& j, const std::string& where = "");
json protocol_to_json(const DriveProtocol& p);

/// FNV-1a 64 over the canonical (sorted-key, compact) dump, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);
std::string protocol_hash(const DriveProtocol& p);

json graph_to_json(const SpinGraph& g);
SpinGraph graph_from_json(const json& j);

void write_record_csv(std::ostream& os, const TrajectoryRecord& rec);
TrajectoryRecord read_record_csv(std::istream& is);

void write_series_csv(std::ostream& os, const InductionSeries& s);
InductionSeries read_series_csv(std::istream& is);

void write_bloch_csv(std::ostream& os, const BlochTrajectory& b);

json vec_to_json(const Vec3& v);
json emergent_field_report(const EmergentFieldFamily& f);
json plateau_report(const PlateauPrediction& p);
json extraction_report(const PlateauExtraction& e);
json quench_report(const QuenchPrediction& q);
json lifetime_report(const LifetimeFit& f);
json convergence_report(const ConvergenceReport& r);

/// Writes with a trailing newline; throws std::runtime_error when the file cannot be opened.
void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace spinorbit
