#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "spinorbit/config.hpp"

namespace spinorbit {

struct ExperimentOutcome {
  json summary;
  std::vector<std::string> violations;  // flagged invariants; the CLI exits with 2
  std::string table;                    // human-readable summary
};

/// Runs the configured experiment and writes its artifacts into cfg.output_dir.
/// Numeric breakdowns propagate as NumericError, config problems as ConfigError.
ExperimentOutcome run_experiment(const RunConfig& cfg, std::ostream& log);

/// One run per grid value of cfg.sweep; extracted observables next to the analytic curve.
ExperimentOutcome run_sweep(const RunConfig& cfg, std::ostream& log);

/// Applies a sweep parameter to a protocol. "delta" keeps theta_nominal and t_pulse
/// and re-derives Omega.
DriveProtocol with_parameter(const DriveProtocol& protocol, const std::string& parameter, double value);

DisorderSpec disorder_spec(const RunConfig& cfg, const DriveProtocol& protocol);

/// Per-k mean of the predictions of several graphs, geometry recomputed from the mean.
PlateauPrediction ensemble_prediction(const std::vector<PlateauPrediction>& predictions);

struct QuenchMeasurement {
  std::size_t reopen_segment = 0;
  double before_close = 0.0;  // mean |m| over the last pulses of the open segment
  double after_reopen = 0.0;  // mean |m| shortly after reopening
  double ratio = 0.0;
  double predicted = 0.0;     // 1 - sigma
};

/// Open, closed, open triples inside a segmented record. `settle` pulses are skipped
/// after reopening and `span` pulses are averaged on either side.
std::vector<QuenchMeasurement> measure_quench_cycles(const TrajectoryRecord& record, const DriveProtocol& protocol,
                                                     const std::vector<SpinGraph>& graphs, long settle = 20,
                                                     long span = 40);

}  // namespace spinorbit
