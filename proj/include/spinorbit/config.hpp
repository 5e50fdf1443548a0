#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spinorbit/drive.hpp"
#include "spinorbit/io.hpp"

namespace spinorbit {

enum class Experiment {
  Fid,
  Polygon,
  AmplitudeSweep,
  OffsetScrew,
  Emergence,
  AmpQuench,
  PhaseQuench,
  Designer,
  ChirpRap,
  FloquetValidate,
  Reconstruct,
};

Experiment experiment_from_string(const std::string& name);
std::string to_string(Experiment e);

enum class Profile { Desk, Paper };

struct GraphParams {
  int L = 10;
  double r_min = 0.9;
  double r_max = 1.1;
  double c_pack = 1.5;
  bool normalize = true;  // couplings in units of J_median
};

struct SweepSpec {
  std::string parameter;  // ac_amplitude | delta | delta_theta | eta_noise
  std::vector<double> values;
};

struct ReadoutSpec {
  double ramp_per_pulse = 0.0;
  double noise_sigma = 0.0;
  double mains_fraction = 0.0;  // of the first sample's amplitude
  double mains_freq = 0.0;
  double envelope_T = 0.0;      // 0 disables the synthetic envelope
  double delta0_fraction = 0.05;
  bool use_reference = false;
};

struct RunConfig {
  Experiment experiment = Experiment::Polygon;
  GraphParams graph;
  DriveProtocol protocol;
  int realizations = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output_dir = "out";
  long plateau_first = 200;
  long plateau_last = 1000;
  std::optional<SweepSpec> sweep;
  ReadoutSpec readout;
  int floquet_halvings = 3;
  json raw;  // the validated document
};

/// Validates and converts a config document. Every problem raises ConfigError whose
/// message starts with the JSON pointer of the offending value. Profile defaults
/// fill graph.L and realizations only where the document leaves them out.
RunConfig parse_run_config(const json& doc, Profile profile = Profile::Desk);
RunConfig load_run_config(const std::string& path, Profile profile = Profile::Desk);

}  // namespace spinorbit
