#include <CLI11.hpp>
#include <iostream>

#include "spinorbit/config.hpp"
#include "spinorbit/errors.hpp"
#include "spinorbit/experiments.hpp"
#include "spinorbit/svg_plot.hpp"

using namespace spinorbit;

namespace {

enum Exit { kOk = 0, kInvariant = 2, kConfig = 3, kNumeric = 4 };

struct RunArgs {
  std::string config;
  std::string out;
  int threads = 0;
  std::string profile = "desk";
};

RunConfig load(const RunArgs& a) {
  const Profile profile = a.profile == "paper" ? Profile::Paper : Profile::Desk;
  RunConfig cfg = load_run_config(a.config, profile);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.threads > 0) cfg.threads = a.threads;
  return cfg;
}

int report(const ExperimentOutcome& out, const RunConfig& cfg) {
  std::cout << out.table;
  std::cout << "artifacts written to " << cfg.output_dir << "\n";
  if (!out.violations.empty()) {
    for (const auto& v : out.violations) std::cerr << "invariant violation: " << v << "\n";
    return kInvariant;
  }
  return kOk;
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kInvariant;
  } catch (const std::invalid_argument& e) {
    // protocol invariants rejected during parsing or setup
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("config", a.config, "run configuration (JSON)")->required();
  cmd->add_option("--out", a.out, "output directory (overrides output.dir)");
  cmd->add_option("--threads", a.threads, "worker threads for realizations")->check(CLI::PositiveNumber);
  cmd->add_option("--profile", a.profile, "default sizes: desk (L=10) or paper (L=14)")
      ->check(CLI::IsMember({"desk", "paper"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spinorbit: driven dipolar spin ensembles, Floquet predictions and trajectory tracking"};
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "run the experiment named in a config file");
  add_run_options(run, run_args);

  RunArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "sweep one protocol parameter over the config's grid");
  add_run_options(sweep, sweep_args);

  std::string csv_path, proj = "yz", svg_path, title;
  int classes = 1;
  CLI::App* plot = app.add_subcommand("plot", "render a trajectory CSV as a static SVG");
  plot->add_option("csv", csv_path, "record or Bloch CSV")->required();
  plot->add_option("--proj", proj, "projection: yz, xy, xz, time-yz");
  plot->add_option("--classes", classes, "colour samples by index mod this number")->check(CLI::PositiveNumber);
  plot->add_option("--out", svg_path, "output SVG (default: CSV path with .svg)");
  plot->add_option("--title", title, "plot title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kConfig;
  }

  if (*run) {
    return guarded([&] {
      const RunConfig cfg = load(run_args);
      return report(run_experiment(cfg, std::cerr), cfg);
    });
  }
  if (*sweep) {
    return guarded([&] {
      const RunConfig cfg = load(sweep_args);
      return report(run_sweep(cfg, std::cerr), cfg);
    });
  }
  return guarded([&] {
    PlotOptions po;
    try {
      po.projection = projection_from_string(proj);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--proj: ") + e.what());
    }
    po.classes = classes;
    po.title = title;
    std::string text;
    try {
      text = read_text_file(csv_path);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    std::string svg;
    try {
      svg = plot_csv_svg(text, po);
    } catch (const std::runtime_error& e) {
      throw ConfigError(std::string("malformed CSV: ") + e.what());
    }
    if (svg_path.empty()) {
      svg_path = csv_path;
      const auto dot = svg_path.rfind('.');
      if (dot != std::string::npos && svg_path.find('/', dot) == std::string::npos) svg_path.erase(dot);
      svg_path += ".svg";
    }
    write_text_file(svg_path, svg);
    std::cout << "wrote " << svg_path << "\n";
    return static_cast<int>(kOk);
  });
}
