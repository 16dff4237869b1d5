// Command-line driver for the critical-point experiment pipeline.
//
// Subcommands mirror the pipeline stages; `run-all` executes everything and
// writes a manifest with content hashes. Stepwise subcommands read their
// inputs from the output directory of the preceding stages.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "critpt/experiment.hpp"
#include "critpt/version.hpp"

namespace {

critpt::ExperimentConfig load_config(const std::string& config_path, std::int64_t seed_override) {
  critpt::ExperimentConfig cfg = config_path.empty()
                                     ? critpt::default_experiment_config()
                                     : critpt::load_experiment_config(config_path);
  if (seed_override >= 0) {
    const auto master = static_cast<std::uint64_t>(seed_override);
    cfg.data.seed = critpt::SeededRng::derive(master, 10, 0);
    cfg.trajectories.seed = critpt::SeededRng::derive(master, 11, 0);
    cfg.sampling.seed = critpt::SeededRng::derive(master, 12, 0);
  }
  return cfg;
}

void print_report(const critpt::MatchReport& report) {
  for (const auto& s : report.per_method) {
    std::cout << s.method << ": runs=" << s.runs << " converged=" << s.converged
              << " matched=" << s.matched << " distinct_entries=" << s.distinct_entries
              << " distinct_saddles=" << s.distinct_saddles << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"critpt: locate and classify critical points of deep linear autoencoder losses"};
  app.set_version_flag("--version", critpt::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::int64_t seed_override = -1;
  std::string method_filter;
  app.add_option("--config", config_path, "experiment config JSON (defaults when omitted)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed_override, "master seed overriding data/trajectory/sampling seeds");
  app.add_option("--method", method_filter, "restrict `find` to one method (gnm|newton-mr|newton-tr)");

  auto* cmd_gen = app.add_subcommand("gen-data", "generate the dataset");
  auto* cmd_catalog = app.add_subcommand("catalog", "build the ground-truth catalog");
  bool dump_reps = false;
  cmd_catalog->add_flag("--dump-reps", dump_reps, "write representative parameter files");
  auto* cmd_train = app.add_subcommand("train", "train gradient-descent trajectories");
  auto* cmd_sample = app.add_subcommand("sample-seeds", "sample finder starting points");
  auto* cmd_find = app.add_subcommand("find", "run the critical-point finders");
  auto* cmd_match = app.add_subcommand("match", "match terminal points against the catalog");
  auto* cmd_plots = app.add_subcommand("emit-plots", "emit figure data CSVs");
  auto* cmd_all = app.add_subcommand("run-all", "run the full pipeline");

  CLI11_PARSE(app, argc, argv);

  std::string stage = "setup";
  try {
    critpt::ExperimentConfig cfg = load_config(config_path, seed_override);
    if (!method_filter.empty())
      cfg.methods = {critpt::method_from_name(method_filter)};

    if (cmd_gen->parsed()) {
      stage = "gen-data";
      critpt::stage_gen_data(cfg, out_dir);
      std::cout << "dataset written to " << out_dir << "\n";
    } else if (cmd_catalog->parsed()) {
      stage = "catalog";
      cfg.catalog.dump_representatives = cfg.catalog.dump_representatives || dump_reps;
      const auto data = critpt::load_dataset(out_dir);
      const auto catalog = critpt::stage_catalog(cfg, data, out_dir);
      std::cout << catalog.entries.size() << " catalog entries written\n";
    } else if (cmd_train->parsed()) {
      stage = "train";
      const auto data = critpt::load_dataset(out_dir);
      std::vector<std::string> warnings;
      const auto trajectories = critpt::stage_train(cfg, data, out_dir, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      std::cout << trajectories.size() << " trajectories written\n";
    } else if (cmd_sample->parsed()) {
      stage = "sample-seeds";
      const auto trajectories = critpt::load_trajectories(out_dir);
      const auto seeds = critpt::stage_sample(cfg, trajectories, out_dir);
      std::cout << seeds.size() << " seeds written\n";
    } else if (cmd_find->parsed()) {
      stage = "find";
      const auto data = critpt::load_dataset(out_dir);
      const auto seeds = critpt::load_seeds(out_dir);
      const auto results = critpt::stage_find(cfg, data, seeds, out_dir);
      std::cout << results.size() << " finder runs recorded\n";
    } else if (cmd_match->parsed()) {
      stage = "match";
      const auto report = critpt::stage_match_from_files(cfg, out_dir);
      print_report(report);
    } else if (cmd_plots->parsed()) {
      stage = "emit-plots";
      critpt::emit_plot_data(out_dir);
      std::cout << "figure data written\n";
    } else if (cmd_all->parsed()) {
      stage = "run-all";
      const auto outcome = critpt::run_experiment(cfg, out_dir);
      std::cout << outcome.total_runs << " runs completed\n";
      print_report(outcome.report);
    }
  } catch (const std::exception& e) {
    std::cerr << stage << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
