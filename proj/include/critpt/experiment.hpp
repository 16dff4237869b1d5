#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "critpt/catalog.hpp"
#include "critpt/csv.hpp"
#include "critpt/dlae.hpp"
#include "critpt/finders.hpp"
#include "critpt/json_io.hpp"
#include "critpt/sha256.hpp"
#include "critpt/trajectory.hpp"
#include "critpt/version.hpp"

namespace critpt {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct DataConfig {
  std::size_t n_samples = 64;
  SpectrumRule rule = SpectrumRule::powers_of_two;
  std::vector<double> explicit_spectrum;
  std::uint64_t seed = 101;
};

struct CatalogConfig {
  double tau_rel = 1e-6;
  bool dump_representatives = false;
};

struct TrajectoryConfig {
  std::size_t count = 10;
  std::size_t epochs = 1000;
  double learning_rate = 2e-3;
  std::size_t snapshot_every = 10;
  double init_scale = 1.0;
  std::uint64_t seed = 202;
};

struct SamplingConfig {
  std::size_t seeds_per_trajectory = 15;
  std::uint64_t seed = 303;
};

struct MatchingConfig {
  double loss_rel_tol = 1e-5;   // index must match exactly
  double terminal_tau_rel = 1e-5;
};

/// Per-method finder settings plus the traces.csv output cadence.
struct MethodProfile {
  FinderConfig config;
  std::size_t trace_every = 1;
};

struct ExperimentConfig {
  Architecture arch{std::vector<std::size_t>{8, 4, 8}};
  DataConfig data;
  CatalogConfig catalog;
  TrajectoryConfig trajectories;
  SamplingConfig sampling;
  std::vector<FinderMethod> methods{FinderMethod::gnm, FinderMethod::newton_mr,
                                    FinderMethod::newton_tr};
  std::map<FinderMethod, MethodProfile> profiles;
  MatchingConfig matching;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

/// GNM takes many cheap first-order epochs; the Newton-type methods take few
/// expensive ones. The default budgets and trace cadences reflect that.
inline ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;

  MethodProfile gnm;
  gnm.config.method = FinderMethod::gnm;
  gnm.config.max_epochs = 50000;
  gnm.trace_every = 50;

  MethodProfile mr;
  mr.config.method = FinderMethod::newton_mr;
  mr.config.max_epochs = 500;

  MethodProfile tr;
  tr.config.method = FinderMethod::newton_tr;
  tr.config.max_epochs = 1000;

  cfg.profiles[FinderMethod::gnm] = gnm;
  cfg.profiles[FinderMethod::newton_mr] = mr;
  cfg.profiles[FinderMethod::newton_tr] = tr;
  return cfg;
}

namespace detail {

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

inline void parse_finder_config(const nlohmann::json& j, FinderConfig& c) {
  maybe(j, "epsilon_crit", c.epsilon_crit);
  maybe(j, "max_epochs", c.max_epochs);
  maybe(j, "gnm_bb_init", c.gnm_bb_init);
  if (j.contains("line_search")) {
    const auto& ls = j.at("line_search");
    maybe(ls, "init_step", c.line_search.init_step);
    maybe(ls, "shrink", c.line_search.shrink);
    maybe(ls, "sufficient_decrease", c.line_search.sufficient_decrease);
    maybe(ls, "min_step", c.line_search.min_step);
  }
  if (j.contains("minres")) {
    const auto& mi = j.at("minres");
    maybe(mi, "rel_tol", c.minres.rel_tol);
    maybe(mi, "max_iters", c.minres.max_iters);
  }
  if (j.contains("trust_region")) {
    const auto& tr = j.at("trust_region");
    maybe(tr, "initial_radius", c.trust_region.initial_radius);
    maybe(tr, "max_radius", c.trust_region.max_radius);
    maybe(tr, "shrink", c.trust_region.shrink);
    maybe(tr, "grow", c.trust_region.grow);
    maybe(tr, "accept_rho", c.trust_region.accept_rho);
    maybe(tr, "shrink_rho", c.trust_region.shrink_rho);
    maybe(tr, "grow_rho", c.trust_region.grow_rho);
    maybe(tr, "min_radius", c.trust_region.min_radius);
  }
}

}  // namespace detail

/// Defaults overridden by whatever the document provides.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  ExperimentConfig cfg = default_experiment_config();

  if (j.contains("architecture"))
    cfg.arch = Architecture(j.at("architecture").at("widths").get<std::vector<std::size_t>>());
  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::maybe(d, "n_samples", cfg.data.n_samples);
    detail::maybe(d, "seed", cfg.data.seed);
    if (d.contains("spectrum_rule")) {
      const std::string rule = d.at("spectrum_rule").get<std::string>();
      if (rule == "powers-of-two") cfg.data.rule = SpectrumRule::powers_of_two;
      else if (rule == "linear") cfg.data.rule = SpectrumRule::linear;
      else if (rule == "explicit") cfg.data.rule = SpectrumRule::explicit_list;
      else throw invalid_input("config: unknown spectrum_rule " + rule);
    }
    detail::maybe(d, "spectrum", cfg.data.explicit_spectrum);
  }
  if (j.contains("catalog")) {
    const auto& c = j.at("catalog");
    detail::maybe(c, "tau_rel", cfg.catalog.tau_rel);
    detail::maybe(c, "dump_representatives", cfg.catalog.dump_representatives);
  }
  if (j.contains("trajectories")) {
    const auto& t = j.at("trajectories");
    detail::maybe(t, "count", cfg.trajectories.count);
    detail::maybe(t, "epochs", cfg.trajectories.epochs);
    detail::maybe(t, "learning_rate", cfg.trajectories.learning_rate);
    detail::maybe(t, "snapshot_every", cfg.trajectories.snapshot_every);
    detail::maybe(t, "init_scale", cfg.trajectories.init_scale);
    detail::maybe(t, "seed", cfg.trajectories.seed);
  }
  if (j.contains("sampling")) {
    const auto& s = j.at("sampling");
    detail::maybe(s, "seeds_per_trajectory", cfg.sampling.seeds_per_trajectory);
    detail::maybe(s, "seed", cfg.sampling.seed);
  }
  if (j.contains("matching")) {
    const auto& m = j.at("matching");
    detail::maybe(m, "loss_rel_tol", cfg.matching.loss_rel_tol);
    detail::maybe(m, "terminal_tau_rel", cfg.matching.terminal_tau_rel);
  }
  detail::maybe(j, "threads", cfg.threads);

  if (j.contains("finders")) {
    const auto& f = j.at("finders");
    if (f.contains("methods")) {
      cfg.methods.clear();
      for (const auto& name : f.at("methods"))
        cfg.methods.push_back(method_from_name(name.get<std::string>()));
      if (cfg.methods.empty()) throw invalid_input("config: methods must be non-empty");
    }
    for (FinderMethod m : {FinderMethod::gnm, FinderMethod::newton_mr, FinderMethod::newton_tr}) {
      MethodProfile& prof = cfg.profiles[m];
      if (f.contains("defaults")) detail::parse_finder_config(f.at("defaults"), prof.config);
      const std::string name = method_name(m);
      if (f.contains(name)) {
        detail::parse_finder_config(f.at(name), prof.config);
        detail::maybe(f.at(name), "trace_every", prof.trace_every);
      }
    }
  }

  if (cfg.trajectories.count == 0 || cfg.sampling.seeds_per_trajectory == 0)
    throw invalid_input("config: counts must be positive");
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(nlohmann::json::parse(read_text_file(path)));
}

inline ordered_json finder_config_to_json(const MethodProfile& prof) {
  const FinderConfig& c = prof.config;
  ordered_json j;
  j["epsilon_crit"] = c.epsilon_crit;
  j["max_epochs"] = c.max_epochs;
  j["gnm_bb_init"] = c.gnm_bb_init;
  j["line_search"] = {{"init_step", c.line_search.init_step},
                      {"shrink", c.line_search.shrink},
                      {"sufficient_decrease", c.line_search.sufficient_decrease},
                      {"min_step", c.line_search.min_step}};
  j["minres"] = {{"rel_tol", c.minres.rel_tol}, {"max_iters", c.minres.max_iters}};
  j["trust_region"] = {{"initial_radius", c.trust_region.initial_radius},
                       {"max_radius", c.trust_region.max_radius},
                       {"shrink", c.trust_region.shrink},
                       {"grow", c.trust_region.grow},
                       {"accept_rho", c.trust_region.accept_rho},
                       {"shrink_rho", c.trust_region.shrink_rho},
                       {"grow_rho", c.trust_region.grow_rho},
                       {"min_radius", c.trust_region.min_radius}};
  j["trace_every"] = prof.trace_every;
  return j;
}

/// Fully resolved configuration, echoed into the manifest.
inline ordered_json config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["architecture"]["widths"] = cfg.arch.widths;
  j["data"] = {{"n_samples", cfg.data.n_samples},
               {"spectrum_rule", spectrum_rule_name(cfg.data.rule)},
               {"spectrum", cfg.data.explicit_spectrum},
               {"seed", cfg.data.seed}};
  j["catalog"] = {{"tau_rel", cfg.catalog.tau_rel},
                  {"dump_representatives", cfg.catalog.dump_representatives}};
  j["trajectories"] = {{"count", cfg.trajectories.count},
                       {"epochs", cfg.trajectories.epochs},
                       {"learning_rate", cfg.trajectories.learning_rate},
                       {"snapshot_every", cfg.trajectories.snapshot_every},
                       {"init_scale", cfg.trajectories.init_scale},
                       {"seed", cfg.trajectories.seed}};
  j["sampling"] = {{"seeds_per_trajectory", cfg.sampling.seeds_per_trajectory},
                   {"seed", cfg.sampling.seed}};
  ordered_json finders;
  ordered_json names = ordered_json::array();
  for (FinderMethod m : cfg.methods) names.push_back(method_name(m));
  finders["methods"] = names;
  for (const auto& [m, prof] : cfg.profiles) finders[method_name(m)] = finder_config_to_json(prof);
  j["finders"] = finders;
  j["matching"] = {{"loss_rel_tol", cfg.matching.loss_rel_tol},
                   {"terminal_tau_rel", cfg.matching.terminal_tau_rel}};
  j["threads"] = cfg.threads;
  return j;
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

struct MethodSummary {
  std::string method;
  std::size_t runs = 0;
  std::size_t converged = 0;
  std::size_t matched = 0;
  std::size_t distinct_entries = 0;
  std::size_t distinct_saddles = 0;  // matched entries with index > 0
  std::size_t ambiguous = 0;
  double max_terminal_g = 0.0;
  double min_terminal_g = std::numeric_limits<double>::infinity();
};

struct MatchReport {
  std::vector<MethodSummary> per_method;
};

/// A minimal view of a catalog entry, so matching can run either from a
/// freshly built catalog or from catalog.csv.
struct CatalogKey {
  std::string subset;
  double analytic_loss = 0.0;
  std::size_t index = 0;
};

inline std::vector<CatalogKey> catalog_keys(const Catalog& catalog) {
  std::vector<CatalogKey> keys;
  keys.reserve(catalog.entries.size());
  for (const auto& e : catalog.entries)
    keys.push_back({subset_to_string(e.subset), e.analytic_loss, e.index});
  return keys;
}

/// Converged records match an entry when the loss agrees within the relative
/// tolerance and the index agrees exactly; ties go to the closest loss and
/// are flagged ambiguous. Non-converged records stay unmatched by definition.
inline MatchReport match_runs(std::vector<CriticalPointRecord>& records,
                              const std::vector<CatalogKey>& keys,
                              const MatchingConfig& cfg,
                              const std::vector<FinderMethod>& methods) {
  if (keys.empty()) throw invalid_input("match_runs: empty catalog");

  for (auto& rec : records) {
    rec.matched = false;
    rec.matched_subset.clear();
    rec.ambiguous_match = false;
    if (!rec.converged) continue;
    const CatalogKey* best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    std::size_t candidates = 0;
    for (const auto& key : keys) {
      const double dist = std::fabs(rec.loss - key.analytic_loss);
      if (dist <= cfg.loss_rel_tol * std::max(1.0, key.analytic_loss) && rec.index == key.index) {
        ++candidates;
        if (dist < best_dist) {
          best_dist = dist;
          best = &key;
        }
      }
    }
    if (best) {
      rec.matched = true;
      rec.matched_subset = best->subset.empty() ? std::string("0") : best->subset;
      rec.ambiguous_match = candidates > 1;
    }
  }

  MatchReport report;
  for (FinderMethod m : methods) {
    MethodSummary s;
    s.method = method_name(m);
    std::set<std::string> entries_hit;
    std::set<std::string> saddles_hit;
    for (const auto& rec : records) {
      if (rec.method != m) continue;
      ++s.runs;
      s.max_terminal_g = std::max(s.max_terminal_g, rec.terminal_sq_grad_norm);
      s.min_terminal_g = std::min(s.min_terminal_g, rec.terminal_sq_grad_norm);
      if (rec.converged) ++s.converged;
      if (rec.matched) {
        ++s.matched;
        entries_hit.insert(rec.matched_subset);
        if (rec.index > 0) saddles_hit.insert(rec.matched_subset);
      }
      if (rec.ambiguous_match) ++s.ambiguous;
    }
    s.distinct_entries = entries_hit.size();
    s.distinct_saddles = saddles_hit.size();
    if (s.runs == 0) s.min_terminal_g = 0.0;
    report.per_method.push_back(std::move(s));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Pipeline stages and output files
// ---------------------------------------------------------------------------

struct RunResult {
  FinderMethod method = FinderMethod::gnm;
  std::size_t trajectory_id = 0;
  std::size_t seed_id = 0;
  FinderRunTrace trace;
  Vec terminal;
  double terminal_g = 0.0;
  double terminal_loss = 0.0;
  CriticalPointRecord record;
};

namespace paths {
inline std::string dataset_json(const std::string& out) { return out + "/dataset.json"; }
inline std::string data_x(const std::string& out) { return out + "/data_x.json"; }
inline std::string catalog_csv(const std::string& out) { return out + "/catalog.csv"; }
inline std::string trajectories_csv(const std::string& out) { return out + "/trajectories.csv"; }
inline std::string seeds_json(const std::string& out) { return out + "/seeds.json"; }
inline std::string traces_csv(const std::string& out) { return out + "/traces.csv"; }
inline std::string critical_points_csv(const std::string& out) { return out + "/critical_points.csv"; }
inline std::string match_report_json(const std::string& out) { return out + "/match_report.json"; }
inline std::string fig1_traces_csv(const std::string& out) { return out + "/fig1_traces.csv"; }
inline std::string fig1_scatter_csv(const std::string& out) { return out + "/fig1_scatter.csv"; }
inline std::string manifest_json(const std::string& out) { return out + "/manifest.json"; }
}  // namespace paths

inline Dataset stage_gen_data(const ExperimentConfig& cfg, const std::string& out) {
  Dataset ds = generate_dataset(cfg.arch.d(), cfg.data.n_samples, cfg.data.rule,
                                cfg.data.seed, cfg.data.explicit_spectrum);
  std::filesystem::create_directories(out);
  write_text_file(paths::data_x(out), matrix_to_json(ds.x));
  write_text_file(paths::dataset_json(out), dataset_to_json(ds, "data_x.json"));
  return ds;
}

inline Dataset load_dataset(const std::string& out) {
  const auto j = nlohmann::json::parse(read_text_file(paths::dataset_json(out)));
  const Matrix x = matrix_from_json(nlohmann::json::parse(read_text_file(paths::data_x(out))));
  return dataset_from_json(j, x);
}

inline void write_catalog_csv(const Catalog& catalog, const std::string& path) {
  CsvWriter w(path);
  w.header("subset,r,analytic_loss,index,nullity,tau");
  for (const auto& e : catalog.entries) {
    w.field(subset_to_string(e.subset))
        .field(e.rank)
        .field(e.analytic_loss)
        .field(e.index)
        .field(e.nullity)
        .field(e.tau);
    w.end_row();
  }
}

inline Catalog stage_catalog(const ExperimentConfig& cfg, const Dataset& data,
                             const std::string& out) {
  Catalog catalog = build_catalog(cfg.arch, data, cfg.catalog.tau_rel);
  write_catalog_csv(catalog, paths::catalog_csv(out));
  if (cfg.catalog.dump_representatives) {
    const std::string dir = out + "/representatives";
    std::filesystem::create_directories(dir);
    for (const auto& e : catalog.entries) {
      std::string name = subset_to_string(e.subset);
      std::replace(name.begin(), name.end(), ';', '-');
      if (name.empty()) name = "empty";
      write_text_file(dir + "/rep_" + name + ".json", params_to_json(e.representative));
    }
  }
  return catalog;
}

inline std::vector<Trajectory> stage_train(const ExperimentConfig& cfg, const Dataset& data,
                                           const std::string& out,
                                           std::vector<std::string>* warnings = nullptr) {
  std::vector<Trajectory> trajectories;
  trajectories.reserve(cfg.trajectories.count);
  const std::string snap_dir = out + "/snapshots";
  std::filesystem::create_directories(snap_dir);

  double min_eps = std::numeric_limits<double>::infinity();
  for (FinderMethod m : cfg.methods) min_eps = std::min(min_eps, cfg.profiles.at(m).config.epsilon_crit);

  CsvWriter w(paths::trajectories_csv(out));
  w.header("trajectory_id,epoch,loss,sq_grad_norm");
  for (std::size_t t = 0; t < cfg.trajectories.count; ++t) {
    const std::uint64_t seed = SeededRng::derive(cfg.trajectories.seed, 1, t);
    Trajectory traj = train_gd(cfg.arch, data, cfg.trajectories.init_scale,
                               cfg.trajectories.learning_rate, cfg.trajectories.epochs,
                               cfg.trajectories.snapshot_every, seed, t);
    for (const auto& snap : traj.snapshots) {
      w.field(t).field(snap.epoch).field(snap.loss).field(snap.sq_grad_norm);
      w.end_row();
      write_text_file(snap_dir + "/traj" + std::to_string(t) + "_epoch" +
                          std::to_string(snap.epoch) + ".json",
                      params_to_json(snap.params));
      if (warnings && snap.sq_grad_norm <= min_eps)
        warnings->push_back("trajectory " + std::to_string(t) + " reached the criterion at epoch " +
                            std::to_string(snap.epoch) + " on its own");
    }
    if (traj.status == TrainStatus::diverged && warnings)
      warnings->push_back("trajectory " + std::to_string(t) + " diverged");
    trajectories.push_back(std::move(traj));
  }
  return trajectories;
}

inline std::vector<SeedPoint> stage_sample(const ExperimentConfig& cfg,
                                           const std::vector<Trajectory>& trajectories,
                                           const std::string& out) {
  std::vector<SeedPoint> seeds;
  for (const Trajectory& traj : trajectories) {
    SeededRng rng(SeededRng::derive(cfg.sampling.seed, 2, traj.trajectory_id));
    auto picks = sample_seeds(traj, cfg.sampling.seeds_per_trajectory, rng);
    seeds.insert(seeds.end(), picks.begin(), picks.end());
  }
  std::string j = "{\"seeds\":[";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) j += ',';
    j += "{\"trajectory_id\":" + std::to_string(seeds[i].trajectory_id) +
         ",\"seed_id\":" + std::to_string(seeds[i].seed_id) +
         ",\"epoch\":" + std::to_string(seeds[i].epoch) +
         ",\"params\":" + params_to_json(seeds[i].params) + "}";
  }
  j += "]}";
  write_text_file(paths::seeds_json(out), j);
  return seeds;
}

inline std::vector<SeedPoint> load_seeds(const std::string& out) {
  const auto j = nlohmann::json::parse(read_text_file(paths::seeds_json(out)));
  std::vector<SeedPoint> seeds;
  for (const auto& s : j.at("seeds")) {
    SeedPoint pt;
    pt.trajectory_id = s.at("trajectory_id").get<std::size_t>();
    pt.seed_id = s.at("seed_id").get<std::size_t>();
    pt.epoch = s.at("epoch").get<std::size_t>();
    pt.params = params_from_json(s.at("params"));
    seeds.push_back(std::move(pt));
  }
  return seeds;
}

inline void write_traces_csv(const ExperimentConfig& cfg, const std::vector<RunResult>& results,
                             const std::string& path) {
  CsvWriter w(path);
  w.header("method,trajectory_id,seed_id,epoch,sq_grad_norm,loss,step_or_radius,inner_iters,accepted,status");
  for (const auto& run : results) {
    const std::size_t every = cfg.profiles.at(run.method).trace_every;
    const std::string status = status_name(run.trace.status);
    const bool is_tr = run.method == FinderMethod::newton_tr;
    for (std::size_t i = 0; i < run.trace.records.size(); ++i) {
      const TraceRecord& rec = run.trace.records[i];
      const bool keep = (rec.epoch % every == 0) || i + 1 == run.trace.records.size();
      if (!keep) continue;
      w.field(method_name(run.method))
          .field(run.trajectory_id)
          .field(run.seed_id)
          .field(rec.epoch)
          .field(rec.sq_grad_norm)
          .field(rec.loss)
          .field(is_tr ? rec.radius : rec.step_norm)
          .field(rec.inner_iters)
          .field(rec.accepted)
          .field(status);
      w.end_row();
    }
  }
}

inline void write_critical_points_csv(const std::vector<CriticalPointRecord>& records,
                                      const std::string& path) {
  CsvWriter w(path);
  w.header("method,trajectory_id,seed_id,terminal_sq_grad_norm,loss,index,nullity,converged,matched_subset");
  for (const auto& r : records) {
    w.field(method_name(r.method))
        .field(r.trajectory_id)
        .field(r.seed_id)
        .field(r.terminal_sq_grad_norm)
        .field(r.loss)
        .field(r.index)
        .field(r.nullity)
        .field(r.converged)
        .field(r.matched_subset);
    w.end_row();
  }
}

/// Run every (method, seed point) pair in a worker pool. Results land in a
/// pre-sized vector indexed by task id, so output order is independent of
/// scheduling.
inline std::vector<RunResult> stage_find(const ExperimentConfig& cfg, const Dataset& data,
                                         const std::vector<SeedPoint>& seeds,
                                         const std::string& out) {
  struct Task {
    FinderMethod method;
    const SeedPoint* seed;
  };
  std::vector<Task> tasks;
  for (FinderMethod m : cfg.methods)
    for (const SeedPoint& s : seeds) tasks.push_back({m, &s});

  std::vector<RunResult> results(tasks.size());
  DlaeProblem problem{&cfg.arch, &data};

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      const Task& task = tasks[i];
      const FinderConfig& fc = cfg.profiles.at(task.method).config;
      FinderOutcome outcome = run_finder(problem, task.seed->params.flatten(), fc);

      RunResult& run = results[i];
      run.method = task.method;
      run.trajectory_id = task.seed->trajectory_id;
      run.seed_id = task.seed->seed_id;
      run.trace = std::move(outcome.trace);
      run.terminal = std::move(outcome.terminal);
      run.terminal_g = outcome.terminal_g;
      run.terminal_loss = outcome.terminal_loss;

      run.record = classify_terminal(NetworkParams::unflatten(cfg.arch, run.terminal), data,
                                     cfg.matching.terminal_tau_rel, run.terminal_g,
                                     fc.epsilon_crit);
      run.record.method = task.method;
      run.record.trajectory_id = run.trajectory_id;
      run.record.seed_id = run.seed_id;
    }
  };

  std::size_t n_threads = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
  n_threads = std::max<std::size_t>(1, std::min(n_threads, tasks.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Tasks were enumerated sorted (method, trajectory, seed); keep that order.
  std::stable_sort(results.begin(), results.end(), [&](const RunResult& a, const RunResult& b) {
    const auto ka = std::find(cfg.methods.begin(), cfg.methods.end(), a.method) - cfg.methods.begin();
    const auto kb = std::find(cfg.methods.begin(), cfg.methods.end(), b.method) - cfg.methods.begin();
    if (ka != kb) return ka < kb;
    if (a.trajectory_id != b.trajectory_id) return a.trajectory_id < b.trajectory_id;
    return a.seed_id < b.seed_id;
  });

  write_traces_csv(cfg, results, paths::traces_csv(out));
  std::vector<CriticalPointRecord> records;
  for (const auto& r : results) records.push_back(r.record);
  write_critical_points_csv(records, paths::critical_points_csv(out));
  return results;
}

inline ordered_json match_report_to_json(const MatchReport& report) {
  ordered_json j;
  ordered_json methods = ordered_json::array();
  for (const auto& s : report.per_method) {
    ordered_json m;
    m["method"] = s.method;
    m["runs"] = s.runs;
    m["converged"] = s.converged;
    m["matched"] = s.matched;
    m["distinct_entries"] = s.distinct_entries;
    m["distinct_saddles"] = s.distinct_saddles;
    m["ambiguous"] = s.ambiguous;
    m["max_terminal_sq_grad_norm"] = s.max_terminal_g;
    m["min_terminal_sq_grad_norm"] = s.min_terminal_g;
    methods.push_back(m);
  }
  j["per_method"] = methods;
  return j;
}

inline MatchReport stage_match(const ExperimentConfig& cfg, std::vector<RunResult>& results,
                               const Catalog& catalog, const std::string& out) {
  std::vector<CriticalPointRecord> records;
  records.reserve(results.size());
  for (const auto& r : results) records.push_back(r.record);

  MatchReport report = match_runs(records, catalog_keys(catalog), cfg.matching, cfg.methods);
  for (std::size_t i = 0; i < results.size(); ++i) results[i].record = records[i];

  write_critical_points_csv(records, paths::critical_points_csv(out));
  write_text_file(paths::match_report_json(out), match_report_to_json(report).dump(2) + "\n");
  return report;
}

inline std::vector<CatalogKey> load_catalog_keys(const std::string& out) {
  const auto rows = read_csv(paths::catalog_csv(out));
  std::vector<CatalogKey> keys;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() < 6) throw invalid_input("catalog.csv: malformed row");
    keys.push_back({r[0], std::stod(r[2]), std::stoul(r[3])});
  }
  return keys;
}

inline std::vector<CriticalPointRecord> load_critical_points(const std::string& out) {
  const auto rows = read_csv(paths::critical_points_csv(out));
  std::vector<CriticalPointRecord> records;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() < 9) throw invalid_input("critical_points.csv: malformed row");
    CriticalPointRecord rec;
    rec.method = method_from_name(r[0]);
    rec.trajectory_id = std::stoul(r[1]);
    rec.seed_id = std::stoul(r[2]);
    rec.terminal_sq_grad_norm = std::stod(r[3]);
    rec.loss = std::stod(r[4]);
    rec.index = std::stoul(r[5]);
    rec.nullity = std::stoul(r[6]);
    rec.converged = r[7] == "1";
    rec.matched = !r[8].empty();
    rec.matched_subset = r[8];
    records.push_back(std::move(rec));
  }
  return records;
}

/// Reconstruct trajectories from trajectories.csv and the snapshot files.
inline std::vector<Trajectory> load_trajectories(const std::string& out) {
  const auto rows = read_csv(paths::trajectories_csv(out));
  std::map<std::size_t, Trajectory> by_id;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() < 4) throw invalid_input("trajectories.csv: malformed row");
    const std::size_t tid = std::stoul(r[0]);
    const std::size_t epoch = std::stoul(r[1]);
    Trajectory& traj = by_id[tid];
    traj.trajectory_id = tid;
    Snapshot snap;
    snap.epoch = epoch;
    snap.loss = std::stod(r[2]);
    snap.sq_grad_norm = std::stod(r[3]);
    snap.params = params_from_json_text(read_text_file(
        out + "/snapshots/traj" + std::to_string(tid) + "_epoch" + std::to_string(epoch) + ".json"));
    traj.snapshots.push_back(std::move(snap));
  }
  std::vector<Trajectory> trajectories;
  for (auto& [tid, traj] : by_id) trajectories.push_back(std::move(traj));
  return trajectories;
}

/// Standalone matching pass over previously written CSVs.
inline MatchReport stage_match_from_files(const ExperimentConfig& cfg, const std::string& out) {
  auto records = load_critical_points(out);
  MatchReport report = match_runs(records, load_catalog_keys(out), cfg.matching, cfg.methods);
  write_critical_points_csv(records, paths::critical_points_csv(out));
  write_text_file(paths::match_report_json(out), match_report_to_json(report).dump(2) + "\n");
  return report;
}

/// Display floor from the figure convention: squared gradient norms below
/// 1e-40 are flagged (raw values are preserved in the CSV).
inline constexpr double kTraceFloor = 1e-40;

/// Build fig1_traces.csv and fig1_scatter.csv from the experiment CSVs.
/// Emission is catalog-only when no finder outputs exist yet.
inline void emit_plot_data(const std::string& out) {
  // traces
  if (std::filesystem::exists(paths::traces_csv(out))) {
    const auto rows = read_csv(paths::traces_csv(out));
    CsvWriter w(paths::fig1_traces_csv(out));
    w.header("method,trajectory_id,seed_id,epoch,sq_grad_norm,below_floor,run_converged");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() < 10) throw invalid_input("traces.csv: malformed row");
      const double g = std::stod(r[4]);
      w.field(r[0]).field(r[1]).field(r[2]).field(r[3]);
      w.field(r[4]);  // raw value, already full precision
      w.field(g < kTraceFloor);
      w.field(r[9] == "converged");
      w.end_row();
    }
  }
  // scatter
  {
    const auto catalog_rows = read_csv(paths::catalog_csv(out));
    CsvWriter w(paths::fig1_scatter_csv(out));
    w.header("layer,method,loss,index");
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t i = 1; i < catalog_rows.size(); ++i) {
      const auto& r = catalog_rows[i];
      if (r.size() < 6) throw invalid_input("catalog.csv: malformed row");
      char rounded[40];
      std::snprintf(rounded, sizeof(rounded), "%.12g", std::stod(r[2]));
      if (!seen.insert({rounded, r[3]}).second) continue;
      w.field("catalog").field("").field(r[2]).field(r[3]);
      w.end_row();
    }
    std::filesystem::path cp = paths::critical_points_csv(out);
    if (std::filesystem::exists(cp)) {
      const auto point_rows = read_csv(cp.string());
      for (std::size_t i = 1; i < point_rows.size(); ++i) {
        const auto& r = point_rows[i];
        if (r.size() < 9) throw invalid_input("critical_points.csv: malformed row");
        if (r[7] != "1") continue;  // converged records only
        w.field("recovered").field(r[0]).field(r[4]).field(r[5]);
        w.end_row();
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct ExperimentOutcome {
  MatchReport report;
  std::size_t total_runs = 0;
  std::vector<std::string> warnings;
};

inline void write_manifest(const ExperimentConfig& cfg, const std::string& out,
                           const std::vector<std::pair<std::string, std::string>>& stages,
                           const std::vector<std::string>& warnings) {
  ordered_json j;
  j["version"] = kVersion;
  j["generator_id"] = SeededRng::generator_id();
  j["seed_derivation"] = SeededRng::derivation_id();
  j["config"] = config_to_json(cfg);
  ordered_json st = ordered_json::array();
  for (const auto& [name, error] : stages) {
    ordered_json s;
    s["stage"] = name;
    s["status"] = error.empty() ? "ok" : "failed";
    if (!error.empty()) s["error"] = error;
    st.push_back(s);
  }
  j["stages"] = st;
  j["warnings"] = warnings;

  ordered_json files = ordered_json::array();
  const std::vector<std::string> candidates = {
      paths::dataset_json(out),       paths::data_x(out),
      paths::catalog_csv(out),        paths::trajectories_csv(out),
      paths::seeds_json(out),         paths::traces_csv(out),
      paths::critical_points_csv(out), paths::match_report_json(out),
      paths::fig1_traces_csv(out),    paths::fig1_scatter_csv(out)};
  for (const auto& path : candidates) {
    if (!std::filesystem::exists(path)) continue;
    ordered_json f;
    f["path"] = std::filesystem::path(path).filename().string();
    f["sha256"] = Sha256::of_file(path);
    files.push_back(f);
  }
  j["files"] = files;
  write_text_file(paths::manifest_json(out), j.dump(2) + "\n");
}

/// The full pipeline: data, catalog, trajectories, seeds, finder runs,
/// matching, plot data, manifest. Deterministic for a fixed config: rerunning
/// reproduces every CSV byte for byte. On stage failure the manifest records
/// the stage name and the error and the exception propagates.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const std::string& out) {
  std::filesystem::create_directories(out);
  ExperimentOutcome outcome;
  std::vector<std::pair<std::string, std::string>> stages;

  auto fail = [&](const std::string& stage, const std::exception& e) {
    stages.emplace_back(stage, e.what());
    write_manifest(cfg, out, stages, outcome.warnings);
    std::cerr << "stage " << stage << " failed: " << e.what() << "\n";
  };

  Dataset data;
  Catalog catalog;
  std::vector<Trajectory> trajectories;
  std::vector<SeedPoint> seeds;
  std::vector<RunResult> results;

  try {
    data = stage_gen_data(cfg, out);
    stages.emplace_back("gen-data", "");
  } catch (const std::exception& e) {
    fail("gen-data", e);
    throw;
  }
  try {
    catalog = stage_catalog(cfg, data, out);
    stages.emplace_back("catalog", "");
  } catch (const std::exception& e) {
    fail("catalog", e);
    throw;
  }
  try {
    trajectories = stage_train(cfg, data, out, &outcome.warnings);
    stages.emplace_back("train", "");
  } catch (const std::exception& e) {
    fail("train", e);
    throw;
  }
  try {
    seeds = stage_sample(cfg, trajectories, out);
    stages.emplace_back("sample-seeds", "");
  } catch (const std::exception& e) {
    fail("sample-seeds", e);
    throw;
  }
  try {
    results = stage_find(cfg, data, seeds, out);
    stages.emplace_back("find", "");
  } catch (const std::exception& e) {
    fail("find", e);
    throw;
  }
  try {
    outcome.report = stage_match(cfg, results, catalog, out);
    stages.emplace_back("match", "");
  } catch (const std::exception& e) {
    fail("match", e);
    throw;
  }
  try {
    emit_plot_data(out);
    stages.emplace_back("emit-plots", "");
  } catch (const std::exception& e) {
    fail("emit-plots", e);
    throw;
  }

  outcome.total_runs = results.size();
  for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
  write_manifest(cfg, out, stages, outcome.warnings);
  return outcome;
}

}  // namespace critpt
