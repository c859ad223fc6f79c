// Apache License, Version 2.0, refer to LICENSE.txt
//
// Command-line front end: fit / sample / diagnose / decide / roc / experiment.
// Exit codes: 0 success, 1 input error, 2 numerical non-convergence.  Every
// command that takes a config writes the resolved copy next to its outputs.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "otb/config.hpp"
#include "otb/diagnostics.hpp"
#include "otb/experiments.hpp"
#include "otb/inference.hpp"
#include "otb/models.hpp"
#include "otb/parallel.hpp"
#include "otb/polybasis.hpp"
#include "otb/rng.hpp"
#include "otb/sampleset.hpp"
#include "otb/solver.hpp"
#include "otb/transport_map.hpp"
#include "otb/util.hpp"

namespace {

using namespace otb;
using nlohmann::json;

struct GlobalArgs {
  std::string config;
  std::string out_dir = ".";
  std::uint64_t seed = 2026;
  bool seed_given = false;
  int threads = 0;
  bool quiet = false;
};

/// Collapses an exception message to one machine-parsable stderr line.
void report_error(const std::exception& e) {
  std::string msg = e.what();
  for (char& c : msg)
    if (c == '\n') c = ' ';
  std::cerr << "otb: " << msg << "\n";
}

std::string out_path(const GlobalArgs& g, const std::string& name) {
  std::filesystem::create_directories(g.out_dir);
  return (std::filesystem::path(g.out_dir) / name).string();
}

/// Reads and discards the fit-stage keys so one run config serves fit,
/// diagnose, and decide alike.
void consume_fit_keys(Config& cfg) {
  cfg.integer_or("n_train", 0);
  basis_degree_from_config(cfg);
  solver_from_config(cfg);
}

/// Root seed precedence: --seed flag, then the config's `seed`, then 2026.
std::uint64_t pick_seed(const GlobalArgs& g, Config& cfg) {
  if (g.seed_given) {
    if (cfg.has("seed")) cfg.integer("seed");  // consume the overridden key
    return g.seed;
  }
  return static_cast<std::uint64_t>(cfg.integer_or("seed", 2026));
}

void write_resolved(const GlobalArgs& g, const Config& cfg) {
  write_text_file(out_path(g, "config.resolved.toml"), cfg.resolved());
}

// ---------------------------------------------------------------------------
// fit: source prior -> posterior (or -> target prior, or the two-stage chain)

int cmd_fit(const GlobalArgs& g) {
  Config cfg = Config::parse_file(g.config);
  const std::uint64_t seed = pick_seed(g, cfg);
  const std::size_t n_train =
      static_cast<std::size_t>(cfg.integer_or("n_train", 1000));
  if (n_train < 2) throw ConfigError("n_train must be >= 2");

  const PriorModel base = prior_from_config(cfg, "prior");
  const int degree = basis_degree_from_config(cfg);
  FitOptions opts = solver_from_config(cfg);
  opts.seed = derive_seed(seed, "fit", 0);

  const bool chained = cfg.has("target_prior.kind");
  const bool with_likelihood = has_likelihood(cfg);
  if (!chained && !with_likelihood)
    throw ConfigError("nothing to fit: add a [likelihood] or a [target_prior]");

  const SampleSet train = base.sample(n_train, derive_seed(seed, "train", 0));
  const BasisSpec spec = basis_for_prior(base, degree);

  Termination termination = Termination::Converged;
  if (chained && with_likelihood) {
    // base -> target prior -> posterior, per the two-stage construction for
    // priors without a classical orthogonal family
    const PriorModel mid = prior_from_config(cfg, "target_prior");
    const LikelihoodModel lik = likelihood_from_config(cfg, mid.dim());
    cfg.require_all_consumed();
    write_resolved(g, cfg);
    const PriorTargetAdapter intermediate(mid);
    const PosteriorTarget posterior(mid, lik);
    const ChainResult cr = fit_chain(base, intermediate, posterior, train, spec, opts);
    save_map_chain({cr.stage1, cr.stage2}, out_path(g, "map.json"), &base);
    write_text_file(out_path(g, "solve_report.json"),
                    json{{"stage1", cr.report1.to_json()},
                         {"stage2", cr.report2.to_json()}}
                            .dump(2) +
                        "\n");
    if (!g.quiet)
      std::cout << "fit: two stages converged ("
                << cr.report1.iterations << " + " << cr.report2.iterations
                << " iterations) -> " << out_path(g, "map.json") << "\n";
    return 0;  // fit_chain is strict: reaching here means both stages converged
  }

  FitResult res;
  if (chained) {
    const PriorModel mid = prior_from_config(cfg, "target_prior");
    cfg.require_all_consumed();
    write_resolved(g, cfg);
    res = fit(PriorTargetAdapter(mid), train, spec, opts);
  } else {
    const LikelihoodModel lik = likelihood_from_config(cfg, base.dim());
    cfg.require_all_consumed();
    write_resolved(g, cfg);
    res = fit(PosteriorTarget(base, lik), train, spec, opts);
  }
  termination = res.report.termination;
  save_map(res.map, out_path(g, "map.json"), &base);
  write_text_file(out_path(g, "solve_report.json"),
                  res.report.to_json().dump(2) + "\n");
  if (!g.quiet)
    std::cout << "fit: " << termination_name(termination) << " after "
              << res.report.iterations << " iterations, objective "
              << format_double(res.report.objective.back()) << " -> "
              << out_path(g, "map.json") << "\n";
  return termination == Termination::Converged ? 0 : 2;
}

// ---------------------------------------------------------------------------
// sample: push prior draws through a stored map

int cmd_sample(const GlobalArgs& g, const std::string& map_path, long n,
               const std::string& out_name) {
  if (n < 1) throw ConfigError("sample: n must be >= 1");
  const MapFile mf = load_map_file(map_path);
  if (!mf.source_prior)
    throw ConfigError("sample: map file stores no source prior to draw from");
  const SampleSet draws =
      mf.source_prior->sample(static_cast<std::size_t>(n),
                              derive_seed(g.seed, "sample", 0));
  const SampleSet pushed = mf.push(draws);
  const std::string path = out_path(g, out_name);
  write_samples_csv(pushed, path);
  if (!g.quiet)
    std::cout << "sample: wrote " << pushed.n() << " rows ("
              << pushed.n_infeasible << " infeasible) -> " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose: T-operator statistics of a stored map against its posterior

int cmd_diagnose(const GlobalArgs& g, const std::string& map_path, long n) {
  if (n < 2) throw ConfigError("diagnose: n must be >= 2");
  Config cfg = Config::parse_file(g.config);
  const std::uint64_t seed = pick_seed(g, cfg);
  const MapFile mf = load_map_file(map_path);

  // the Bayes prior is the chain intermediate when the map has two stages
  const std::string prior_section =
      cfg.has("target_prior.kind") ? "target_prior" : "prior";
  const PriorModel bayes_prior = prior_from_config(cfg, prior_section);
  if (!has_likelihood(cfg))
    throw ConfigError("diagnose needs a [likelihood] to define the posterior");
  const LikelihoodModel lik = likelihood_from_config(cfg, bayes_prior.dim());
  const PosteriorTarget target(bayes_prior, lik);
  // prefer the prior stored with the map; the config copy documents the run
  PriorModel source = prior_from_config(cfg, "prior");
  if (mf.source_prior) source = *mf.source_prior;
  consume_fit_keys(cfg);
  cfg.require_all_consumed();
  write_resolved(g, cfg);

  const SampleSet draws =
      source.sample(static_cast<std::size_t>(n), derive_seed(seed, "diagnose", 0));
  const DiagnosticsReport rep = diagnose(map_eval(mf), target, source, draws);
  json j = rep.to_json();
  j["n_draws"] = n;
  j["seed"] = seed;
  j["map_hash"] = mf.hash();
  write_text_file(out_path(g, "diagnostics.json"), j.dump(2) + "\n");
  if (!g.quiet)
    std::cout << "diagnose: log_beta_map " << format_double(rep.log_beta_map)
              << ", var_T " << format_double(rep.var_T) << ", " << rep.n_used
              << "/" << n << " rows used -> " << out_path(g, "diagnostics.json")
              << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// decide: Bayes action under a finite candidate set vs the plug-in action

int cmd_decide(const GlobalArgs& g, const std::string& map_path, long n) {
  if (n < 1) throw ConfigError("decide: n must be >= 1");
  Config cfg = Config::parse_file(g.config);
  const std::uint64_t seed = pick_seed(g, cfg);
  const MapFile mf = load_map_file(map_path);
  const int d = mf.stages.empty() ? 0 : mf.stages.back().dim();
  if (d == 0) throw CorruptFile("decide: map file has no stages");

  const std::string kind = cfg.str_or("decision.kind", "quadratic");
  if (kind != "quadratic" && kind != "absolute")
    throw ConfigError("decision.kind must be 'quadratic' or 'absolute'");
  const std::vector<double> flat = cfg.numbers("decision.points");
  if (flat.empty() || flat.size() % static_cast<std::size_t>(d) != 0)
    throw ConfigError("decision.points must be a non-empty multiple of the map dim");
  const int n_actions = static_cast<int>(flat.size()) / d;
  Mat points(n_actions, d);
  for (int a = 0; a < n_actions; ++a)
    for (int c = 0; c < d; ++c)
      points(a, c) = flat[static_cast<std::size_t>(a * d + c)];

  DecisionProblem problem;
  if (cfg.has("decision.names")) {
    problem.actions = cfg.strs("decision.names");
    if (static_cast<int>(problem.actions.size()) != n_actions)
      throw ConfigError("decision.names must match the number of actions");
  } else {
    for (int a = 0; a < n_actions; ++a)
      problem.actions.push_back("a" + std::to_string(a));
  }
  problem.loss = [&](int action, VecRef x) {
    const Vec diff = x - points.row(action).transpose();
    return kind == "quadratic" ? diff.squaredNorm() : diff.cwiseAbs().sum();
  };

  const bool has_plugin = cfg.has("decision.x_plugin");
  Vec x_plugin = has_plugin ? cfg.vec_broadcast("decision.x_plugin", d) : Vec::Zero(d);
  // tolerate the fit-stage sections so the run config can be reused verbatim
  if (cfg.has("prior.kind")) prior_from_config(cfg, "prior");
  if (cfg.has("target_prior.kind")) prior_from_config(cfg, "target_prior");
  if (has_likelihood(cfg)) likelihood_from_config(cfg, d);
  consume_fit_keys(cfg);
  cfg.require_all_consumed();
  write_resolved(g, cfg);

  if (!mf.source_prior)
    throw ConfigError("decide: map file stores no source prior to draw from");
  const SampleSet draws = mf.source_prior->sample(static_cast<std::size_t>(n),
                                                  derive_seed(seed, "decide", 0));
  const SampleSet post = feasible_rows(mf.push(draws));
  const auto [bayes, expected] = bayes_action(problem, post);
  if (!has_plugin) {
    // default plug-in point: the posterior sample mean
    x_plugin = post.X.colwise().mean().transpose();
  }
  const int plugin = map_action(problem, x_plugin);

  json j{{"kind", kind},
         {"actions", problem.actions},
         {"bayes_action", bayes},
         {"bayes_action_name", problem.actions[static_cast<std::size_t>(bayes)]},
         {"plugin_action", plugin},
         {"plugin_action_name", problem.actions[static_cast<std::size_t>(plugin)]},
         {"n_draws", post.n()},
         {"seed", seed}};
  j["expected_loss"] = std::vector<double>(expected.data(), expected.data() + expected.size());
  j["plugin_point"] = std::vector<double>(x_plugin.data(), x_plugin.data() + x_plugin.size());
  write_text_file(out_path(g, "decision.json"), j.dump(2) + "\n");
  if (!g.quiet)
    std::cout << "decide: bayes " << problem.actions[static_cast<std::size_t>(bayes)]
              << ", plug-in " << problem.actions[static_cast<std::size_t>(plugin)]
              << " -> " << out_path(g, "decision.json") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// roc: curve and AUC from a score,label CSV

int cmd_roc(const GlobalArgs& g, const std::string& scores_path) {
  const ObservationTable obs = read_observations_csv(scores_path);
  if (!obs.has_labels) throw ConfigError("roc: CSV needs a 'label' column");
  const Mat f = obs.features();
  if (f.cols() != 1)
    throw ConfigError("roc: expected exactly one score column, got " +
                      std::to_string(f.cols()));
  std::vector<double> scores(f.data(), f.data() + f.rows());
  const RocCurve rc = roc_curve(scores, obs.labels);

  std::string csv = "fpr,tpr\n";
  for (std::size_t i = 0; i < rc.fpr.size(); ++i)
    csv += format_double(rc.fpr[i]) + "," + format_double(rc.tpr[i]) + "\n";
  write_text_file(out_path(g, "roc.csv"), csv);
  std::cout << "AUC " << format_double(rc.auc) << "\n";
  if (!g.quiet)
    std::cout << "roc: " << rc.fpr.size() << " points -> " << out_path(g, "roc.csv")
              << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// experiment: preset scenarios with [experiment] overrides

ExperimentReport run_scenario(const std::string& name, Config& cfg,
                              std::uint64_t seed) {
  const auto num = [&](const char* key, double fb) {
    return cfg.number_or(std::string("experiment.") + key, fb);
  };
  const auto integer = [&](const char* key, long fb) {
    return cfg.integer_or(std::string("experiment.") + key, fb);
  };
  if (name == "gamma_poisson") {
    GammaPoissonConfig c;
    c.seed = seed;
    c.shape = num("shape", c.shape);
    c.scale = num("scale", c.scale);
    c.y = integer("y", c.y);
    c.degree = static_cast<int>(integer("degree", c.degree));
    if (cfg.has("experiment.n_train")) {
      c.n_train.clear();
      for (double v : cfg.numbers("experiment.n_train"))
        c.n_train.push_back(static_cast<std::size_t>(v));
    }
    c.n_eval = static_cast<std::size_t>(integer("n_eval", static_cast<long>(c.n_eval)));
    c.n_mc = static_cast<std::size_t>(integer("n_mc", static_cast<long>(c.n_mc)));
    return run_gamma_poisson(c);
  }
  if (name == "uniform_example") {
    UniformExampleConfig c;
    c.seed = seed;
    c.source_lo = num("source_lo", c.source_lo);
    c.source_hi = num("source_hi", c.source_hi);
    c.target_lo = num("target_lo", c.target_lo);
    c.target_hi = num("target_hi", c.target_hi);
    c.degree = static_cast<int>(integer("degree", c.degree));
    c.n_train = static_cast<std::size_t>(integer("n_train", static_cast<long>(c.n_train)));
    c.grid_points = static_cast<int>(integer("grid_points", c.grid_points));
    return run_uniform_example(c);
  }
  if (name == "sparse_threshold") {
    SparseThresholdConfig c;
    c.seed = seed;
    c.dim = static_cast<int>(integer("dim", c.dim));
    c.laplace_scale = num("laplace_scale", c.laplace_scale);
    c.noise_var = num("noise_var", c.noise_var);
    c.mass = num("mass", c.mass);
    c.trials = static_cast<int>(integer("trials", c.trials));
    c.degree = static_cast<int>(integer("degree", c.degree));
    c.n_train = static_cast<std::size_t>(integer("n_train", static_cast<long>(c.n_train)));
    c.n_eval = static_cast<std::size_t>(integer("n_eval", static_cast<long>(c.n_eval)));
    return run_sparse_threshold(c);
  }
  if (name == "logistic_sim") {
    LogisticSimConfig c;
    c.seed = seed;
    c.cluster_offset = num("cluster_offset", c.cluster_offset);
    c.class1_var = num("class1_var", c.class1_var);
    c.class0_var = num("class0_var", c.class0_var);
    c.n_train_per_class = static_cast<int>(integer("n_train_per_class", c.n_train_per_class));
    c.n_test_per_class = static_cast<int>(integer("n_test_per_class", c.n_test_per_class));
    c.seeds = static_cast<int>(integer("seeds", c.seeds));
    c.degree = static_cast<int>(integer("degree", c.degree));
    c.n_train = static_cast<std::size_t>(integer("n_train", static_cast<long>(c.n_train)));
    c.n_eval = static_cast<std::size_t>(integer("n_eval", static_cast<long>(c.n_eval)));
    return run_logistic_sim(c);
  }
  if (name == "spectral_staging") {
    SpectralStagingConfig c;
    c.seed = seed;
    c.windows = static_cast<int>(integer("windows", c.windows));
    c.sigma = num("sigma", c.sigma);
    c.rate = num("rate", c.rate);
    c.jitter_sd = num("jitter_sd", c.jitter_sd);
    c.degree = static_cast<int>(integer("degree", c.degree));
    c.n_train = static_cast<std::size_t>(integer("n_train", static_cast<long>(c.n_train)));
    c.n_eval = static_cast<std::size_t>(integer("n_eval", static_cast<long>(c.n_eval)));
    return run_spectral_staging(c);
  }
  throw ConfigError("unknown scenario '" + name + "'");
}

int cmd_experiment(const GlobalArgs& g, const std::string& scenario) {
  ExperimentReport rep;
  if (!g.config.empty()) {
    Config cfg = Config::parse_file(g.config);
    const std::uint64_t seed = pick_seed(g, cfg);
    rep = run_scenario(scenario, cfg, seed);
    cfg.require_all_consumed();
    write_resolved(g, cfg);
  } else {
    Config empty = Config::parse("");
    rep = run_scenario(scenario, empty, g.seed);
  }
  std::filesystem::create_directories(g.out_dir);
  rep.write(g.out_dir);
  if (!g.quiet) {
    std::cout << "experiment " << rep.scenario << ": " << rep.n_trials
              << " trials, " << rep.n_failed << " failed, "
              << format_double(rep.wall_time_s) << " s -> " << g.out_dir << "\n";
    for (const auto& [k, v] : rep.metrics)
      std::cout << "  " << k << " = " << format_double(v) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monotone polynomial transport maps for Bayesian inference"};
  app.require_subcommand(1);
  GlobalArgs g;
  app.add_option("--config", g.config, "TOML run configuration");
  auto* seed_opt = app.add_option("--seed", g.seed, "root RNG seed (overrides the config)");
  app.add_option("--threads", g.threads, "worker threads for trial loops");
  app.add_option("--out-dir", g.out_dir, "directory for artifacts (default .)");
  app.add_flag("--quiet", g.quiet, "suppress progress lines");

  auto* fit_cmd = app.add_subcommand("fit", "fit a transport map from a config");
  fit_cmd->fallthrough();

  std::string map_path, out_name = "samples.csv", scores_path, scenario;
  long n_sample = 1000, n_diag = 1000, n_decide = 2000;

  auto* sample_cmd = app.add_subcommand("sample", "push prior draws through a map");
  sample_cmd->fallthrough();
  sample_cmd->add_option("--map", map_path, "map file")->required();
  sample_cmd->add_option("-n,--n", n_sample, "number of draws");
  sample_cmd->add_option("--out", out_name, "output CSV name");

  auto* diag_cmd = app.add_subcommand("diagnose", "T-operator statistics of a map");
  diag_cmd->fallthrough();
  diag_cmd->add_option("--map", map_path, "map file")->required();
  diag_cmd->add_option("-n,--n", n_diag, "number of draws");

  auto* decide_cmd = app.add_subcommand("decide", "Bayes vs plug-in action");
  decide_cmd->fallthrough();
  decide_cmd->add_option("--map", map_path, "map file")->required();
  decide_cmd->add_option("-n,--n", n_decide, "number of posterior draws");

  auto* roc_cmd = app.add_subcommand("roc", "ROC curve from a score,label CSV");
  roc_cmd->fallthrough();
  roc_cmd->add_option("--scores", scores_path, "CSV with score and label columns")
      ->required();

  auto* exp_cmd = app.add_subcommand("experiment", "run a preset scenario");
  exp_cmd->fallthrough();
  exp_cmd->add_option("scenario", scenario, "scenario name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // normalize CLI11 parse-error codes to 1
  }
  g.seed_given = seed_opt->count() > 0;
  if (g.threads > 0) par::set_threads(g.threads);

  try {
    if (fit_cmd->parsed()) {
      if (g.config.empty()) throw ConfigError("fit: --config is required");
      return cmd_fit(g);
    }
    if (sample_cmd->parsed()) return cmd_sample(g, map_path, n_sample, out_name);
    if (diag_cmd->parsed()) {
      if (g.config.empty()) throw ConfigError("diagnose: --config is required");
      return cmd_diagnose(g, map_path, n_diag);
    }
    if (decide_cmd->parsed()) {
      if (g.config.empty()) throw ConfigError("decide: --config is required");
      return cmd_decide(g, map_path, n_decide);
    }
    if (roc_cmd->parsed()) return cmd_roc(g, scores_path);
    if (exp_cmd->parsed()) return cmd_experiment(g, scenario);
  } catch (const ChainStageError& e) {
    report_error(e);
    return 2;
  } catch (const InfeasibleRegion& e) {
    report_error(e);
    return 2;
  } catch (const TooFewFeasible& e) {
    report_error(e);
    return 2;
  } catch (const std::exception& e) {
    report_error(e);
    return 1;
  }
  return 0;
}
