#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfabc/baselines.hpp"
#include "rfabc/config.hpp"
#include "rfabc/numeric.hpp"
#include "rfabc/registry.hpp"
#include "rfabc/smc.hpp"
#include "rfabc/table.hpp"
#include "rfabc/thread.hpp"

namespace rfabc {

struct QqPair {
  double level;
  double posterior;
  double oracle;
};

/// Paired quantiles (levels 0.01..0.99) of a weighted posterior marginal
/// against an oracle sample.
inline std::vector<QqPair> qq_data(const WeightedParticles& posterior,
                                   std::span<const double> oracle_sample,
                                   std::size_t coord) {
  if (oracle_sample.empty())
    throw std::invalid_argument("qq_data: empty oracle sample");
  const SortedWeighted post(posterior.params().col(coord), posterior.weights());
  const std::vector<double> ones(oracle_sample.size(), 1.0);
  const SortedWeighted oracle(oracle_sample, ones);
  std::vector<QqPair> out;
  out.reserve(99);
  for (int i = 1; i <= 99; ++i) {
    const double q = double(i) / 100.0;
    out.push_back({q, post.quantile(q), oracle.quantile(q)});
  }
  return out;
}

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
};

namespace detail {

inline void save_observation(const std::string& path,
                             const std::vector<std::string>& stat_names,
                             std::span<const double> values) {
  std::ofstream out(path);
  if (!out) throw TableIoError("cannot open for write: " + path);
  for (std::size_t c = 0; c < stat_names.size(); ++c)
    out << (c ? "," : "") << "stat:" << stat_names[c];
  out << "\n";
  for (std::size_t c = 0; c < values.size(); ++c)
    out << (c ? "," : "") << format_real(values[c]);
  out << "\n";
}

inline Observation load_observation(const std::string& path,
                                    const std::vector<std::string>& stat_names) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open observed-data file: " + path);
  std::string header, row;
  if (!std::getline(in, header) || !std::getline(in, row))
    throw ConfigError("observed-data file needs a header and one row: " + path);
  const auto labels = split_csv(header);
  if (labels.size() != stat_names.size())
    throw ConfigError("observed-data file has " + std::to_string(labels.size()) +
                      " columns, model expects " +
                      std::to_string(stat_names.size()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != "stat:" + stat_names[i])
      throw ConfigError("observed-data column '" + labels[i] +
                        "' does not match statistic '" + stat_names[i] + "'");
  const auto cells = split_csv(row);
  if (cells.size() != stat_names.size())
    throw ConfigError("observed-data row width mismatch: " + path);
  std::vector<double> values;
  values.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i)
    values.push_back(parse_real(cells[i], 2));
  return Observation(std::move(values));
}

inline void save_particles_csv(const std::string& path,
                               const std::vector<std::string>& param_names,
                               const Matrix& params,
                               const std::vector<std::vector<double>>& weight_cols,
                               const std::vector<std::string>& weight_names) {
  std::ofstream out(path);
  if (!out) throw TableIoError("cannot open for write: " + path);
  for (std::size_t c = 0; c < param_names.size(); ++c)
    out << (c ? "," : "") << "param:" << param_names[c];
  for (const auto& name : weight_names) out << "," << name;
  out << "\n";
  for (std::size_t r = 0; r < params.rows(); ++r) {
    for (std::size_t c = 0; c < params.cols(); ++c)
      out << (c ? "," : "") << format_real(params(r, c));
    for (const auto& w : weight_cols) out << "," << format_real(w[r]);
    out << "\n";
  }
}

inline void save_density_csv(const std::string& path,
                             std::span<const double> values,
                             std::span<const double> weights, int bins) {
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double width = (hi - lo) / bins;
  std::vector<double> mass(static_cast<std::size_t>(bins), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto b = static_cast<long>((values[i] - lo) / width);
    b = std::clamp<long>(b, 0, bins - 1);
    mass[static_cast<std::size_t>(b)] += weights[i];
  }
  std::ofstream out(path);
  if (!out) throw TableIoError("cannot open for write: " + path);
  out << "bin_low,bin_high,density\n";
  for (int b = 0; b < bins; ++b)
    out << format_real(lo + b * width) << "," << format_real(lo + (b + 1) * width)
        << "," << format_real(mass[static_cast<std::size_t>(b)] / width) << "\n";
}

inline void save_qq_csv(const std::string& path,
                        const std::vector<QqPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw TableIoError("cannot open for write: " + path);
  out << "level,posterior,oracle\n";
  for (const auto& p : pairs)
    out << format_real(p.level) << "," << format_real(p.posterior) << ","
        << format_real(p.oracle) << "\n";
}

// Weights and kernels are configured per coordinate; a single value
// broadcasts across coordinates.
inline std::vector<double> per_coordinate(std::vector<double> v,
                                          std::size_t dim, const char* what) {
  if (v.size() == 1) v.assign(dim, v[0]);
  if (v.size() != dim)
    throw ConfigError(std::string(what) + ": expected 1 or " +
                      std::to_string(dim) + " values");
  return v;
}

inline PerturbationKernel kernel_from_config(const Config& cfg,
                                             const std::string& section,
                                             std::size_t dim) {
  const std::string kind =
      cfg.get_string(section + ".kernel", std::string("uniform"));
  auto widths = per_coordinate(
      cfg.get_numbers(section + ".kernel_width"), dim,
      (section + ".kernel_width").c_str());
  if (kind == "uniform") return uniform_kernel(std::move(widths));
  if (kind == "gaussian") return gaussian_kernel(std::move(widths));
  throw ConfigError(section + ".kernel must be uniform or gaussian");
}

inline RfConfig rf_config_from(const Config& cfg, std::uint64_t seed) {
  RfConfig rf;
  rf.n_trees = static_cast<int>(cfg.get_int("forest.trees", 500));
  rf.min_node = static_cast<int>(cfg.get_int("forest.min_node", 5));
  rf.n_try = static_cast<int>(cfg.get_int("forest.n_try", 0));
  rf.seed = seed;
  return rf;
}

inline DrfConfig drf_config_from(const Config& cfg, std::uint64_t seed) {
  DrfConfig drf;
  drf.n_trees = static_cast<int>(cfg.get_int("forest.trees", 500));
  drf.min_node = static_cast<int>(cfg.get_int("forest.min_node", 5));
  drf.n_try_rate = cfg.get_number("forest.n_try_rate", 0.0);
  drf.n_sample = static_cast<std::size_t>(cfg.get_int("forest.subsample", 0));
  drf.honesty_fraction = cfg.get_number("forest.honesty_fraction", 0.5);
  const std::string rule =
      cfg.get_string("forest.split_rule", std::string("cart"));
  if (rule == "cart")
    drf.split_rule = SplitRule::kCart;
  else if (rule == "mmd")
    drf.split_rule = SplitRule::kMmd;
  else
    throw ConfigError("forest.split_rule must be cart or mmd");
  drf.fourier_count = static_cast<int>(cfg.get_int("forest.fourier_features", 50));
  drf.seed = seed;
  return drf;
}

inline SmcSchedule smc_schedule_from(const Config& cfg, std::size_t dim,
                                     std::uint64_t seed, bool joint) {
  SmcSchedule s;
  s.iterations = static_cast<int>(cfg.get_int("smc.iterations"));
  const auto counts = cfg.get_numbers("smc.particles");
  for (double c : counts)
    s.particle_counts.push_back(static_cast<std::size_t>(c));
  // kernel_width broadcasts across iterations unless kernel_width_t<t>
  // overrides are present for every t in 2..T.
  bool per_iteration = false;
  for (int t = 2; t <= s.iterations; ++t)
    per_iteration |= cfg.has("smc.kernel_width_t" + std::to_string(t));
  if (per_iteration) {
    const std::string kind =
        cfg.get_string("smc.kernel", std::string("uniform"));
    for (int t = 2; t <= s.iterations; ++t) {
      auto widths = per_coordinate(
          cfg.get_numbers("smc.kernel_width_t" + std::to_string(t)), dim,
          "smc.kernel_width_t");
      s.kernels.push_back(kind == "gaussian"
                              ? gaussian_kernel(std::move(widths))
                              : uniform_kernel(std::move(widths)));
    }
  } else if (s.iterations > 1) {
    s.kernels.push_back(kernel_from_config(cfg, "smc", dim));
  }
  s.proposal_retry_cap = static_cast<int>(cfg.get_int("smc.retry_cap", 10000));
  if (cfg.has("smc.convergence_threshold")) {
    const double thr = cfg.get_number("smc.convergence_threshold");
    if (thr > 0.0) s.convergence_threshold = thr;
  }
  s.seed = seed;
  if (joint)
    s.drf_configs.push_back(drf_config_from(cfg, 0));
  else
    s.rf_configs.push_back(rf_config_from(cfg, 0));
  return s;
}

struct MethodOutput {
  Matrix params;
  std::vector<std::vector<double>> weight_cols;
  std::vector<std::string> weight_names;
  std::vector<std::pair<std::string, std::vector<double>>> importance;
  std::optional<SmcTrace> trace;
  nlohmann::json extra;
};

}  // namespace detail

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> methods = {
      "rejection", "mcmc",       "abc-mcmc",   "abc-smc",
      "abc-rf",    "abc-drf",    "abc-smc-rf", "abc-smc-drf"};
  return methods;
}

namespace detail {

inline MethodOutput run_method(const std::string& method, const Config& cfg,
                               const BuiltModel& built, const Observation& obs,
                               std::uint64_t seed) {
  const ModelSpec& model = built.model;
  const std::size_t dim = model.n_params();
  MethodOutput out;

  if (method == "rejection") {
    const auto n = static_cast<std::size_t>(cfg.get_int("rejection.simulations", 10000));
    DistanceSpec d = cfg.has("rejection.distance_weights")
                         ? weighted_euclidean_distance(per_coordinate(
                               cfg.get_numbers("rejection.distance_weights"),
                               model.n_stats(), "rejection.distance_weights"))
                         : euclidean_distance();
    KeepRule keep = cfg.has("rejection.epsilon")
                        ? KeepRule::below(cfg.get_number("rejection.epsilon"))
                        : KeepRule::closest(static_cast<std::size_t>(
                              cfg.get_int("rejection.keep", 500)));
    auto res = abc_rejection(model, n, d, keep, obs, seed);
    out.params = res.particles.params();
    out.weight_cols = {res.particles.weights()};
    out.weight_names = {"weight"};
    out.extra["kept"] = res.particles.n();
    return out;
  }

  if (method == "mcmc") {
    if (!built.oracle_log_likelihood)
      throw ConfigError("method mcmc needs an exact likelihood; model '" +
                        model.name + "' has none");
    McmcOptions opts;
    opts.n_steps = static_cast<std::size_t>(cfg.get_int("mcmc.steps", 100000));
    opts.burn_in = static_cast<std::size_t>(cfg.get_int("mcmc.burn_in", 2500));
    opts.thin = static_cast<std::size_t>(cfg.get_int("mcmc.thin", 50));
    opts.seed = seed;
    const auto widths = per_coordinate(cfg.get_numbers("mcmc.proposal_width"),
                                       dim, "mcmc.proposal_width");
    auto ll = [&](std::span<const double> th) {
      return built.oracle_log_likelihood(obs, th);
    };
    auto res = metropolis_hastings(ll, model.prior_log_density,
                                   model.sample_prior,
                                   uniform_walk_proposal(widths), opts);
    out.params = res.chain;
    out.weight_cols = {
        std::vector<double>(res.chain.rows(), 1.0 / double(res.chain.rows()))};
    out.weight_names = {"weight"};
    out.extra["acceptance_rate"] = res.acceptance_rate();
    out.extra["kept"] = res.chain.rows();
    return out;
  }

  if (method == "abc-mcmc") {
    const auto steps = static_cast<std::size_t>(cfg.get_int("abc_mcmc.steps", 20000));
    const double eps = cfg.get_number("abc_mcmc.epsilon");
    const auto widths = per_coordinate(
        cfg.get_numbers("abc_mcmc.proposal_width"), dim,
        "abc_mcmc.proposal_width");
    const auto burn = static_cast<std::size_t>(cfg.get_int("abc_mcmc.burn_in", 0));
    const auto thin = static_cast<std::size_t>(cfg.get_int("abc_mcmc.thin", 1));
    auto res = abc_mcmc(model, uniform_walk_proposal(widths),
                        euclidean_distance(), eps, steps, obs, seed);
    std::vector<std::vector<double>> kept;
    for (std::size_t r = burn; r < res.chain.rows(); r += thin) {
      const auto row = res.chain.row(r);
      kept.emplace_back(row.begin(), row.end());
    }
    if (kept.empty()) throw std::runtime_error("abc-mcmc: empty chain after burn-in");
    out.params = Matrix::from_rows(kept);
    out.weight_cols = {
        std::vector<double>(out.params.rows(), 1.0 / double(out.params.rows()))};
    out.weight_names = {"weight"};
    out.extra["acceptance_rate"] =
        res.proposed ? double(res.accepted) / double(res.proposed) : 0.0;
    return out;
  }

  if (method == "abc-smc") {
    const auto n = static_cast<std::size_t>(cfg.get_int("abc_smc.particles", 1000));
    const auto eps = cfg.get_numbers("abc_smc.epsilons");
    const auto budget = static_cast<std::uint64_t>(
        cfg.get_int("abc_smc.budget", 10000000));
    std::vector<PerturbationKernel> kernels;
    if (eps.size() > 1) kernels.push_back(kernel_from_config(cfg, "abc_smc", dim));
    auto res = abc_smc(model, kernels, euclidean_distance(), eps, n, obs, seed,
                       budget);
    out.params = res.particles.params();
    out.weight_cols = {res.particles.weights()};
    out.weight_names = {"weight"};
    out.extra["sims_per_level"] = res.sims_per_level;
    out.extra["total_simulations"] = res.total_sim_calls;
    return out;
  }

  if (method == "abc-rf" || method == "abc-drf") {
    const auto n = static_cast<std::size_t>(cfg.get_int("forest.simulations", 10000));
    BuildStats stats;
    const ReferenceTable table = build_reference_table(
        model, model.sample_prior, n, substream(seed, 0), &stats);
    out.params = table.params();
    if (method == "abc-rf") {
      for (std::size_t j = 0; j < dim; ++j) {
        const Forest f = grow_forest(table, j, rf_config_from(cfg, substream(seed, 1 + j)));
        out.weight_cols.push_back(forest_weight_vector(f, obs));
        out.weight_names.push_back("weight:" + model.param_names[j]);
        out.importance.emplace_back(model.param_names[j], variable_importance(f));
      }
    } else {
      const Forest f = grow_drf(table, drf_config_from(cfg, substream(seed, 1)));
      out.weight_cols.push_back(forest_weight_vector(f, obs));
      out.weight_names.push_back("weight");
      out.importance.emplace_back("joint", variable_importance(f));
    }
    out.extra["table_simulations"] = stats.sim_calls;
    return out;
  }

  if (method == "abc-smc-rf" || method == "abc-smc-drf") {
    const bool joint = method == "abc-smc-drf";
    const SmcSchedule schedule = smc_schedule_from(cfg, dim, seed, joint);
    SmcTrace trace = joint ? run_abc_smc_drf(model, schedule, obs)
                           : run_abc_smc_rf(model, schedule, obs);
    const SmcIteration& last = trace.final_iteration();
    out.params = last.params;
    if (joint) {
      out.weight_cols = {last.weights[0]};
      out.weight_names = {"weight"};
      out.importance.emplace_back("joint", last.importance);
    } else {
      for (std::size_t j = 0; j < dim; ++j) {
        out.weight_cols.push_back(last.weights[j]);
        out.weight_names.push_back("weight:" + model.param_names[j]);
      }
    }
    out.extra["iterations_run"] = trace.iterations.size();
    out.extra["truncated"] = trace.truncated;
    out.extra["total_simulations"] = trace.total_sim_calls;
    out.extra["proposal_retries"] = trace.total_retries;
    out.trace = std::move(trace);
    return out;
  }

  throw ConfigError("unknown method '" + method + "'");
}

}  // namespace detail

/// Executes the experiment described by a config file and writes posterior,
/// trace, importance, plot-data and manifest artifacts into the output
/// directory. Throws ConfigError for configuration problems (exit code 2)
/// and other exceptions for runtime failures (exit code 3).
inline std::filesystem::path run_experiment(const std::string& config_path,
                                            const CliOverrides& overrides = {}) {
  namespace fs = std::filesystem;
  const auto wall_start = std::chrono::steady_clock::now();
  const Config cfg = Config::parse_file(config_path);

  const std::string method = cfg.get_string("method");
  bool method_known = false;
  for (const auto& m : known_methods()) method_known |= (m == method);
  if (!method_known) throw ConfigError("unknown method '" + method + "'");

  const std::string model_name = cfg.get_string("model.name");
  BuiltModel built = build_model(model_name, cfg);
  ModelSpec& model = built.model;

  const std::uint64_t seed =
      overrides.seed ? *overrides.seed
                     : static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  const int threads =
      overrides.threads ? *overrides.threads
                        : static_cast<int>(cfg.get_int("threads", 0));
  set_max_threads(threads);

  // Resolve the observation before touching the filesystem.
  nlohmann::json obs_info;
  std::optional<Observation> obs;
  if (cfg.has("observed.file")) {
    const std::string path = cfg.get_string("observed.file");
    obs = detail::load_observation(path, model.stat_names);
    obs_info["file"] = path;
  } else if (cfg.get_bool("observed.generate", false)) {
    const auto truth = cfg.get_numbers("observed.params");
    if (truth.size() != model.n_params())
      throw ConfigError("observed.params must have one value per parameter");
    const auto obs_seed = static_cast<std::uint64_t>(
        cfg.get_int("observed.seed", static_cast<long>(seed) + 1));
    Rng rng(substream(obs_seed, 0x0b5));
    auto s = model.simulate(truth, rng);
    if (!s) throw std::runtime_error("observed-data generation failed to simulate");
    obs = Observation(std::move(*s));
    obs_info["generated_from"] = truth;
    obs_info["seed"] = obs_seed;
  } else {
    throw ConfigError("[observed] needs either file = \"...\" or generate = true");
  }

  const fs::path out_dir =
      overrides.out
          ? fs::path(*overrides.out)
          : fs::path(cfg.get_string(
                "out", fs::path(config_path).stem().string() + "_out"));
  fs::create_directories(out_dir);

  nlohmann::json manifest;
  manifest["schema"] = 1;
  manifest["config"] = config_path;
  manifest["method"] = method;
  manifest["model"] = model_name;
  manifest["seed"] = seed;
  manifest["threads"] = max_threads();
  manifest["observed"] = obs_info;

  model.sim_calls->store(0);
  try {
    detail::MethodOutput result =
        detail::run_method(method, cfg, built, *obs, seed);

    detail::save_observation((out_dir / "observed.csv").string(),
                             model.stat_names, obs->values());
    detail::save_particles_csv((out_dir / "posterior.csv").string(),
                               model.param_names, result.params,
                               result.weight_cols, result.weight_names);
    std::vector<std::string> outputs{"observed.csv", "posterior.csv"};

    if (result.trace) {
      for (std::size_t t = 0; t < result.trace->iterations.size(); ++t) {
        const SmcIteration& it = result.trace->iterations[t];
        std::vector<std::string> names;
        if (it.joint()) {
          names = {"weight"};
        } else {
          for (const auto& p : model.param_names) names.push_back("weight:" + p);
        }
        const std::string file = "trace_iter" + std::to_string(t + 1) + ".csv";
        detail::save_particles_csv((out_dir / file).string(), model.param_names,
                                   it.params, it.weights, names);
        outputs.push_back(file);
      }
      nlohmann::json iters = nlohmann::json::array();
      for (const auto& it : result.trace->iterations) {
        nlohmann::json j;
        j["particles"] = it.params.rows();
        j["sim_calls"] = it.diag.sim_calls;
        j["sim_failures"] = it.diag.sim_failures;
        j["proposal_retries"] = it.diag.proposal_retries;
        j["mean"] = it.diag.mean;
        j["variance"] = it.diag.variance;
        j["ess"] = it.diag.ess;
        j["wall_ms"] = it.diag.wall_ms;
        if (std::isfinite(it.diag.convergence))
          j["convergence"] = it.diag.convergence;
        iters.push_back(j);
      }
      manifest["iterations"] = iters;
    }

    if (!result.importance.empty()) {
      std::ofstream imp(out_dir / "importance.csv");
      imp << "target,stat,score\n";
      for (const auto& [target, scores] : result.importance)
        for (std::size_t k = 0; k < scores.size(); ++k)
          imp << target << "," << model.stat_names[k] << ","
              << detail::format_real(scores[k]) << "\n";
      outputs.push_back("importance.csv");
    }

    const int bins = static_cast<int>(cfg.get_int("output.density_bins", 50));
    for (std::size_t j = 0; j < model.n_params(); ++j) {
      const auto& w = result.weight_cols.size() == 1
                          ? result.weight_cols[0]
                          : result.weight_cols[j];
      const std::string file = "density_" + model.param_names[j] + ".csv";
      detail::save_density_csv((out_dir / file).string(), result.params.col(j),
                               w, bins);
      outputs.push_back(file);
    }

    if (built.oracle_sample && cfg.get_bool("output.qq", true)) {
      const auto draws = static_cast<std::size_t>(
          cfg.get_int("output.oracle_draws", 20000));
      const Matrix oracle = built.oracle_sample(*obs, draws, substream(seed, 0x42));
      for (std::size_t j = 0; j < model.n_params(); ++j) {
        const auto& w = result.weight_cols.size() == 1
                            ? result.weight_cols[0]
                            : result.weight_cols[j];
        const WeightedParticles post =
            WeightedParticles::normalized(result.params, std::vector<double>(w));
        const std::string file = "qq_" + model.param_names[j] + ".csv";
        detail::save_qq_csv((out_dir / file).string(),
                            qq_data(post, oracle.col(j), j));
        outputs.push_back(file);
      }
    }

    manifest["simulator_calls"] = model.sim_calls->load();
    manifest["outputs"] = outputs;
    manifest["result"] = result.extra;
    manifest["status"] = "ok";
    manifest["wall_ms"] = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - wall_start)
                              .count();
    std::ofstream mf(out_dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
    return out_dir;
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    manifest["simulator_calls"] = model.sim_calls->load();
    std::ofstream mf(out_dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
    throw;
  }
}

/// CLI wrapper mapping exceptions onto exit codes: 0 success, 2 config
/// error, 3 runtime failure.
inline int run_experiment_cli(const std::string& config_path,
                              const CliOverrides& overrides = {}) {
  try {
    const auto dir = run_experiment(config_path, overrides);
    std::cout << "artifacts written to " << dir.string() << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace rfabc
