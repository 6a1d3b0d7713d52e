// rfabc command line: batch experiment runner plus one-shot simulation and
// analytic-oracle helpers for the bundled benchmark models.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rfabc/experiment.hpp"
#include "rfabc/registry.hpp"

namespace {

rfabc::Config model_defaults(const std::string& name) {
  return rfabc::Config::parse_string("[model]\nname = \"" + name + "\"\n",
                                     "<defaults>");
}

int cmd_simulate(const std::string& model_name,
                 const std::vector<double>& params, std::uint64_t seed,
                 const std::string& out_path) {
  try {
    rfabc::BuiltModel built =
        rfabc::build_model(model_name, model_defaults(model_name));
    if (params.size() != built.model.n_params()) {
      std::cerr << "model '" << model_name << "' expects "
                << built.model.n_params() << " parameters\n";
      return 2;
    }
    rfabc::Rng rng(seed);
    const auto stats = built.model.simulate(params, rng);
    if (!stats) {
      std::cerr << "simulation failed (non-finite state)\n";
      return 3;
    }
    if (out_path.empty()) {
      for (std::size_t i = 0; i < stats->size(); ++i)
        std::cout << (i ? "," : "") << "stat:" << built.model.stat_names[i];
      std::cout << "\n";
      for (std::size_t i = 0; i < stats->size(); ++i)
        std::cout << (i ? "," : "")
                  << rfabc::detail::format_real((*stats)[i]);
      std::cout << "\n";
    } else {
      rfabc::detail::save_observation(out_path, built.model.stat_names, *stats);
      std::cout << "wrote " << out_path << "\n";
    }
    return 0;
  } catch (const rfabc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 3;
  }
}

int cmd_oracle_coalescent(long count, int sequences, double lo, double hi) {
  const auto post =
      rfabc::coalescent_exact_posterior(count, sequences, lo, hi);
  std::cout << "mean," << post.mean() << "\nvariance," << post.variance()
            << "\nmedian," << post.quantile(0.5) << "\n";
  return 0;
}

int cmd_oracle_hierarchical(double ybar, double variance, int n, double alpha,
                            double beta, std::size_t draws, std::uint64_t seed,
                            const std::string& out_path) {
  const double ss = (n - 1) * variance;
  const double big_b =
      0.5 * (ss + 2.0 * beta + double(n) * ybar * ybar / double(n + 1));
  const rfabc::Matrix sample =
      rfabc::hierarchical_posterior_sample_from_moments(double(n), ybar, big_b,
                                                        alpha, draws, seed);
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    os = &file;
  }
  *os << "param:theta1,param:theta2\n";
  for (std::size_t i = 0; i < sample.rows(); ++i)
    *os << rfabc::detail::format_real(sample(i, 0)) << ","
        << rfabc::detail::format_real(sample(i, 1)) << "\n";
  return 0;
}

int cmd_oracle_birth_death(double lambda, double mu, const std::string& data,
                           long initial) {
  rfabc::BirthDeathSpec spec;
  spec.initial = initial;
  rfabc::BuiltModel built =
      rfabc::build_model("birth-death", model_defaults("birth-death"));
  const rfabc::Observation obs =
      rfabc::detail::load_observation(data, built.model.stat_names);
  spec.times = rfabc::BirthDeathSpec::default_times();
  std::cout << "loglikelihood,"
            << rfabc::bd_loglikelihood(spec, obs.values(), lambda, mu) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"random-forest ABC engine"};
  app.require_subcommand(1);

  // run <config>
  auto* run = app.add_subcommand("run", "execute an experiment config");
  std::string config_path;
  run->add_option("config", config_path, "experiment config file")->required();
  std::optional<std::uint64_t> seed_override;
  std::optional<int> threads_override;
  std::optional<std::string> out_override;
  run->add_option("--seed", seed_override, "override the config seed");
  run->add_option("--threads", threads_override, "cap worker threads");
  run->add_option("--out", out_override, "override the output directory");

  // simulate <model> <params...>
  auto* sim = app.add_subcommand("simulate", "one simulation of a model");
  std::string sim_model;
  std::vector<double> sim_params;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  sim->add_option("model", sim_model, "model name")->required();
  sim->add_option("params", sim_params, "parameter values")->required();
  sim->add_option("--seed", sim_seed, "simulation seed");
  sim->add_option("--out", sim_out, "write statistics CSV here");

  // oracle <model> ...
  auto* oracle = app.add_subcommand(
      "oracle", "evaluate exact posteriors/likelihoods where defined");
  std::string oracle_model;
  oracle->add_option("model", oracle_model, "model name")->required();
  long oc_count = 0;
  int oc_sequences = 1000;
  std::vector<double> oc_prior{1.0, 20.0};
  oracle->add_option("--count", oc_count, "coalescent: observed mutation count");
  oracle->add_option("--sequences", oc_sequences, "coalescent: sample size");
  oracle->add_option("--prior", oc_prior, "coalescent: uniform prior bounds")
      ->expected(2);
  double oh_mean = 0.0, oh_variance = 1.0, oh_alpha = 4.0, oh_beta = 5.0;
  int oh_n = 10;
  std::size_t oh_draws = 10000;
  std::uint64_t oracle_seed = 0;
  std::string oracle_out;
  oracle->add_option("--mean", oh_mean, "hierarchical: observed data mean");
  oracle->add_option("--variance", oh_variance,
                     "hierarchical: observed sample variance");
  oracle->add_option("--observations", oh_n, "hierarchical: data size n");
  oracle->add_option("--alpha", oh_alpha, "hierarchical: prior shape");
  oracle->add_option("--beta", oh_beta, "hierarchical: prior rate");
  oracle->add_option("--draws", oh_draws, "hierarchical: posterior draws");
  oracle->add_option("--seed", oracle_seed, "oracle sampling seed");
  oracle->add_option("--out", oracle_out, "write oracle output here");
  double ob_lambda = 1.0, ob_mu = 0.5;
  long ob_initial = 10;
  std::string ob_data;
  oracle->add_option("--lambda", ob_lambda, "birth-death: birth rate");
  oracle->add_option("--mu", ob_mu, "birth-death: death rate");
  oracle->add_option("--initial", ob_initial, "birth-death: Z(0)");
  oracle->add_option("--data", ob_data, "birth-death: observed-data CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed())
    return rfabc::run_experiment_cli(
        config_path, {seed_override, threads_override, out_override});
  if (sim->parsed()) return cmd_simulate(sim_model, sim_params, sim_seed, sim_out);
  if (oracle->parsed()) {
    try {
      if (oracle_model == "coalescent")
        return cmd_oracle_coalescent(oc_count, oc_sequences, oc_prior[0],
                                     oc_prior[1]);
      if (oracle_model == "hierarchical-normal" ||
          oracle_model == "hierarchical")
        return cmd_oracle_hierarchical(oh_mean, oh_variance, oh_n, oh_alpha,
                                       oh_beta, oh_draws, oracle_seed,
                                       oracle_out);
      if (oracle_model == "birth-death") {
        if (ob_data.empty()) {
          std::cerr << "birth-death oracle needs --data\n";
          return 2;
        }
        return cmd_oracle_birth_death(ob_lambda, ob_mu, ob_data, ob_initial);
      }
      std::cerr << "no oracle registered for model '" << oracle_model << "'\n";
      return 2;
    } catch (const rfabc::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "runtime failure: " << e.what() << "\n";
      return 3;
    }
  }
  return 2;
}
