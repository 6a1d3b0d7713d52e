#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rfabc/config.hpp"
#include "rfabc/model.hpp"
#include "rfabc/models/birth_death.hpp"
#include "rfabc/models/coalescent.hpp"
#include "rfabc/models/hierarchical.hpp"
#include "rfabc/models/lotka_volterra.hpp"
#include "rfabc/models/michaelis_menten.hpp"
#include "rfabc/table.hpp"

namespace rfabc {

/// A registered model plus the analytic hooks the CLI can exploit when they
/// exist: exact posterior sampling (quantile-quantile plot data) and exact
/// log-likelihood (likelihood-based MCMC).
struct BuiltModel {
  ModelSpec model;
  std::function<Matrix(const Observation&, std::size_t, std::uint64_t)>
      oracle_sample;
  std::function<double(const Observation&, std::span<const double>)>
      oracle_log_likelihood;
};

namespace detail {

inline std::vector<double> prior_pair(const Config& cfg, const std::string& key,
                                      double lo, double hi) {
  const auto v = cfg.get_numbers(key, std::vector<double>{lo, hi});
  if (v.size() != 2 || !(v[0] < v[1]))
    throw ConfigError("'" + key + "' must be [low, high] with low < high");
  return v;
}

inline BuiltModel build_coalescent(const Config& cfg) {
  CoalescentSpec spec;
  spec.n_sequences = static_cast<int>(cfg.get_int("model.sequences", 1000));
  spec.sfs_cutoff = static_cast<int>(cfg.get_int("model.sfs_cutoff", 31));
  const std::string stats = cfg.get_string("model.stats", std::string("C"));
  if (stats == "C")
    spec.stats = CoalescentStats::kSegregatingSites;
  else if (stats == "C+SFS")
    spec.stats = CoalescentStats::kSitesAndSpectrum;
  else if (stats == "SFS")
    spec.stats = CoalescentStats::kSpectrumOnly;
  else
    throw ConfigError("model.stats must be C, C+SFS or SFS");
  const auto prior = prior_pair(cfg, "model.prior", 1.0, 20.0);
  spec.prior_low = prior[0];
  spec.prior_high = prior[1];

  BuiltModel out;
  out.model = make_coalescent_model(spec);
  // The Poisson likelihood depends on the data only through a total mutation
  // count and the matching harmonic sum.
  auto count_and_rate = [spec](const Observation& obs) {
    if (spec.stats == CoalescentStats::kSpectrumOnly) {
      double total = 0.0;
      for (double f : obs.values()) total += f;
      return std::pair<long, double>{std::lround(total),
                                     harmonic_number(spec.sfs_cutoff)};
    }
    return std::pair<long, double>{std::lround(obs.values()[0]),
                                   harmonic_number(spec.n_sequences - 1)};
  };
  out.oracle_sample = [spec, count_and_rate](const Observation& obs,
                                             std::size_t draws,
                                             std::uint64_t seed) {
    const auto [c, h] = count_and_rate(obs);
    const GridDensity post = coalescent_posterior_from_count(
        c, h, spec.prior_low, spec.prior_high, 4001);
    Rng rng(seed);
    Matrix m(draws, 1);
    for (std::size_t i = 0; i < draws; ++i)
      m(i, 0) = post.quantile(rng.uniform());
    return m;
  };
  out.oracle_log_likelihood = [count_and_rate](const Observation& obs,
                                               std::span<const double> theta) {
    const auto [c, h] = count_and_rate(obs);
    const double mean = theta[0] * h;
    if (!(mean > 0.0)) return -std::numeric_limits<double>::infinity();
    return double(c) * std::log(mean) - mean - std::lgamma(double(c) + 1);
  };
  return out;
}

inline BuiltModel build_hierarchical(const Config& cfg) {
  HierarchicalSpec spec;
  spec.alpha = cfg.get_number("model.alpha", 4.0);
  spec.beta = cfg.get_number("model.beta", 5.0);
  spec.n_obs = static_cast<int>(cfg.get_int("model.observations", 10));

  BuiltModel out;
  out.model = make_hierarchical_model(spec);
  out.oracle_sample = [spec](const Observation& obs, std::size_t draws,
                             std::uint64_t seed) {
    // s1 is the data mean and s2 the unbiased sample variance, which is all
    // the conjugate posterior needs.
    const double n = double(spec.n_obs);
    const double ybar = obs.values()[0];
    const double ss = (n - 1.0) * obs.values()[1];
    const double big_b = 0.5 * (ss + 2.0 * spec.beta + n * ybar * ybar / (n + 1.0));
    return hierarchical_posterior_sample_from_moments(n, ybar, big_b,
                                                      spec.alpha, draws, seed);
  };
  return out;
}

inline BuiltModel build_lotka_volterra(const Config& cfg) {
  LotkaVolterraSpec spec;
  if (cfg.has("model.times")) spec.times = cfg.get_numbers("model.times");
  spec.noise_sd = cfg.get_number("model.noise_sd", 0.5);
  spec.step = cfg.get_number("model.step", 0.01);
  const auto prior = prior_pair(cfg, "model.prior", -10.0, 10.0);
  spec.prior_low = prior[0];
  spec.prior_high = prior[1];

  BuiltModel out;
  out.model = make_lotka_volterra_model(spec);
  return out;
}

inline BuiltModel build_birth_death(const Config& cfg) {
  BirthDeathSpec spec;
  spec.initial = cfg.get_int("model.initial", 10);
  if (cfg.has("model.times")) spec.times = cfg.get_numbers("model.times");
  spec.max_population = cfg.get_int("model.max_population", 10000);
  const auto prior = prior_pair(cfg, "model.prior", 0.0, 20.0);
  spec.prior_low = prior[0];
  spec.prior_high = prior[1];

  BuiltModel out;
  out.model = make_birth_death_model(spec);
  out.oracle_log_likelihood = [spec](const Observation& obs,
                                     std::span<const double> theta) {
    return bd_loglikelihood(spec, obs.values(), theta[0], theta[1]);
  };
  return out;
}

inline BuiltModel build_michaelis_menten(const Config& cfg) {
  MichaelisMentenSpec spec;
  if (cfg.has("model.times")) spec.times = cfg.get_numbers("model.times");
  auto set_prior = [&](const std::string& key, double& lo, double& hi) {
    const auto v = prior_pair(cfg, key, lo, hi);
    lo = v[0];
    hi = v[1];
  };
  set_prior("model.prior_c1", spec.c1_low, spec.c1_high);
  set_prior("model.prior_c2", spec.c2_low, spec.c2_high);
  set_prior("model.prior_c3", spec.c3_low, spec.c3_high);

  BuiltModel out;
  out.model = make_michaelis_menten_model(spec);
  return out;
}

}  // namespace detail

inline std::vector<std::string> registered_models() {
  return {"coalescent", "hierarchical-normal", "lotka-volterra", "birth-death",
          "michaelis-menten"};
}

inline BuiltModel build_model(const std::string& name, const Config& cfg) {
  if (name == "coalescent") return detail::build_coalescent(cfg);
  if (name == "hierarchical-normal" || name == "hierarchical")
    return detail::build_hierarchical(cfg);
  if (name == "lotka-volterra") return detail::build_lotka_volterra(cfg);
  if (name == "birth-death") return detail::build_birth_death(cfg);
  if (name == "michaelis-menten") return detail::build_michaelis_menten(cfg);
  throw ConfigError("unknown model '" + name + "'");
}

}  // namespace rfabc
