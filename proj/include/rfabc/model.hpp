#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfabc/rng.hpp"

namespace rfabc {

/// A benchmark model: prior sampler and density, stochastic simulator and
/// summary-statistic extractor. simulate() returns the statistic vector, or
/// nullopt when the simulation failed (e.g. numerical blow-up); callers own
/// the retry policy. Every call is counted on sim_calls.
struct ModelSpec {
  std::string name;
  std::vector<std::string> param_names;
  std::vector<std::string> stat_names;

  std::function<std::vector<double>(Rng&)> sample_prior;
  std::function<double(std::span<const double>)> prior_log_density;
  std::function<std::optional<std::vector<double>>(std::span<const double>,
                                                   Rng&)>
      simulate_fn;

  std::shared_ptr<std::atomic<std::uint64_t>> sim_calls =
      std::make_shared<std::atomic<std::uint64_t>>(0);

  std::size_t n_params() const { return param_names.size(); }
  std::size_t n_stats() const { return stat_names.size(); }

  std::optional<std::vector<double>> simulate(std::span<const double> theta,
                                              Rng& rng) const {
    sim_calls->fetch_add(1, std::memory_order_relaxed);
    return simulate_fn(theta, rng);
  }

  bool in_prior_support(std::span<const double> theta) const {
    return std::isfinite(prior_log_density(theta));
  }
};

}  // namespace rfabc
