#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rfabc/model.hpp"
#include "rfabc/smc.hpp"
#include "rfabc/table.hpp"

namespace rfabc {

/// Metric on statistic vectors, optionally weighted per statistic.
struct DistanceSpec {
  std::function<double(std::span<const double>, std::span<const double>)> metric;

  double operator()(std::span<const double> a, std::span<const double> b) const {
    return metric(a, b);
  }
};

inline DistanceSpec euclidean_distance() {
  DistanceSpec d;
  d.metric = [](std::span<const double> a, std::span<const double> b) {
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = a[i] - b[i];
      ss += diff * diff;
    }
    return std::sqrt(ss);
  };
  return d;
}

inline DistanceSpec weighted_euclidean_distance(std::vector<double> weights) {
  for (double w : weights)
    if (!(w >= 0.0))
      throw std::invalid_argument("weighted_euclidean_distance: weights >= 0");
  DistanceSpec d;
  d.metric = [weights](std::span<const double> a, std::span<const double> b) {
    if (a.size() != weights.size())
      throw std::invalid_argument("distance: weight dimension mismatch");
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = a[i] - b[i];
      ss += weights[i] * diff * diff;
    }
    return std::sqrt(ss);
  };
  return d;
}

/// Markov proposal for MCMC-type samplers.
struct MarkovProposal {
  std::function<std::vector<double>(std::span<const double>, Rng&)> sample;
  std::function<double(std::span<const double> x, std::span<const double> center)>
      log_density;
};

inline MarkovProposal uniform_walk_proposal(std::vector<double> half_widths) {
  const PerturbationKernel k = uniform_kernel(std::move(half_widths));
  return {k.sample, k.log_density};
}

/// Keep rule for rejection sampling: the k closest simulations, or every
/// simulation with distance strictly below epsilon.
struct KeepRule {
  enum class Mode { kTopK, kEpsilon } mode = Mode::kTopK;
  std::size_t top_k = 0;
  double epsilon = 0.0;

  static KeepRule closest(std::size_t k) {
    return {Mode::kTopK, k, 0.0};
  }
  static KeepRule below(double eps) {
    return {Mode::kEpsilon, 0, eps};
  }
};

struct RejectionResult {
  WeightedParticles particles;
  std::vector<double> kept_distances;
  std::uint64_t sim_calls = 0;
};

/// ABC rejection: n prior simulations ordered by distance to the observation;
/// the kept set carries uniform weights.
inline RejectionResult abc_rejection(const ModelSpec& model, std::size_t n,
                                     const DistanceSpec& distance,
                                     const KeepRule& keep, const Observation& obs,
                                     std::uint64_t seed) {
  if (keep.mode == KeepRule::Mode::kTopK && (keep.top_k < 1 || keep.top_k > n))
    throw std::invalid_argument("abc_rejection: need 1 <= top_k <= n");
  BuildStats stats;
  const ReferenceTable table =
      build_reference_table(model, model.sample_prior, n, seed, &stats);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i)
    dist[i] = distance(table.stats().row(i), obs.values());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
  });
  std::size_t kept = 0;
  if (keep.mode == KeepRule::Mode::kTopK) {
    kept = keep.top_k;
  } else {
    while (kept < n && dist[order[kept]] < keep.epsilon) ++kept;
    if (kept == 0)
      throw std::runtime_error("abc_rejection: no simulation below epsilon");
  }
  Matrix params(kept, table.n_params());
  std::vector<double> kept_dist(kept);
  for (std::size_t r = 0; r < kept; ++r) {
    for (std::size_t c = 0; c < table.n_params(); ++c)
      params(r, c) = table.params()(order[r], c);
    kept_dist[r] = dist[order[r]];
  }
  return {WeightedParticles::uniform(std::move(params)), std::move(kept_dist),
          stats.sim_calls};
}

struct McmcOptions {
  std::size_t n_steps = 10000;
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  std::uint64_t seed = 0;
  int init_attempts = 1000;
};

struct McmcResult {
  Matrix chain;  // post burn-in, thinned
  std::uint64_t proposed = 0;
  std::uint64_t accepted = 0;

  double acceptance_rate() const {
    return proposed > 0 ? double(accepted) / double(proposed) : 0.0;
  }
};

namespace detail {

inline std::vector<double> mcmc_init(
    const std::function<std::vector<double>(Rng&)>& sample_prior,
    const std::function<double(std::span<const double>)>& log_target,
    Rng& rng, int attempts) {
  for (int i = 0; i < attempts; ++i) {
    std::vector<double> theta = sample_prior(rng);
    if (std::isfinite(log_target(theta))) return theta;
  }
  throw std::runtime_error("mcmc: no finite-density initial state found");
}

}  // namespace detail

/// Metropolis-Hastings with target log f(theta) + log pi(theta); acceptance
/// ratios are formed entirely in log space.
inline McmcResult metropolis_hastings(
    const std::function<double(std::span<const double>)>& log_likelihood,
    const std::function<double(std::span<const double>)>& log_prior,
    const std::function<std::vector<double>(Rng&)>& sample_initial,
    const MarkovProposal& proposal, const McmcOptions& opts) {
  if (opts.thin < 1) throw std::invalid_argument("mcmc: thin >= 1");
  Rng rng(opts.seed);
  auto log_target = [&](std::span<const double> th) {
    const double lp = log_prior(th);
    if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
    return lp + log_likelihood(th);
  };
  std::vector<double> theta =
      detail::mcmc_init(sample_initial, log_target, rng, opts.init_attempts);
  double lt = log_target(theta);
  if (!std::isfinite(lt))
    throw std::runtime_error("mcmc: non-finite target at initial state");
  McmcResult result;
  std::vector<std::vector<double>> kept;
  for (std::size_t step = 1; step <= opts.n_steps; ++step) {
    std::vector<double> cand = proposal.sample(theta, rng);
    const double lt_cand = log_target(cand);
    ++result.proposed;
    if (std::isfinite(lt_cand)) {
      const double log_ratio = lt_cand + proposal.log_density(theta, cand) -
                               lt - proposal.log_density(cand, theta);
      if (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio) {
        theta = std::move(cand);
        lt = lt_cand;
        ++result.accepted;
      }
    }
    if (step > opts.burn_in && (step - opts.burn_in) % opts.thin == 0)
      kept.push_back(theta);
  }
  result.chain = Matrix::from_rows(kept);
  return result;
}

struct AbcMcmcResult {
  Matrix chain;  // full chain including the initial state
  std::uint64_t proposed = 0;
  std::uint64_t accepted = 0;
  std::uint64_t sim_calls = 0;
};

/// Likelihood-free MCMC: the likelihood ratio is replaced by the indicator
/// d(s*, s_obs) < epsilon, leaving the prior-and-proposal ratio.
inline AbcMcmcResult abc_mcmc(const ModelSpec& model,
                              const MarkovProposal& proposal,
                              const DistanceSpec& distance, double epsilon,
                              std::size_t n_steps, const Observation& obs,
                              std::uint64_t seed, int init_attempts = 1000) {
  Rng rng(seed);
  AbcMcmcResult result;
  // Prefer a starting point already inside the acceptance region; a chain
  // started far from it cannot move. When none is found within the attempt
  // budget (e.g. epsilon = 0) the chain starts at a plain prior draw.
  std::vector<double> theta = model.sample_prior(rng);
  for (int i = 0; i < init_attempts; ++i) {
    std::vector<double> cand = i == 0 ? theta : model.sample_prior(rng);
    auto s = model.simulate(cand, rng);
    ++result.sim_calls;
    if (s && all_finite(*s) && distance(*s, obs.values()) < epsilon) {
      theta = std::move(cand);
      break;
    }
  }
  std::vector<std::vector<double>> chain{theta};
  for (std::size_t step = 0; step < n_steps; ++step) {
    std::vector<double> cand = proposal.sample(theta, rng);
    ++result.proposed;
    bool accept = false;
    const double lp_cand = model.prior_log_density(cand);
    if (std::isfinite(lp_cand)) {
      auto s = model.simulate(cand, rng);
      ++result.sim_calls;
      if (s && all_finite(*s) && distance(*s, obs.values()) < epsilon) {
        const double log_ratio = lp_cand + proposal.log_density(theta, cand) -
                                 model.prior_log_density(theta) -
                                 proposal.log_density(cand, theta);
        accept = log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio;
      }
    }
    if (accept) {
      theta = std::move(cand);
      ++result.accepted;
    }
    chain.push_back(theta);
  }
  result.chain = Matrix::from_rows(chain);
  return result;
}

struct AbcSmcResult {
  WeightedParticles particles;
  std::vector<std::uint64_t> sims_per_level;
  std::uint64_t total_sim_calls = 0;
};

/// ABC-SMC with a decreasing tolerance schedule. Iteration weights follow
/// pi(theta) / sum_j w_{t-1}^(j) K_t(theta_{t-1}^(j) | theta^(i)), normalized
/// each round; resample-perturb-simulate repeats until N acceptances.
inline AbcSmcResult abc_smc(const ModelSpec& model,
                            const std::vector<PerturbationKernel>& kernels,
                            const DistanceSpec& distance,
                            const std::vector<double>& epsilons,
                            std::size_t n_particles, const Observation& obs,
                            std::uint64_t seed,
                            std::uint64_t budget_per_level = 10000000) {
  if (epsilons.empty()) throw std::invalid_argument("abc_smc: epsilons");
  for (std::size_t i = 1; i < epsilons.size(); ++i)
    if (!(epsilons[i] < epsilons[i - 1]))
      throw std::invalid_argument("abc_smc: tolerances must strictly decrease");
  if (n_particles < 1) throw std::invalid_argument("abc_smc: N >= 1");
  if (kernels.size() != 1 && kernels.size() != epsilons.size() - 1 &&
      !(epsilons.size() == 1 && kernels.empty()))
    throw std::invalid_argument("abc_smc: kernel count must be 1 or T-1");

  const std::size_t dim = model.n_params();
  Matrix prev_params, curr_params(n_particles, dim);
  std::vector<double> prev_weights, curr_weights(n_particles);
  AbcSmcResult result{WeightedParticles::uniform(Matrix(1, 1)), {}, 0};

  for (std::size_t level = 0; level < epsilons.size(); ++level) {
    const double eps = epsilons[level];
    const PerturbationKernel* kernel = nullptr;
    std::optional<detail::ProposalSource> source;
    if (level > 0) {
      kernel = kernels.size() == 1 ? &kernels.front() : &kernels[level - 1];
      source.emplace(detail::ProposalSource{prev_params, {}, false});
      source->cdfs.push_back(detail::ProposalSource::cumulate(prev_weights));
    }
    std::atomic<std::uint64_t> level_sims{0};
    std::atomic<bool> exhausted{false};
    const std::uint64_t level_seed = substream(seed, level);
    parallel_for(n_particles, [&](std::size_t i) {
      Rng rng(substream(level_seed, i));
      for (;;) {
        if (level_sims.load(std::memory_order_relaxed) > budget_per_level) {
          exhausted.store(true);
          return;
        }
        std::vector<double> theta;
        if (level == 0) {
          theta = model.sample_prior(rng);
        } else {
          theta = detail::propose(*source, *kernel, model, rng, 1000000, nullptr);
        }
        auto s = model.simulate(theta, rng);
        level_sims.fetch_add(1, std::memory_order_relaxed);
        if (!s || !all_finite(*s)) continue;
        if (distance(*s, obs.values()) < eps) {
          for (std::size_t c = 0; c < dim; ++c) curr_params(i, c) = theta[c];
          return;
        }
      }
    });
    if (exhausted.load())
      throw std::runtime_error("abc_smc: simulation budget exhausted at epsilon=" +
                               std::to_string(eps));
    if (level == 0) {
      std::fill(curr_weights.begin(), curr_weights.end(),
                1.0 / double(n_particles));
    } else {
      for (std::size_t i = 0; i < n_particles; ++i) {
        const auto theta = curr_params.row(i);
        double denom = 0.0;
        for (std::size_t j = 0; j < n_particles; ++j)
          denom += prev_weights[j] *
                   std::exp(kernel->log_density(prev_params.row(j), theta));
        const double prior = std::exp(model.prior_log_density(theta));
        curr_weights[i] = denom > 0.0 ? prior / denom : 0.0;
      }
      double total = 0.0;
      for (double w : curr_weights) total += w;
      if (!(total > 0.0))
        throw std::runtime_error("abc_smc: all particle weights vanished");
      for (double& w : curr_weights) w /= total;
    }
    result.sims_per_level.push_back(level_sims.load());
    result.total_sim_calls += level_sims.load();
    prev_params = curr_params;
    prev_weights = curr_weights;
  }
  result.particles =
      WeightedParticles::normalized(std::move(prev_params),
                                    std::move(prev_weights));
  return result;
}

}  // namespace rfabc
