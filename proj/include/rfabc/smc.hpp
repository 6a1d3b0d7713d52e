#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "rfabc/forest_drf.hpp"
#include "rfabc/forest_rf.hpp"
#include "rfabc/model.hpp"
#include "rfabc/numeric.hpp"
#include "rfabc/table.hpp"

namespace rfabc {

/// Transition kernel used to jitter resampled particles between iterations.
/// The density is required only by the ABC-SMC baseline weight formula;
/// forest-based SMC uses sampling alone.
struct PerturbationKernel {
  std::function<std::vector<double>(std::span<const double>, Rng&)> sample;
  std::function<double(std::span<const double> x, std::span<const double> center)>
      log_density;
};

/// Additive per-coordinate uniform kernel theta' + U(-w_j, w_j). Width 0
/// leaves a coordinate untouched (identity kernel).
inline PerturbationKernel uniform_kernel(std::vector<double> half_widths) {
  for (double w : half_widths)
    if (w < 0.0) throw std::invalid_argument("uniform_kernel: width >= 0");
  PerturbationKernel k;
  k.sample = [half_widths](std::span<const double> center, Rng& rng) {
    std::vector<double> out(center.begin(), center.end());
    for (std::size_t j = 0; j < out.size(); ++j)
      if (half_widths[j] > 0.0)
        out[j] += rng.uniform(-half_widths[j], half_widths[j]);
    return out;
  };
  k.log_density = [half_widths](std::span<const double> x,
                                std::span<const double> center) {
    double lp = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double w = half_widths[j];
      if (w <= 0.0) {
        if (x[j] != center[j]) return -std::numeric_limits<double>::infinity();
        continue;
      }
      if (std::abs(x[j] - center[j]) > w)
        return -std::numeric_limits<double>::infinity();
      lp -= std::log(2.0 * w);
    }
    return lp;
  };
  return k;
}

/// Additive per-coordinate Gaussian kernel theta' + Normal(0, sd_j^2).
inline PerturbationKernel gaussian_kernel(std::vector<double> sds) {
  for (double s : sds)
    if (!(s > 0.0)) throw std::invalid_argument("gaussian_kernel: sd > 0");
  PerturbationKernel k;
  k.sample = [sds](std::span<const double> center, Rng& rng) {
    std::vector<double> out(center.begin(), center.end());
    for (std::size_t j = 0; j < out.size(); ++j)
      out[j] += rng.normal(0.0, sds[j]);
    return out;
  };
  k.log_density = [sds](std::span<const double> x,
                        std::span<const double> center) {
    double lp = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = (x[j] - center[j]) / sds[j];
      lp += -0.5 * d * d - std::log(sds[j]) - 0.5 * std::log(2.0 * M_PI);
    }
    return lp;
  };
  return k;
}

/// Per-iteration particle counts, kernels and forest settings for the
/// sequential loop. Vectors of length 1 broadcast to every iteration;
/// kernels cover iterations 2..T.
struct SmcSchedule {
  int iterations = 1;
  std::vector<std::size_t> particle_counts;
  std::vector<PerturbationKernel> kernels;
  std::vector<RfConfig> rf_configs;    // used by run_abc_smc_rf
  std::vector<DrfConfig> drf_configs;  // used by run_abc_smc_drf
  int proposal_retry_cap = 10000;
  std::optional<double> convergence_threshold;  // disabled by default
  bool keep_tables = false;
  std::uint64_t seed = 0;

  std::size_t particles_at(int t) const {
    return particle_counts.size() == 1 ? particle_counts.front()
                                       : particle_counts.at(std::size_t(t - 1));
  }
  const PerturbationKernel& kernel_at(int t) const {  // t >= 2
    return kernels.size() == 1 ? kernels.front() : kernels.at(std::size_t(t - 2));
  }

  void validate(bool joint) const {
    if (iterations < 1) throw std::invalid_argument("SmcSchedule: T >= 1");
    if (particle_counts.empty() ||
        (particle_counts.size() != 1 &&
         particle_counts.size() != std::size_t(iterations)))
      throw std::invalid_argument("SmcSchedule: particle counts per iteration");
    for (std::size_t n : particle_counts)
      if (n < 1) throw std::invalid_argument("SmcSchedule: N_t >= 1");
    if (iterations > 1 && kernels.empty())
      throw std::invalid_argument("SmcSchedule: kernels required for T > 1");
    if (iterations > 1 && kernels.size() != 1 &&
        kernels.size() != std::size_t(iterations - 1))
      throw std::invalid_argument("SmcSchedule: kernel count must be 1 or T-1");
    const std::size_t fc = joint ? drf_configs.size() : rf_configs.size();
    if (fc != 1 && fc != std::size_t(iterations))
      throw std::invalid_argument("SmcSchedule: forest config count must be 1 or T");
  }
};

// Seed streams of one SMC run; exposed so a T=1 run can be reproduced by a
// direct single-shot forest call.
inline std::uint64_t smc_table_seed(std::uint64_t run_seed, int t) {
  return substream(run_seed, std::uint64_t(t), 0);
}
inline std::uint64_t smc_forest_seed(std::uint64_t run_seed, int t,
                                     std::size_t coord) {
  return substream(run_seed, std::uint64_t(t), 1 + coord);
}
inline std::uint64_t smc_proposal_seed(std::uint64_t run_seed, int t) {
  return substream(run_seed, std::uint64_t(t), 0xabcd);
}

struct IterationDiagnostics {
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> ess;
  double convergence = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t sim_calls = 0;
  std::uint64_t sim_failures = 0;
  std::uint64_t proposal_retries = 0;
  double wall_ms = 0.0;
};

/// One executed iteration: the particle set with one weight vector per
/// parameter (marginal mode) or a single joint weight vector.
struct SmcIteration {
  Matrix params;
  std::vector<std::vector<double>> weights;
  std::vector<double> importance;  // joint mode: statistic importance
  IterationDiagnostics diag;
  std::optional<ReferenceTable> table;

  bool joint() const { return weights.size() == 1; }

  WeightedParticles marginal(std::size_t coord) const {
    const auto& w = weights.size() == 1 ? weights[0] : weights.at(coord);
    return WeightedParticles::normalized(params, std::vector<double>(w));
  }
  WeightedParticles posterior() const { return marginal(0); }
};

struct SmcTrace {
  std::vector<SmcIteration> iterations;
  bool truncated = false;
  std::uint64_t total_sim_calls = 0;
  std::uint64_t total_retries = 0;

  const SmcIteration& final_iteration() const { return iterations.back(); }
};

/// Max over coordinates of the 1-Wasserstein distance between the weighted
/// marginals of two consecutive particle sets; 0 iff the weighted empirical
/// marginals coincide.
inline double convergence_metric(const SmcIteration& prev,
                                 const SmcIteration& curr) {
  if (prev.params.cols() != curr.params.cols())
    throw std::invalid_argument("convergence_metric: dimension mismatch");
  double worst = 0.0;
  for (std::size_t j = 0; j < curr.params.cols(); ++j) {
    const auto& pw = prev.weights.size() == 1 ? prev.weights[0] : prev.weights[j];
    const auto& cw = curr.weights.size() == 1 ? curr.weights[0] : curr.weights[j];
    worst = std::max(worst, w1_distance(prev.params.col(j), pw,
                                        curr.params.col(j), cw));
  }
  return worst;
}

inline double convergence_metric(const WeightedParticles& prev,
                                 const WeightedParticles& curr) {
  if (prev.dim() != curr.dim())
    throw std::invalid_argument("convergence_metric: dimension mismatch");
  double worst = 0.0;
  for (std::size_t j = 0; j < curr.dim(); ++j)
    worst = std::max(worst, w1_distance(prev.params().col(j), prev.weights(),
                                        curr.params().col(j), curr.weights()));
  return worst;
}

namespace detail {

// Resampling source for one iteration: cumulative weights per coordinate
// (marginal mode) or a single joint cumulative vector.
struct ProposalSource {
  const Matrix& params;
  std::vector<std::vector<double>> cdfs;
  bool marginal = false;

  static std::vector<double> cumulate(std::span<const double> w) {
    std::vector<double> cdf(w.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      cdf[i] = acc;
    }
    if (!(acc > 0.0))
      throw std::invalid_argument("proposal: zero total weight");
    cdf.back() = 1.0;
    return cdf;
  }

  std::size_t draw_index(std::size_t coord, Rng& rng) const {
    const auto& cdf = cdfs.size() == 1 ? cdfs[0] : cdfs[coord];
    const double u = rng.uniform();
    return std::size_t(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  }
};

// One proposal: resample (independently per coordinate in marginal mode),
// perturb, and keep only draws with positive prior density. A rejected draw
// redraws both the base particle and the perturbation.
inline std::vector<double> propose(const ProposalSource& src,
                                   const PerturbationKernel& kernel,
                                   const ModelSpec& model, Rng& rng,
                                   int retry_cap,
                                   std::atomic<std::uint64_t>* retries) {
  const std::size_t dim = src.params.cols();
  std::vector<double> base(dim);
  for (int attempt = 0; attempt <= retry_cap; ++attempt) {
    if (src.marginal) {
      for (std::size_t j = 0; j < dim; ++j)
        base[j] = src.params(src.draw_index(j, rng), j);
    } else {
      const std::size_t i = src.draw_index(0, rng);
      for (std::size_t j = 0; j < dim; ++j) base[j] = src.params(i, j);
    }
    std::vector<double> theta = kernel.sample(base, rng);
    if (model.in_prior_support(theta)) return theta;
    if (retries) retries->fetch_add(1, std::memory_order_relaxed);
  }
  throw std::runtime_error(
      "proposal retry cap exceeded: kernel and prior support do not overlap");
}

}  // namespace detail

/// Spec-level single proposal from a weighted particle set; marginal mode
/// resamples every coordinate independently from its own weighted marginal.
inline std::vector<double> propose_particle(const WeightedParticles& source,
                                            const PerturbationKernel& kernel,
                                            const ModelSpec& model,
                                            bool marginal_mode, Rng& rng,
                                            int retry_cap = 10000) {
  detail::ProposalSource src{source.params(), {}, marginal_mode};
  src.cdfs.push_back(detail::ProposalSource::cumulate(source.weights()));
  return detail::propose(src, kernel, model, rng, retry_cap, nullptr);
}

namespace detail {

template <typename FitIteration>
SmcTrace run_smc_loop(const ModelSpec& model, const SmcSchedule& schedule,
                      const Observation& obs, bool joint,
                      FitIteration&& fit_iteration) {
  schedule.validate(joint);
  if (obs.size() != model.n_stats())
    throw std::invalid_argument("run_smc: observation dimension mismatch");
  SmcTrace trace;
  for (int t = 1; t <= schedule.iterations; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n_t = schedule.particles_at(t);
    std::atomic<std::uint64_t> proposal_retries{0};
    ParameterSampler sampler;
    std::optional<detail::ProposalSource> source;
    if (t == 1) {
      sampler = model.sample_prior;
    } else {
      const SmcIteration& prev = trace.iterations.back();
      source.emplace(detail::ProposalSource{prev.params, {}, !joint});
      for (const auto& w : prev.weights)
        source->cdfs.push_back(detail::ProposalSource::cumulate(w));
      const PerturbationKernel& kernel = schedule.kernel_at(t);
      sampler = [&, t](Rng& rng) {
        return detail::propose(*source, kernel, model, rng,
                               schedule.proposal_retry_cap, &proposal_retries);
      };
    }
    BuildStats build;
    ReferenceTable table = build_reference_table(
        model, sampler, n_t, smc_table_seed(schedule.seed, t), &build);

    SmcIteration iter = fit_iteration(t, table, obs);
    iter.params = table.params();
    if (schedule.keep_tables) iter.table = table;

    iter.diag.sim_calls = build.sim_calls;
    iter.diag.sim_failures = build.sim_failures;
    iter.diag.proposal_retries = proposal_retries.load();
    for (std::size_t j = 0; j < model.n_params(); ++j) {
      const auto& w = iter.weights.size() == 1 ? iter.weights[0] : iter.weights[j];
      iter.diag.mean.push_back(weighted_mean(iter.params.col(j), w));
      iter.diag.variance.push_back(weighted_variance(iter.params.col(j), w));
    }
    for (const auto& w : iter.weights)
      iter.diag.ess.push_back(effective_sample_size(w));
    if (!trace.iterations.empty())
      iter.diag.convergence = convergence_metric(trace.iterations.back(), iter);
    iter.diag.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    trace.total_sim_calls += build.sim_calls;
    trace.total_retries += proposal_retries.load();
    trace.iterations.push_back(std::move(iter));

    if (schedule.convergence_threshold && t > 1 &&
        trace.iterations.back().diag.convergence <
            *schedule.convergence_threshold &&
        t < schedule.iterations) {
      trace.truncated = true;
      break;
    }
  }
  return trace;
}

}  // namespace detail

/// ABC-SMC-RF: at every iteration one regression forest per parameter
/// coordinate is fit on (theta_j, statistics); the per-coordinate weights
/// drive independent coordinate-wise resampling in the next iteration.
inline SmcTrace run_abc_smc_rf(const ModelSpec& model,
                               const SmcSchedule& schedule,
                               const Observation& obs) {
  return detail::run_smc_loop(
      model, schedule, obs, /*joint=*/false,
      [&](int t, const ReferenceTable& table, const Observation& o) {
        SmcIteration iter;
        for (std::size_t j = 0; j < model.n_params(); ++j) {
          RfConfig cfg = schedule.rf_configs.size() == 1
                             ? schedule.rf_configs.front()
                             : schedule.rf_configs.at(std::size_t(t - 1));
          cfg.seed = smc_forest_seed(schedule.seed, t, j);
          const Forest f = grow_forest(table, j, cfg);
          iter.weights.push_back(forest_weight_vector(f, o));
        }
        return iter;
      });
}

/// ABC-SMC-DRF: one distributional forest per iteration on the joint
/// parameter vector; a single weight vector drives joint resampling.
inline SmcTrace run_abc_smc_drf(const ModelSpec& model,
                                const SmcSchedule& schedule,
                                const Observation& obs) {
  return detail::run_smc_loop(
      model, schedule, obs, /*joint=*/true,
      [&](int t, const ReferenceTable& table, const Observation& o) {
        SmcIteration iter;
        DrfConfig cfg = schedule.drf_configs.size() == 1
                            ? schedule.drf_configs.front()
                            : schedule.drf_configs.at(std::size_t(t - 1));
        cfg.seed = smc_forest_seed(schedule.seed, t, 0);
        const Forest f = grow_drf(table, cfg);
        iter.weights.push_back(forest_weight_vector(f, o));
        iter.importance = variable_importance(f);
        return iter;
      });
}

}  // namespace rfabc
