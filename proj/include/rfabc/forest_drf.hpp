#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rfabc/forest.hpp"
#include "rfabc/table.hpp"

namespace rfabc {

enum class SplitRule { kCart, kMmd };

/// Distributional-forest settings. Each tree is grown on a without-replacement
/// subsample split into disjoint structure and estimation halves (honesty).
/// n_try_rate is the Poisson rate for the per-node candidate count,
/// clamped to [1, K]; 0 picks the default K/3. n_sample = 0 picks N/2.
struct DrfConfig {
  int n_trees = 500;
  double n_try_rate = 0.0;
  int min_node = 5;
  std::size_t n_sample = 0;
  double honesty_fraction = 0.5;
  SplitRule split_rule = SplitRule::kCart;
  int fourier_count = 50;
  std::uint64_t seed = 0;
};

/// Random Fourier features approximating a Gaussian kernel of the given
/// bandwidth: frequencies are i.i.d. Normal(0, sigma^-2 I).
struct FourierFeatures {
  Matrix frequencies;  // count x dim
  double bandwidth = 1.0;
};

inline FourierFeatures sample_fourier_features(std::size_t dim, double sigma,
                                               std::size_t count,
                                               std::uint64_t seed) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("sample_fourier_features: sigma > 0");
  if (count == 0 || dim == 0)
    throw std::invalid_argument("sample_fourier_features: empty shape");
  Rng rng(seed);
  Matrix freq(count, dim);
  const double sd = 1.0 / sigma;
  for (std::size_t l = 0; l < count; ++l)
    for (std::size_t p = 0; p < dim; ++p) freq(l, p) = rng.normal(0.0, sd);
  return {std::move(freq), sigma};
}

/// Median pairwise Euclidean distance between member parameter vectors; falls
/// back to the smallest nonzero distance (else 1) when parameters duplicate.
inline double median_pairwise_bandwidth(const Matrix& members) {
  std::vector<std::int32_t> rows(members.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return detail::median_pairwise_distance(members, rows);
}

namespace detail {

inline std::pair<double, double> split_means_valid(std::span<const double> stat,
                                                   double threshold) {
  std::size_t n1 = 0;
  for (double v : stat)
    if (v <= threshold) ++n1;
  return {double(n1), double(stat.size() - n1)};
}

}  // namespace detail

/// CART gain of a concrete split: (|L||R|/n^2) (mean_R - mean_L)^2 summed
/// over parameter coordinates, each standardized by the member-set standard
/// deviation. nullopt when a child is empty.
inline std::optional<double> cart_split_score(const Matrix& members,
                                              std::span<const double> stat,
                                              double threshold) {
  const std::size_t n = members.rows();
  if (stat.size() != n || n == 0)
    throw std::invalid_argument("cart_split_score: bad member arrays");
  auto [n1, n2] = detail::split_means_valid(stat, threshold);
  if (n1 == 0.0 || n2 == 0.0) return std::nullopt;
  double score = 0.0;
  for (std::size_t p = 0; p < members.cols(); ++p) {
    double total = 0.0, sumsq = 0.0, left = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = members(i, p);
      total += v;
      sumsq += v * v;
      if (stat[i] <= threshold) left += v;
    }
    const double var =
        std::max(0.0, sumsq / double(n) - (total / double(n)) * (total / double(n)));
    if (!(var > 0.0)) continue;
    const double diff = (total - left) / n2 - left / n1;
    score += (n1 * n2) / (double(n) * double(n)) * diff * diff / var;
  }
  return score;
}

/// Fourier-approximated MMD of a concrete split (cos/sin realization of
/// |mean phi_L - mean phi_R|^2). nullopt when a child is empty.
inline std::optional<double> mmd_split_score(const Matrix& members,
                                             std::span<const double> stat,
                                             double threshold,
                                             const FourierFeatures& ff) {
  const std::size_t n = members.rows();
  if (stat.size() != n || n == 0)
    throw std::invalid_argument("mmd_split_score: bad member arrays");
  auto [n1, n2] = detail::split_means_valid(stat, threshold);
  if (n1 == 0.0 || n2 == 0.0) return std::nullopt;
  const std::size_t L = ff.frequencies.rows();
  double score = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    double c1 = 0.0, s1 = 0.0, c2 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t p = 0; p < members.cols(); ++p)
        dot += ff.frequencies(l, p) * members(i, p);
      if (stat[i] <= threshold) {
        c1 += std::cos(dot);
        s1 += std::sin(dot);
      } else {
        c2 += std::cos(dot);
        s2 += std::sin(dot);
      }
    }
    const double dc = c1 / n1 - c2 / n2;
    const double ds = s1 / n1 - s2 / n2;
    score += (n1 * n2) / (double(n) * double(n)) * (dc * dc + ds * ds);
  }
  return score / double(L);
}

/// Without-replacement subsample for one honest tree, replayable from the
/// tree seed: first n_structure rows fit the tree, the rest fill its leaves.
inline std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>>
drf_subsample(std::uint64_t ts, std::size_t n_rows, std::size_t n_sample,
              std::size_t n_structure) {
  Rng rng(ts);
  std::vector<std::int32_t> pool(n_rows);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < n_sample; ++i) {
    const std::size_t j = i + rng.uniform_int(n_rows - i);
    std::swap(pool[i], pool[j]);
  }
  std::vector<std::int32_t> structure(pool.begin(),
                                      pool.begin() + static_cast<long>(n_structure));
  std::vector<std::int32_t> estimation(
      pool.begin() + static_cast<long>(n_structure),
      pool.begin() + static_cast<long>(n_sample));
  return {std::move(structure), std::move(estimation)};
}

inline std::size_t drf_structure_count(std::size_t n_sample, double fraction) {
  const auto n = static_cast<std::size_t>(std::llround(double(n_sample) * fraction));
  return std::clamp<std::size_t>(n, 1, n_sample - 1);
}

/// Grows an honest distributional forest on the joint parameter vector.
inline Forest grow_drf(const ReferenceTable& table, const DrfConfig& cfg) {
  const std::size_t n_rows = table.n_rows();
  if (cfg.n_trees < 1) throw std::invalid_argument("DrfConfig: n_trees >= 1");
  if (cfg.min_node < 2) throw std::invalid_argument("DrfConfig: min_node >= 2");
  if (!(cfg.honesty_fraction > 0.0 && cfg.honesty_fraction < 1.0))
    throw std::invalid_argument("DrfConfig: honesty_fraction in (0,1)");
  const std::size_t n_sample = cfg.n_sample > 0 ? cfg.n_sample : n_rows / 2;
  if (n_sample < 2 || n_sample > n_rows)
    throw std::invalid_argument("DrfConfig: need 2 <= n_sample <= N");
  if (cfg.split_rule == SplitRule::kMmd && cfg.fourier_count < 1)
    throw std::invalid_argument("DrfConfig: fourier_count >= 1 for MMD");
  const double rate =
      cfg.n_try_rate > 0.0 ? cfg.n_try_rate : double(table.n_stats()) / 3.0;
  const std::size_t n_structure =
      drf_structure_count(n_sample, cfg.honesty_fraction);

  detail::GrowConfig gcfg;
  gcfg.min_node = cfg.min_node;
  gcfg.criterion = cfg.split_rule == SplitRule::kCart
                       ? detail::SplitCriterion::kCart
                       : detail::SplitCriterion::kMmd;
  gcfg.poisson_rate = rate;
  gcfg.fourier_count = cfg.fourier_count;

  Forest f;
  f.table_rows = n_rows;
  f.n_stats = table.n_stats();
  f.n_targets = table.n_params();
  f.seed = cfg.seed;
  f.trees.resize(static_cast<std::size_t>(cfg.n_trees));
  std::vector<std::vector<double>> gains(
      f.trees.size(), std::vector<double>(table.n_stats(), 0.0));
  parallel_for(f.trees.size(), [&](std::size_t t) {
    const std::uint64_t ts = tree_seed(cfg.seed, t);
    auto [structure, estimation] =
        drf_subsample(ts, n_rows, n_sample, n_structure);
    Tree tree = detail::grow_tree(table.stats(), table.params(),
                                  std::move(structure), gcfg, ts, gains[t]);
    detail::assign_leaf_members(tree, table.stats(), estimation);
    f.trees[t] = std::move(tree);
  });
  f.split_gain.assign(table.n_stats(), 0.0);
  for (const auto& g : gains)
    for (std::size_t k = 0; k < g.size(); ++k) f.split_gain[k] += g[k];
  return f;
}

inline WeightedParticles drf_weights(const Forest& f, const ReferenceTable& table,
                                     const Observation& obs) {
  return forest_weights(f, table, obs);
}

/// Joint posterior CDF at x: total weight of particles dominated by x in
/// every coordinate.
inline double posterior_cdf(const WeightedParticles& p,
                            std::span<const double> x) {
  if (x.size() != p.dim())
    throw std::invalid_argument("posterior_cdf: dimension mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.n(); ++i) {
    bool inside = true;
    for (std::size_t c = 0; c < p.dim() && inside; ++c)
      inside = p.params()(i, c) <= x[c];
    if (inside) total += p.weights()[i];
  }
  return total;
}

}  // namespace rfabc
