#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rfabc/forest.hpp"
#include "rfabc/table.hpp"

namespace rfabc {

/// One-dimensional regression-forest settings. n_try = 0 picks the default
/// ceil(K/3); candidates are drawn without replacement per node.
struct RfConfig {
  int n_trees = 500;
  int n_try = 0;
  int min_node = 5;
  std::uint64_t seed = 0;
};

/// Bootstrap entries (with replacement, size N) for one tree, replayable
/// from the tree seed.
inline std::vector<std::int32_t> bootstrap_entries(std::uint64_t ts,
                                                   std::size_t n_rows) {
  Rng rng(ts);
  std::vector<std::int32_t> out(n_rows);
  for (auto& e : out)
    e = static_cast<std::int32_t>(rng.uniform_int(n_rows));
  return out;
}

/// Mean within-child squared deviation of the target after splitting members
/// at `threshold` on the given statistic values. nullopt when a child set is
/// empty (the candidate split is invalid, not an error).
inline std::optional<double> l2_split_loss(std::span<const double> target,
                                           std::span<const double> stat,
                                           double threshold) {
  if (target.size() != stat.size() || target.empty())
    throw std::invalid_argument("l2_split_loss: bad member arrays");
  double sum1 = 0.0, sum2 = 0.0;
  std::size_t n1 = 0, n2 = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (stat[i] <= threshold) {
      sum1 += target[i];
      ++n1;
    } else {
      sum2 += target[i];
      ++n2;
    }
  }
  if (n1 == 0 || n2 == 0) return std::nullopt;
  const double m1 = sum1 / double(n1);
  const double m2 = sum2 / double(n2);
  double sse = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double m = stat[i] <= threshold ? m1 : m2;
    const double d = target[i] - m;
    sse += d * d;
  }
  return sse / double(target.size());
}

inline int default_n_try(std::size_t n_stats) {
  return static_cast<int>((n_stats + 2) / 3);
}

/// Grows B bootstrap trees regressing parameter `target_param` on the table
/// statistics with L2-loss splits.
inline Forest grow_forest(const ReferenceTable& table, std::size_t target_param,
                          const RfConfig& cfg) {
  if (cfg.n_trees < 1) throw std::invalid_argument("RfConfig: n_trees >= 1");
  if (cfg.min_node < 2) throw std::invalid_argument("RfConfig: min_node >= 2");
  if (target_param >= table.n_params())
    throw std::invalid_argument("grow_forest: target index out of range");
  if (table.n_rows() < static_cast<std::size_t>(cfg.min_node))
    throw std::invalid_argument("grow_forest: table smaller than min_node");
  const int n_try =
      cfg.n_try > 0 ? cfg.n_try : default_n_try(table.n_stats());
  if (n_try < 1 || n_try > static_cast<int>(table.n_stats()))
    throw std::invalid_argument("RfConfig: need 1 <= n_try <= K");

  const Matrix targets = Matrix::column(table.params().col(target_param));
  detail::GrowConfig gcfg;
  gcfg.min_node = cfg.min_node;
  gcfg.criterion = detail::SplitCriterion::kL2;
  gcfg.fixed_n_try = n_try;

  Forest f;
  f.table_rows = table.n_rows();
  f.n_stats = table.n_stats();
  f.n_targets = 1;
  f.seed = cfg.seed;
  f.trees.resize(static_cast<std::size_t>(cfg.n_trees));
  std::vector<std::vector<double>> gains(
      f.trees.size(), std::vector<double>(table.n_stats(), 0.0));
  parallel_for(f.trees.size(), [&](std::size_t t) {
    const std::uint64_t ts = tree_seed(cfg.seed, t);
    f.trees[t] = detail::grow_tree(table.stats(), targets,
                                   bootstrap_entries(ts, table.n_rows()), gcfg,
                                   ts, gains[t]);
  });
  f.split_gain.assign(table.n_stats(), 0.0);
  for (const auto& g : gains)
    for (std::size_t k = 0; k < g.size(); ++k) f.split_gain[k] += g[k];
  return f;
}

inline WeightedParticles rf_weights(const Forest& f, const ReferenceTable& table,
                                    const Observation& obs) {
  return forest_weights(f, table, obs);
}

}  // namespace rfabc
