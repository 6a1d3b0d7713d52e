#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rfabc/matrix.hpp"
#include "rfabc/rng.hpp"
#include "rfabc/table.hpp"
#include "rfabc/thread.hpp"

namespace rfabc {

struct TreeNode {
  std::int32_t stat = -1;  // split statistic index; -1 marks a leaf
  double threshold = 0.0;  // left child takes stat value <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t first = 0;  // leaf slice into Tree::items / Tree::counts
  std::uint32_t count = 0;

  bool is_leaf() const { return stat < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<std::int32_t> items;   // table row ids, grouped by leaf
  std::vector<std::int32_t> counts;  // per-item multiplicity
};

/// Trained ensemble. Interior nodes hold (statistic index, threshold);
/// leaves hold particle row ids with multiplicities. Immutable once grown.
struct Forest {
  std::size_t table_rows = 0;
  std::size_t n_stats = 0;
  std::size_t n_targets = 0;
  std::uint64_t seed = 0;
  std::vector<Tree> trees;
  std::vector<double> split_gain;  // per-statistic gain, summed over trees
};

// Every tree and every node draws from its own seed stream, which makes
// training order-independent and lets tests replay any node's candidate set.
inline std::uint64_t tree_seed(std::uint64_t forest_seed, std::size_t t) {
  return substream(forest_seed, t);
}
inline std::uint64_t node_seed(std::uint64_t tree_seed_value,
                               std::size_t node_index) {
  return substream(tree_seed_value, node_index);
}

inline std::int32_t locate_leaf_index(const Tree& tree,
                                      std::span<const double> stat_row) {
  std::int32_t idx = 0;
  while (!tree.nodes[idx].is_leaf()) {
    const TreeNode& n = tree.nodes[idx];
    idx = stat_row[n.stat] <= n.threshold ? n.left : n.right;
  }
  return idx;
}

inline const TreeNode& locate_leaf(const Tree& tree,
                                   std::span<const double> stat_row) {
  return tree.nodes[locate_leaf_index(tree, stat_row)];
}

/// Posterior weight of every table row given an observation: per tree, the
/// row's multiplicity in the observation's leaf over the leaf total, averaged
/// over trees. Trees whose located leaf holds no members are skipped (only
/// possible for honest forests).
inline std::vector<double> forest_weight_vector(const Forest& f,
                                                const Observation& obs) {
  if (obs.size() != f.n_stats)
    throw std::invalid_argument("forest_weights: observation dimension");
  std::vector<double> w(f.table_rows, 0.0);
  std::size_t used = 0;
  for (const Tree& tree : f.trees) {
    const TreeNode& leaf = locate_leaf(tree, obs.values());
    double total = 0.0;
    for (std::uint32_t j = 0; j < leaf.count; ++j)
      total += tree.counts[leaf.first + j];
    if (!(total > 0.0)) continue;
    ++used;
    for (std::uint32_t j = 0; j < leaf.count; ++j)
      w[tree.items[leaf.first + j]] += tree.counts[leaf.first + j] / total;
  }
  if (used == 0)
    throw std::logic_error("forest_weights: observation leaf empty in every tree");
  for (double& x : w) x /= double(used);
  return w;
}

inline WeightedParticles forest_weights(const Forest& f,
                                        const ReferenceTable& table,
                                        const Observation& obs) {
  if (table.n_rows() != f.table_rows || table.n_stats() != f.n_stats)
    throw std::invalid_argument("forest_weights: table does not match forest");
  return WeightedParticles::normalized(table.params(),
                                       forest_weight_vector(f, obs));
}

/// Per-statistic share of the total split gain (impurity decrease),
/// normalized to sum to 1. All zeros when the forest never split.
inline std::vector<double> variable_importance(const Forest& f) {
  std::vector<double> out(f.split_gain);
  double total = 0.0;
  for (double g : out) total += g;
  if (!(total > 0.0)) return std::vector<double>(out.size(), 0.0);
  for (double& g : out) g /= total;
  return out;
}

namespace detail {

enum class SplitCriterion { kL2, kCart, kMmd };

struct GrowConfig {
  int min_node = 5;
  SplitCriterion criterion = SplitCriterion::kL2;
  int fixed_n_try = 0;        // > 0: fixed candidate count per node
  double poisson_rate = 0.0;  // used when fixed_n_try == 0
  int fourier_count = 0;      // MMD feature count
};

// Distinct statistic indices, sorted ascending so that equal-gain ties
// resolve to the lowest index.
inline std::vector<int> sample_candidates(Rng& rng, int total, int count) {
  std::vector<int> pool(total);
  std::iota(pool.begin(), pool.end(), 0);
  count = std::min(count, total);
  for (int i = 0; i < count; ++i) {
    const int j =
        i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(total - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline int clamped_poisson_count(Rng& rng, double rate, int total) {
  const long draw = rate > 0.0 ? rng.poisson(rate) : 0;
  return static_cast<int>(std::clamp<long>(draw, 1, total));
}

inline bool rows_identical(const Matrix& m, std::span<const std::int32_t> slots) {
  const auto first = m.row(static_cast<std::size_t>(slots.front()));
  for (std::int32_t s : slots) {
    const auto r = m.row(static_cast<std::size_t>(s));
    for (std::size_t c = 0; c < r.size(); ++c)
      if (r[c] != first[c]) return false;
  }
  return true;
}

inline double median_pairwise_distance(const Matrix& targets,
                                       std::span<const std::int32_t> rows) {
  const std::size_t n = rows.size();
  if (n < 2)
    throw std::invalid_argument("median_pairwise_bandwidth: need >= 2 members");
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = targets.row(static_cast<std::size_t>(rows[i]));
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto b = targets.row(static_cast<std::size_t>(rows[j]));
      double ss = 0.0;
      for (std::size_t p = 0; p < a.size(); ++p) {
        const double diff = a[p] - b[p];
        ss += diff * diff;
      }
      d.push_back(std::sqrt(ss));
    }
  }
  std::sort(d.begin(), d.end());
  const std::size_t m = d.size();
  const double median =
      m % 2 == 1 ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
  if (median > 0.0) return median;
  for (double v : d)
    if (v > 0.0) return v;  // duplicated parameters: smallest nonzero gap
  return 1.0;
}

struct SplitChoice {
  int stat = -1;
  double threshold = 0.0;
  double gain = 0.0;  // comparison value; also the importance contribution
};

// Node-level context shared by all candidate scans.
struct NodeContext {
  // CART / L2: per-coordinate totals and multipliers (1 for plain L2,
  // inverse parent variance for standardized CART; 0 drops a coordinate).
  std::vector<double> target_total;
  std::vector<double> coord_weight;
  // MMD: cos/sin features per member (row-major slots x 2L) and their totals.
  std::vector<double> phi;
  std::vector<double> phi_total;
  int two_l = 0;
};

inline NodeContext make_node_context(const Matrix& targets,
                                     std::span<const std::int32_t> slots,
                                     const GrowConfig& cfg, Rng& node_rng) {
  NodeContext ctx;
  const std::size_t n = slots.size();
  const std::size_t dim = targets.cols();
  if (cfg.criterion == SplitCriterion::kMmd) {
    const double sigma = median_pairwise_distance(targets, slots);
    const double sd = 1.0 / sigma;
    const int L = cfg.fourier_count;
    Matrix freq(static_cast<std::size_t>(L), dim);
    for (int l = 0; l < L; ++l)
      for (std::size_t p = 0; p < dim; ++p)
        freq(static_cast<std::size_t>(l), p) = node_rng.normal(0.0, sd);
    ctx.two_l = 2 * L;
    ctx.phi.assign(n * static_cast<std::size_t>(ctx.two_l), 0.0);
    ctx.phi_total.assign(static_cast<std::size_t>(ctx.two_l), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const auto row = targets.row(static_cast<std::size_t>(slots[s]));
      double* out = ctx.phi.data() + s * static_cast<std::size_t>(ctx.two_l);
      for (int l = 0; l < L; ++l) {
        double dot = 0.0;
        for (std::size_t p = 0; p < dim; ++p)
          dot += freq(static_cast<std::size_t>(l), p) * row[p];
        out[2 * l] = std::cos(dot);
        out[2 * l + 1] = std::sin(dot);
        ctx.phi_total[2 * l] += out[2 * l];
        ctx.phi_total[2 * l + 1] += out[2 * l + 1];
      }
    }
    return ctx;
  }
  ctx.target_total.assign(dim, 0.0);
  std::vector<double> sumsq(dim, 0.0);
  for (std::int32_t s : slots) {
    const auto row = targets.row(static_cast<std::size_t>(s));
    for (std::size_t p = 0; p < dim; ++p) {
      ctx.target_total[p] += row[p];
      sumsq[p] += row[p] * row[p];
    }
  }
  ctx.coord_weight.assign(dim, 1.0);
  if (cfg.criterion == SplitCriterion::kCart) {
    for (std::size_t p = 0; p < dim; ++p) {
      const double var = std::max(
          0.0, sumsq[p] / double(n) -
                   (ctx.target_total[p] / double(n)) * (ctx.target_total[p] / double(n)));
      ctx.coord_weight[p] = var > 0.0 ? 1.0 / var : 0.0;
    }
  }
  return ctx;
}

// Best split of `slots` over the given candidate statistics, or nullopt when
// no candidate has two distinct values. Ties keep the first (lowest statistic
// index, then lowest threshold).
inline std::optional<SplitChoice> scan_candidates(
    const Matrix& stats, const Matrix& targets,
    std::span<const std::int32_t> slots, std::span<const int> cands,
    const GrowConfig& cfg, const NodeContext& ctx,
    std::vector<std::pair<double, std::int32_t>>& scratch) {
  const std::size_t n = slots.size();
  const std::size_t dim = targets.cols();
  const bool mmd = cfg.criterion == SplitCriterion::kMmd;
  std::optional<SplitChoice> best;
  std::vector<double> left(mmd ? static_cast<std::size_t>(ctx.two_l) : dim);
  for (int k : cands) {
    scratch.clear();
    for (std::size_t s = 0; s < n; ++s)
      scratch.emplace_back(stats(static_cast<std::size_t>(slots[s]),
                                 static_cast<std::size_t>(k)),
                           static_cast<std::int32_t>(s));
    std::sort(scratch.begin(), scratch.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (scratch.front().first == scratch.back().first) continue;
    std::fill(left.begin(), left.end(), 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t pos = static_cast<std::size_t>(scratch[i].second);
      if (mmd) {
        const double* ph =
            ctx.phi.data() + pos * static_cast<std::size_t>(ctx.two_l);
        for (int c = 0; c < ctx.two_l; ++c) left[static_cast<std::size_t>(c)] += ph[c];
      } else {
        const auto row = targets.row(static_cast<std::size_t>(slots[pos]));
        for (std::size_t p = 0; p < dim; ++p) left[p] += row[p];
      }
      const double v = scratch[i].first;
      const double next = scratch[i + 1].first;
      if (!(next > v)) continue;
      const double nl = double(i + 1);
      const double nr = double(n - i - 1);
      double gain = 0.0;
      if (mmd) {
        double ss = 0.0;
        for (int c = 0; c < ctx.two_l; ++c) {
          const double diff =
              left[static_cast<std::size_t>(c)] / nl -
              (ctx.phi_total[static_cast<std::size_t>(c)] -
               left[static_cast<std::size_t>(c)]) /
                  nr;
          ss += diff * diff;
        }
        gain = ss * nl * nr / (double(n) * double(n) * (ctx.two_l / 2));
      } else {
        for (std::size_t p = 0; p < dim; ++p) {
          const double sl = left[p];
          const double sr = ctx.target_total[p] - sl;
          const double d = sl * sl / nl + sr * sr / nr -
                           ctx.target_total[p] * ctx.target_total[p] / double(n);
          gain += ctx.coord_weight[p] * d;
        }
      }
      if (!best || gain > best->gain) {
        double mid = 0.5 * (v + next);
        if (!(mid >= v && mid < next)) mid = v;  // rounding collapsed the gap
        best = SplitChoice{k, mid, gain};
      }
    }
  }
  return best;
}

inline void finalize_leaf(Tree& tree, std::int32_t node,
                          std::vector<std::int32_t>& entries,
                          std::uint32_t begin, std::uint32_t end) {
  std::sort(entries.begin() + begin, entries.begin() + end);
  TreeNode& leaf = tree.nodes[static_cast<std::size_t>(node)];
  leaf.stat = -1;
  leaf.first = static_cast<std::uint32_t>(tree.items.size());
  std::uint32_t i = begin;
  while (i < end) {
    std::uint32_t j = i;
    while (j < end && entries[j] == entries[i]) ++j;
    tree.items.push_back(entries[i]);
    tree.counts.push_back(static_cast<std::int32_t>(j - i));
    i = j;
  }
  leaf.count = static_cast<std::uint32_t>(tree.items.size()) - leaf.first;
}

/// Grows one tree on `entries` (table row ids; duplicates encode bootstrap
/// multiplicity). Splitting stops when a node has <= min_node members, when
/// its target rows are all identical, or when no statistic separates its
/// members. Node m draws its candidates (and MMD features) from
/// node_seed(tree_seed, m); split gains accumulate into gain_accum.
inline Tree grow_tree(const Matrix& stats, const Matrix& targets,
                      std::vector<std::int32_t> entries, const GrowConfig& cfg,
                      std::uint64_t ts, std::vector<double>& gain_accum) {
  const int n_stats = static_cast<int>(stats.cols());
  Tree tree;
  tree.nodes.emplace_back();
  struct Work {
    std::int32_t node;
    std::uint32_t begin, end;
  };
  std::vector<Work> stack{{0, 0, static_cast<std::uint32_t>(entries.size())}};
  std::vector<std::pair<double, std::int32_t>> scratch;
  std::vector<int> all_stats(static_cast<std::size_t>(n_stats));
  std::iota(all_stats.begin(), all_stats.end(), 0);
  while (!stack.empty()) {
    const Work w = stack.back();
    stack.pop_back();
    const std::size_t n = w.end - w.begin;
    std::span<const std::int32_t> slots(entries.data() + w.begin, n);
    std::optional<SplitChoice> best;
    if (n > static_cast<std::size_t>(cfg.min_node) &&
        !rows_identical(targets, slots)) {
      Rng node_rng(node_seed(ts, static_cast<std::size_t>(w.node)));
      const int m = cfg.fixed_n_try > 0
                        ? cfg.fixed_n_try
                        : clamped_poisson_count(node_rng, cfg.poisson_rate,
                                                n_stats);
      const auto cands = sample_candidates(node_rng, n_stats, m);
      const NodeContext ctx = make_node_context(targets, slots, cfg, node_rng);
      best = scan_candidates(stats, targets, slots, cands, cfg, ctx, scratch);
      if (!best && static_cast<int>(cands.size()) < n_stats)
        best = scan_candidates(stats, targets, slots, all_stats, cfg, ctx,
                               scratch);
    }
    if (!best) {
      finalize_leaf(tree, w.node, entries, w.begin, w.end);
      continue;
    }
    gain_accum[static_cast<std::size_t>(best->stat)] +=
        cfg.criterion == SplitCriterion::kMmd ? best->gain * double(n)
                                              : best->gain;
    const auto mid_it = std::partition(
        entries.begin() + w.begin, entries.begin() + w.end,
        [&](std::int32_t row) {
          return stats(static_cast<std::size_t>(row),
                       static_cast<std::size_t>(best->stat)) <= best->threshold;
        });
    const auto mid =
        static_cast<std::uint32_t>(mid_it - entries.begin());
    const std::int32_t left_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    const std::int32_t right_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    TreeNode& node = tree.nodes[static_cast<std::size_t>(w.node)];
    node.stat = best->stat;
    node.threshold = best->threshold;
    node.left = left_id;
    node.right = right_id;
    stack.push_back({right_id, mid, w.end});
    stack.push_back({left_id, w.begin, mid});
  }
  return tree;
}

// Replaces leaf contents with the routed member set (multiplicity 1 each);
// used by honest forests, whose leaves hold only estimation-set particles.
inline void assign_leaf_members(Tree& tree, const Matrix& stats,
                                std::span<const std::int32_t> members) {
  std::vector<std::vector<std::int32_t>> buckets(tree.nodes.size());
  for (std::int32_t m : members)
    buckets[static_cast<std::size_t>(
                locate_leaf_index(tree, stats.row(static_cast<std::size_t>(m))))]
        .push_back(m);
  tree.items.clear();
  tree.counts.clear();
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    TreeNode& node = tree.nodes[i];
    if (!node.is_leaf()) continue;
    node.first = static_cast<std::uint32_t>(tree.items.size());
    for (std::int32_t m : buckets[i]) {
      tree.items.push_back(m);
      tree.counts.push_back(1);
    }
    node.count = static_cast<std::uint32_t>(tree.items.size()) - node.first;
  }
}

}  // namespace detail
}  // namespace rfabc
