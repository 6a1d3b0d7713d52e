#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace rfabc {

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double weighted_mean(std::span<const double> values,
                            std::span<const double> weights) {
  double m = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) m += weights[i] * values[i];
  return m;
}

// Weights are assumed normalized; population-style second moment.
inline double weighted_variance(std::span<const double> values,
                                std::span<const double> weights) {
  const double m = weighted_mean(values, weights);
  double v = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - m;
    v += weights[i] * d * d;
  }
  return v;
}

inline double effective_sample_size(std::span<const double> weights) {
  double ss = 0.0;
  for (double w : weights) ss += w * w;
  return ss > 0.0 ? 1.0 / ss : 0.0;
}

inline double log_sum_exp(std::span<const double> terms) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double t : terms) mx = std::max(mx, t);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

/// One-dimensional weighted sample sorted by value, with cumulative weights;
/// basis for quantiles and Wasserstein distances.
class SortedWeighted {
 public:
  SortedWeighted(std::span<const double> values,
                 std::span<const double> weights) {
    if (values.size() != weights.size() || values.empty())
      throw std::invalid_argument("SortedWeighted: bad sizes");
    std::vector<std::size_t> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return values[a] < values[b];
    });
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0))
      throw std::invalid_argument("SortedWeighted: nonpositive total weight");
    values_.reserve(order.size());
    cum_.reserve(order.size());
    double acc = 0.0;
    for (std::size_t i : order) {
      acc += weights[i] / total;
      values_.push_back(values[i]);
      cum_.push_back(acc);
    }
    cum_.back() = 1.0;
  }

  // Smallest value whose cumulative weight reaches level. Levels within 1e-9
  // of a cumulative boundary count as reached, so that rescaling the weights
  // cannot shift a quantile across the boundary.
  double quantile(double level) const {
    const auto it = std::lower_bound(cum_.begin(), cum_.end(), level - 1e-9);
    const std::size_t idx =
        it == cum_.end() ? cum_.size() - 1
                         : static_cast<std::size_t>(it - cum_.begin());
    return values_[idx];
  }

  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& cumulative() const { return cum_; }

 private:
  std::vector<double> values_;
  std::vector<double> cum_;
};

inline std::vector<double> weighted_quantiles(std::span<const double> values,
                                              std::span<const double> weights,
                                              std::span<const double> levels) {
  SortedWeighted sw(values, weights);
  std::vector<double> out;
  out.reserve(levels.size());
  for (double q : levels) out.push_back(sw.quantile(q));
  return out;
}

/// 1-Wasserstein distance between two weighted empirical distributions,
/// computed as the integral of |F - G| over the merged support.
inline double w1_distance(std::span<const double> xs,
                          std::span<const double> xw,
                          std::span<const double> ys,
                          std::span<const double> yw) {
  SortedWeighted a(xs, xw), b(ys, yw);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0;
  double dist = 0.0;
  double prev = std::min(av.front(), bv.front());
  while (i < av.size() || j < bv.size()) {
    double x;
    if (j >= bv.size() || (i < av.size() && av[i] <= bv[j]))
      x = av[i];
    else
      x = bv[j];
    dist += std::abs(fa - fb) * (x - prev);
    while (i < av.size() && av[i] <= x) fa = a.cumulative()[i++];
    while (j < bv.size() && bv[j] <= x) fb = b.cumulative()[j++];
    prev = x;
  }
  return dist;
}

}  // namespace rfabc
