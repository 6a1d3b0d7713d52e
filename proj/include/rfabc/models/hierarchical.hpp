#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfabc/matrix.hpp"
#include "rfabc/model.hpp"
#include "rfabc/rng.hpp"

namespace rfabc {

/// Hierarchical Normal-mean model: theta2 ~ IG(alpha, beta),
/// theta1 | theta2 ~ Normal(0, theta2), y_i ~ Normal(theta1, theta2)
/// (second argument is the variance).
struct HierarchicalSpec {
  double alpha = 4.0;
  double beta = 5.0;
  int n_obs = 10;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0))
      throw std::invalid_argument("HierarchicalSpec: alpha, beta > 0");
    if (n_obs < 1) throw std::invalid_argument("HierarchicalSpec: n_obs >= 1");
  }
};

inline double inverse_gamma_draw(double shape, double rate, Rng& rng) {
  return 1.0 / rng.gamma(shape, 1.0 / rate);
}

inline double inverse_gamma_log_density(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - rate / x;
}

inline std::vector<double> hierarchical_simulate(const HierarchicalSpec& spec,
                                                 double theta1, double theta2,
                                                 Rng& rng) {
  if (!(theta2 > 0.0))
    throw std::invalid_argument("hierarchical_simulate: theta2 > 0");
  std::vector<double> y(static_cast<std::size_t>(spec.n_obs));
  const double sd = std::sqrt(theta2);
  for (auto& v : y) v = rng.normal(theta1, sd);
  return y;
}

namespace detail {
inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

/// The 61 statistics: s1 = mean, s2 = sample variance, s3 = median absolute
/// deviation; s4..s11 = pairwise sums (s1+s2, s1+s3, s2+s3), the full sum,
/// pairwise products (s1*s2, s1*s3, s2*s3), the full product;
/// s12..s61 ~ Uniform(0,1) noise.
inline std::vector<double> hierarchical_summaries(std::span<const double> y,
                                                  Rng& rng) {
  const std::size_t n = y.size();
  if (n == 0) throw std::invalid_argument("hierarchical_summaries: empty data");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= double(n);
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var = n > 1 ? var / double(n - 1) : 0.0;
  std::vector<double> dev(y.begin(), y.end());
  const double med = detail::median_of(dev);
  for (auto& v : dev) v = std::abs(v - med);
  const double mad = detail::median_of(std::move(dev));

  std::vector<double> s;
  s.reserve(61);
  s.push_back(mean);
  s.push_back(var);
  s.push_back(mad);
  s.push_back(mean + var);
  s.push_back(mean + mad);
  s.push_back(var + mad);
  s.push_back(mean + var + mad);
  s.push_back(mean * var);
  s.push_back(mean * mad);
  s.push_back(var * mad);
  s.push_back(mean * var * mad);
  for (int i = 12; i <= 61; ++i) s.push_back(rng.uniform());
  return s;
}

inline Matrix hierarchical_posterior_sample_from_moments(double n, double ybar,
                                                         double big_b,
                                                         double alpha,
                                                         std::size_t draws,
                                                         std::uint64_t seed) {
  Rng rng(seed);
  Matrix out(draws, 2);
  const double shape = n / 2.0 + alpha;
  const double loc = n * ybar / (n + 1.0);
  for (std::size_t i = 0; i < draws; ++i) {
    const double t2 = inverse_gamma_draw(shape, big_b, rng);
    const double t1 = rng.normal(loc, std::sqrt(t2 / (n + 1.0)));
    out(i, 0) = t1;
    out(i, 1) = t2;
  }
  return out;
}

/// Exact conjugate posterior draws of (theta1, theta2) given observed data:
/// theta2 ~ IG(n/2 + alpha, B) with
/// B = ((S_obs)^2 + 2 beta + n ybar^2 / (n+1)) / 2, and
/// theta1 | theta2 ~ Normal(n ybar / (n+1), theta2 / (n+1)).
inline Matrix hierarchical_exact_posterior_sample(std::span<const double> y_obs,
                                                  double alpha, double beta,
                                                  std::size_t draws,
                                                  std::uint64_t seed) {
  const std::size_t n = y_obs.size();
  if (n == 0)
    throw std::invalid_argument("hierarchical_exact_posterior_sample: empty");
  double ybar = 0.0;
  for (double v : y_obs) ybar += v;
  ybar /= double(n);
  double ss = 0.0;
  for (double v : y_obs) ss += (v - ybar) * (v - ybar);
  const double big_b =
      0.5 * (ss + 2.0 * beta + double(n) * ybar * ybar / double(n + 1));
  return hierarchical_posterior_sample_from_moments(double(n), ybar, big_b,
                                                    alpha, draws, seed);
}

inline ModelSpec make_hierarchical_model(const HierarchicalSpec& spec) {
  spec.validate();
  ModelSpec m;
  m.name = "hierarchical-normal";
  m.param_names = {"theta1", "theta2"};
  for (int i = 1; i <= 61; ++i)
    m.stat_names.push_back("s" + std::to_string(i));
  m.sample_prior = [spec](Rng& rng) {
    const double t2 = inverse_gamma_draw(spec.alpha, spec.beta, rng);
    const double t1 = rng.normal(0.0, std::sqrt(t2));
    return std::vector<double>{t1, t2};
  };
  m.prior_log_density = [spec](std::span<const double> theta) {
    const double t1 = theta[0], t2 = theta[1];
    if (!(t2 > 0.0)) return -std::numeric_limits<double>::infinity();
    const double lp2 = inverse_gamma_log_density(t2, spec.alpha, spec.beta);
    const double lp1 =
        -0.5 * std::log(2.0 * M_PI * t2) - t1 * t1 / (2.0 * t2);
    return lp1 + lp2;
  };
  m.simulate_fn = [spec](std::span<const double> theta,
                         Rng& rng) -> std::optional<std::vector<double>> {
    const auto y = hierarchical_simulate(spec, theta[0], theta[1], rng);
    return hierarchical_summaries(y, rng);
  };
  return m;
}

}  // namespace rfabc
