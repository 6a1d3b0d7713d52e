#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfabc/model.hpp"
#include "rfabc/numeric.hpp"
#include "rfabc/rng.hpp"

namespace rfabc {

/// Linear birth-death process: each individual divides at rate lambda and
/// dies at rate mu; Z = 0 is absorbing. Trajectories that reach
/// max_population saturate there (the uniform prior admits growth rates for
/// which event-by-event simulation would never finish; saturated statistics
/// sit far outside the data range and carry no posterior weight).
struct BirthDeathSpec {
  long initial = 10;
  std::vector<double> times = default_times();
  long max_population = 10000;
  double prior_low = 0.0;
  double prior_high = 20.0;

  static std::vector<double> default_times() {
    std::vector<double> t(25);
    for (int i = 0; i < 25; ++i) t[static_cast<std::size_t>(i)] = 0.2 * (i + 1);
    return t;
  }

  void validate() const {
    if (initial < 1) throw std::invalid_argument("BirthDeathSpec: Z(0) >= 1");
    if (times.empty()) throw std::invalid_argument("BirthDeathSpec: times");
    double prev = 0.0;
    for (double t : times) {
      if (!(t > prev))
        throw std::invalid_argument("BirthDeathSpec: times strictly increasing");
      prev = t;
    }
    if (max_population < initial)
      throw std::invalid_argument("BirthDeathSpec: max_population >= Z(0)");
  }
};

/// Exact continuous-time simulation: exponential waiting times with total
/// rate (lambda + mu) Z and birth probability lambda / (lambda + mu).
inline std::vector<double> bd_simulate(const BirthDeathSpec& spec, double lambda,
                                       double mu, Rng& rng) {
  spec.validate();
  if (!(lambda >= 0.0) || !(mu >= 0.0) || !std::isfinite(lambda) ||
      !std::isfinite(mu))
    throw std::invalid_argument("bd_simulate: rates must be finite and >= 0");
  std::vector<double> out(spec.times.size(), 0.0);
  long z = spec.initial;
  double t = 0.0;
  std::size_t idx = 0;
  const double total_rate_per_capita = lambda + mu;
  const double birth_prob =
      total_rate_per_capita > 0.0 ? lambda / total_rate_per_capita : 0.0;
  while (idx < out.size()) {
    if (z <= 0 || z >= spec.max_population || total_rate_per_capita <= 0.0) {
      const double frozen = double(std::max<long>(z, 0));
      for (; idx < out.size(); ++idx) out[idx] = frozen;
      break;
    }
    const double event_t = t + rng.exponential(total_rate_per_capita * double(z));
    while (idx < out.size() && spec.times[idx] < event_t) out[idx++] = double(z);
    if (idx >= out.size()) break;
    z += rng.uniform() < birth_prob ? 1 : -1;
    t = event_t;
  }
  return out;
}

namespace detail {

// log Gamma(n) for integer n, cached per thread.
inline double lgamma_int(long n) {
  thread_local std::vector<double> cache{0.0, 0.0, 0.0};  // lgamma(0) unused
  if (n < 1) return std::numeric_limits<double>::infinity();
  const auto idx = static_cast<std::size_t>(n);
  while (cache.size() <= idx)
    cache.push_back(cache.back() + std::log(double(cache.size() - 1)));
  return cache[idx];
}

inline double log_choose(long n, long k) {
  if (k < 0 || k > n || n < 0) return -std::numeric_limits<double>::infinity();
  return lgamma_int(n + 1) - lgamma_int(k + 1) - lgamma_int(n - k + 1);
}

}  // namespace detail

/// Kendall transition probability P(Z(t+dt) = z1 | Z(t) = z0) in log space:
/// sum over l of C(z0,l)(1-a)^l a^(z0-l) C(z1-1, z1-l)(1-b)^l b^(z1-l) with
/// a, b from the lambda != mu (or lambda == mu) closed forms.
inline double bd_transition_logprob(long z0, long z1, double dt, double lambda,
                                    double mu) {
  if (z0 < 0 || z1 < 0)
    throw std::invalid_argument("bd_transition_logprob: negative count");
  if (!(dt > 0.0)) throw std::invalid_argument("bd_transition_logprob: dt > 0");
  if (!(lambda >= 0.0) || !(mu >= 0.0))
    throw std::invalid_argument("bd_transition_logprob: rates >= 0");
  const double neg_inf = -std::numeric_limits<double>::infinity();
  if (z0 == 0) return z1 == 0 ? 0.0 : neg_inf;
  double a, b;
  if (lambda == mu) {
    a = b = lambda * dt / (1.0 + lambda * dt);
  } else if ((lambda - mu) * dt > 700.0) {
    // Growth so extreme that every surviving clan is effectively infinite;
    // only full extinction keeps finite mass.
    a = mu / lambda;
    b = 1.0;
  } else {
    const double e1 = std::expm1((lambda - mu) * dt);
    const double denom = lambda * e1 + (lambda - mu);
    a = mu * e1 / denom;
    b = lambda * e1 / denom;
  }
  if (a == 0.0 && b == 0.0) return z1 == z0 ? 0.0 : neg_inf;
  const double log_a = a > 0.0 ? std::log(a) : neg_inf;
  const double log_b = b > 0.0 ? std::log(b) : neg_inf;
  const double log_1a = a < 1.0 ? std::log1p(-a) : neg_inf;
  const double log_1b = b < 1.0 ? std::log1p(-b) : neg_inf;
  auto scaled = [&](long count, double logv) {
    return count == 0 ? 0.0 : double(count) * logv;
  };
  std::vector<double> terms;
  const long l_max = std::min(z0, z1);
  terms.reserve(static_cast<std::size_t>(l_max) + 1);
  for (long l = 0; l <= l_max; ++l) {
    const double lc1 = detail::log_choose(z0, l);
    const double lc2 = z1 == 0 && l == 0
                           ? 0.0  // C(-1, 0) = 1: full extinction term
                           : detail::log_choose(z1 - 1, z1 - l);
    const double term = lc1 + lc2 + scaled(l, log_1a) + scaled(z0 - l, log_a) +
                        scaled(l, log_1b) + scaled(z1 - l, log_b);
    if (std::isfinite(term)) terms.push_back(term);
  }
  if (terms.empty()) return neg_inf;
  return log_sum_exp(terms);
}

/// Exact log-likelihood of observed counts from the Markov property; the
/// chain starts at (t = 0, Z(0) = spec.initial).
inline double bd_loglikelihood(const BirthDeathSpec& spec,
                               std::span<const double> z_obs, double lambda,
                               double mu) {
  spec.validate();
  if (z_obs.size() != spec.times.size())
    throw std::invalid_argument("bd_loglikelihood: data/time size mismatch");
  double ll = 0.0;
  long prev_z = spec.initial;
  double prev_t = 0.0;
  for (std::size_t i = 0; i < z_obs.size(); ++i) {
    const long z = static_cast<long>(std::llround(z_obs[i]));
    ll += bd_transition_logprob(prev_z, z, spec.times[i] - prev_t, lambda, mu);
    if (!std::isfinite(ll)) return -std::numeric_limits<double>::infinity();
    prev_z = z;
    prev_t = spec.times[i];
  }
  return ll;
}

inline ModelSpec make_birth_death_model(const BirthDeathSpec& spec) {
  spec.validate();
  ModelSpec m;
  m.name = "birth-death";
  m.param_names = {"lambda", "mu"};
  for (std::size_t i = 1; i <= spec.times.size(); ++i)
    m.stat_names.push_back("z" + std::to_string(i));
  m.sample_prior = [spec](Rng& rng) {
    return std::vector<double>{rng.uniform(spec.prior_low, spec.prior_high),
                               rng.uniform(spec.prior_low, spec.prior_high)};
  };
  m.prior_log_density = [spec](std::span<const double> theta) {
    for (double v : theta)
      if (v <= spec.prior_low || v >= spec.prior_high)
        return -std::numeric_limits<double>::infinity();
    return -2.0 * std::log(spec.prior_high - spec.prior_low);
  };
  m.simulate_fn = [spec](std::span<const double> theta,
                         Rng& rng) -> std::optional<std::vector<double>> {
    return bd_simulate(spec, theta[0], theta[1], rng);
  };
  return m;
}

}  // namespace rfabc
