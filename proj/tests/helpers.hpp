#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "rfabc/model.hpp"

namespace rfabc::testing {

// theta ~ U(0,1), one constant statistic.
inline ModelSpec constant_stat_model() {
  ModelSpec m;
  m.name = "stub-constant";
  m.param_names = {"theta"};
  m.stat_names = {"s"};
  m.sample_prior = [](Rng& rng) { return std::vector<double>{rng.uniform()}; };
  m.prior_log_density = [](std::span<const double> th) {
    return th[0] > 0.0 && th[0] < 1.0
               ? 0.0
               : -std::numeric_limits<double>::infinity();
  };
  m.simulate_fn = [](std::span<const double>, Rng&)
      -> std::optional<std::vector<double>> { return std::vector<double>{1.0}; };
  return m;
}

// theta ~ U(lo,hi); the single statistic equals theta exactly.
inline ModelSpec identity_stat_model(double lo = 0.0, double hi = 1.0) {
  ModelSpec m;
  m.name = "stub-identity";
  m.param_names = {"theta"};
  m.stat_names = {"s"};
  m.sample_prior = [lo, hi](Rng& rng) {
    return std::vector<double>{rng.uniform(lo, hi)};
  };
  m.prior_log_density = [lo, hi](std::span<const double> th) {
    return th[0] > lo && th[0] < hi
               ? -std::log(hi - lo)
               : -std::numeric_limits<double>::infinity();
  };
  m.simulate_fn = [](std::span<const double> th, Rng&)
      -> std::optional<std::vector<double>> {
    return std::vector<double>{th[0]};
  };
  return m;
}

// theta ~ U(0,1); stats = {theta + noise, pure noise}.
inline ModelSpec signal_noise_model(double signal_sd = 0.05) {
  ModelSpec m;
  m.name = "stub-signal-noise";
  m.param_names = {"theta"};
  m.stat_names = {"signal", "noise"};
  m.sample_prior = [](Rng& rng) { return std::vector<double>{rng.uniform()}; };
  m.prior_log_density = [](std::span<const double> th) {
    return th[0] > 0.0 && th[0] < 1.0
               ? 0.0
               : -std::numeric_limits<double>::infinity();
  };
  m.simulate_fn = [signal_sd](std::span<const double> th, Rng& rng)
      -> std::optional<std::vector<double>> {
    return std::vector<double>{th[0] + rng.normal(0.0, signal_sd),
                               rng.uniform()};
  };
  return m;
}

// Fails whenever theta < fail_below; otherwise returns theta.
inline ModelSpec flaky_model(double fail_below) {
  ModelSpec m = identity_stat_model();
  m.name = "stub-flaky";
  m.simulate_fn = [fail_below](std::span<const double> th, Rng&)
      -> std::optional<std::vector<double>> {
    if (th[0] < fail_below) return std::nullopt;
    return std::vector<double>{th[0]};
  };
  return m;
}

}  // namespace rfabc::testing
