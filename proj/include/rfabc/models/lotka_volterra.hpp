#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfabc/model.hpp"
#include "rfabc/rng.hpp"

namespace rfabc {

/// Deterministic predator-prey model dx/dt = a x - c x y, dy/dt = b x y - d y
/// with (a, b) inferred and (c, d) fixed. Observations are (x, y) at the
/// configured times plus independent Normal(0, noise_sd^2) noise.
struct LotkaVolterraSpec {
  double c = 1.0;
  double d = 1.0;
  double x0 = 1.0;
  double y0 = 0.5;
  std::vector<double> times = {1.875, 3.75, 5.625, 7.5, 9.375, 11.25, 13.125, 15.0};
  double noise_sd = 0.5;
  double step = 0.01;
  double blowup_limit = 1e8;
  double prior_low = -10.0;
  double prior_high = 10.0;

  void validate() const {
    if (!(x0 > 0.0) || !(y0 > 0.0))
      throw std::invalid_argument("LotkaVolterraSpec: positive initial state");
    if (times.empty()) throw std::invalid_argument("LotkaVolterraSpec: times");
    double prev = 0.0;
    for (double t : times) {
      if (!(t > prev))
        throw std::invalid_argument("LotkaVolterraSpec: times strictly increasing");
      prev = t;
    }
    if (!(step > 0.0)) throw std::invalid_argument("LotkaVolterraSpec: step > 0");
  }
};

/// Classical fixed-step RK4 through the observation times; each segment uses
/// a step no larger than spec.step that lands exactly on the next time.
/// Returns (x, y) at each time, or nullopt when the state blows up.
inline std::optional<std::vector<std::pair<double, double>>> lv_integrate(
    const LotkaVolterraSpec& spec, double a, double b) {
  spec.validate();
  double x = spec.x0, y = spec.y0;
  auto fx = [&](double xs, double ys) { return a * xs - spec.c * xs * ys; };
  auto fy = [&](double xs, double ys) { return b * xs * ys - spec.d * ys; };
  std::vector<std::pair<double, double>> out;
  out.reserve(spec.times.size());
  double t = 0.0;
  for (double target : spec.times) {
    const double span = target - t;
    const auto steps = static_cast<std::size_t>(std::ceil(span / spec.step - 1e-12));
    const double h = span / double(steps);
    for (std::size_t s = 0; s < steps; ++s) {
      const double k1x = fx(x, y), k1y = fy(x, y);
      const double k2x = fx(x + 0.5 * h * k1x, y + 0.5 * h * k1y);
      const double k2y = fy(x + 0.5 * h * k1x, y + 0.5 * h * k1y);
      const double k3x = fx(x + 0.5 * h * k2x, y + 0.5 * h * k2y);
      const double k3y = fy(x + 0.5 * h * k2x, y + 0.5 * h * k2y);
      const double k4x = fx(x + h * k3x, y + h * k3y);
      const double k4y = fy(x + h * k3x, y + h * k3y);
      x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
      y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
      if (!std::isfinite(x) || !std::isfinite(y) ||
          std::abs(x) > spec.blowup_limit || std::abs(y) > spec.blowup_limit)
        return std::nullopt;
    }
    t = target;
    out.emplace_back(x, y);
  }
  return out;
}

/// Statistic vector {x1, y1, ..., xk, yk} with observation noise.
inline std::optional<std::vector<double>> lv_solve_and_observe(
    const LotkaVolterraSpec& spec, double a, double b, Rng& rng) {
  const auto states = lv_integrate(spec, a, b);
  if (!states) return std::nullopt;
  std::vector<double> out;
  out.reserve(2 * states->size());
  for (const auto& [x, y] : *states) {
    out.push_back(x + rng.normal(0.0, spec.noise_sd));
    out.push_back(y + rng.normal(0.0, spec.noise_sd));
  }
  return out;
}

inline ModelSpec make_lotka_volterra_model(const LotkaVolterraSpec& spec) {
  spec.validate();
  ModelSpec m;
  m.name = "lotka-volterra";
  m.param_names = {"a", "b"};
  for (std::size_t i = 1; i <= spec.times.size(); ++i) {
    m.stat_names.push_back("x" + std::to_string(i));
    m.stat_names.push_back("y" + std::to_string(i));
  }
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
    return lv_solve_and_observe(spec, theta[0], theta[1], rng);
  };
  return m;
}

}  // namespace rfabc
