#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfabc/model.hpp"
#include "rfabc/rng.hpp"

namespace rfabc {

/// Michaelis-Menten enzyme kinetics, state X = [E, S, ES, P]:
///   reaction 1: ES -> E + P   at rate c1 * ES
///   reaction 2: E + S -> ES   at rate (10^c2 / (nA * vol)) * E * S
///   reaction 3: ES -> E + S   at rate 10^c3 * ES
/// Initial counts floor the concentrations 2e-7 and 5e-7 mol/L in a volume
/// of 1e-15 L: E(0) = 120, S(0) = 301.
struct MichaelisMentenSpec {
  double avogadro = 6.023e23;
  double volume = 1e-15;
  long e0 = 120;
  long s0 = 301;
  long es0 = 0;
  long p0 = 0;
  std::vector<double> times = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double c1_low = 0.0, c1_high = 1.0;
  double c2_low = 5.0, c2_high = 7.0;
  double c3_low = -5.0, c3_high = -3.0;

  void validate() const {
    if (e0 < 0 || s0 < 0 || es0 < 0 || p0 < 0)
      throw std::invalid_argument("MichaelisMentenSpec: nonnegative counts");
    if (times.empty()) throw std::invalid_argument("MichaelisMentenSpec: times");
    double prev = 0.0;
    for (double t : times) {
      if (!(t > prev))
        throw std::invalid_argument("MichaelisMentenSpec: times strictly increasing");
      prev = t;
    }
  }
};

/// Gillespie simulation recording [E, S, ES, P] at each observation time
/// (40 statistics for the default 10 times). Zero total propensity freezes
/// the state.
inline std::vector<double> mm_simulate(const MichaelisMentenSpec& spec,
                                       double c1, double c2, double c3,
                                       Rng& rng) {
  spec.validate();
  const double rate1 = c1;
  const double rate2 = std::pow(10.0, c2) / (spec.avogadro * spec.volume);
  const double rate3 = std::pow(10.0, c3);
  if (!std::isfinite(rate1) || !std::isfinite(rate2) || !std::isfinite(rate3))
    throw std::invalid_argument("mm_simulate: non-finite propensity rate");
  long e = spec.e0, s = spec.s0, es = spec.es0, p = spec.p0;
  double t = 0.0;
  std::size_t idx = 0;
  std::vector<double> out;
  out.reserve(4 * spec.times.size());
  auto record = [&] {
    out.push_back(double(e));
    out.push_back(double(s));
    out.push_back(double(es));
    out.push_back(double(p));
  };
  while (idx < spec.times.size()) {
    const double a1 = rate1 * double(es);
    const double a2 = rate2 * double(e) * double(s);
    const double a3 = rate3 * double(es);
    const double total = a1 + a2 + a3;
    if (!(total > 0.0)) {
      for (; idx < spec.times.size(); ++idx) record();
      break;
    }
    const double event_t = t + rng.exponential(total);
    while (idx < spec.times.size() && spec.times[idx] < event_t) {
      record();
      ++idx;
    }
    if (idx >= spec.times.size()) break;
    const double u = rng.uniform() * total;
    if (u < a1) {
      es -= 1; e += 1; p += 1;  // catalysis
    } else if (u < a1 + a2) {
      e -= 1; s -= 1; es += 1;  // binding
    } else {
      es -= 1; e += 1; s += 1;  // unbinding
    }
    t = event_t;
  }
  return out;
}

inline ModelSpec make_michaelis_menten_model(const MichaelisMentenSpec& spec) {
  spec.validate();
  ModelSpec m;
  m.name = "michaelis-menten";
  m.param_names = {"c1", "c2", "c3"};
  for (std::size_t i = 1; i <= spec.times.size(); ++i)
    for (const char* sp : {"E", "S", "ES", "P"})
      m.stat_names.push_back(std::string(sp) + std::to_string(i));
  m.sample_prior = [spec](Rng& rng) {
    return std::vector<double>{rng.uniform(spec.c1_low, spec.c1_high),
                               rng.uniform(spec.c2_low, spec.c2_high),
                               rng.uniform(spec.c3_low, spec.c3_high)};
  };
  m.prior_log_density = [spec](std::span<const double> theta) {
    const std::array<std::pair<double, double>, 3> bounds{
        std::pair{spec.c1_low, spec.c1_high},
        std::pair{spec.c2_low, spec.c2_high},
        std::pair{spec.c3_low, spec.c3_high}};
    double lp = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      if (theta[i] <= bounds[i].first || theta[i] >= bounds[i].second)
        return -std::numeric_limits<double>::infinity();
      lp -= std::log(bounds[i].second - bounds[i].first);
    }
    return lp;
  };
  m.simulate_fn = [spec](std::span<const double> theta,
                         Rng& rng) -> std::optional<std::vector<double>> {
    return mm_simulate(spec, theta[0], theta[1], theta[2], rng);
  };
  return m;
}

}  // namespace rfabc
