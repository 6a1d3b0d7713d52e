#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfabc/model.hpp"
#include "rfabc/numeric.hpp"
#include "rfabc/rng.hpp"

namespace rfabc {

/// Which summary statistics the coalescent model reports: the segregating-site
/// count C, C plus the truncated site frequency spectrum, or the spectrum
/// alone.
enum class CoalescentStats { kSegregatingSites, kSitesAndSpectrum, kSpectrumOnly };

struct CoalescentSpec {
  int n_sequences = 1000;
  int sfs_cutoff = 31;  // m: report f(1..m)
  CoalescentStats stats = CoalescentStats::kSegregatingSites;
  double prior_low = 1.0;
  double prior_high = 20.0;

  void validate() const {
    if (n_sequences < 2)
      throw std::invalid_argument("CoalescentSpec: n_sequences >= 2");
    if (sfs_cutoff < 1 || sfs_cutoff > n_sequences - 1)
      throw std::invalid_argument("CoalescentSpec: 1 <= m <= n-1");
    if (!(prior_low < prior_high))
      throw std::invalid_argument("CoalescentSpec: prior_low < prior_high");
  }
};

inline double harmonic_number(int n) {
  double h = 0.0;
  for (int j = 1; j <= n; ++j) h += 1.0 / double(j);
  return h;
}

/// f(j) ~ independent Poisson(theta/j) for j = 1..n-1; C = sum_j f(j), so C
/// itself is Poisson with mean theta * H_{n-1}. When only C is reported it is
/// drawn directly from that Poisson, which has the identical distribution.
inline std::vector<double> coalescent_simulate(const CoalescentSpec& spec,
                                               double theta, Rng& rng) {
  spec.validate();
  if (!(theta > 0.0))
    throw std::invalid_argument("coalescent_simulate: theta > 0");
  if (spec.stats == CoalescentStats::kSegregatingSites) {
    const double mean = theta * harmonic_number(spec.n_sequences - 1);
    return {double(rng.poisson(mean))};
  }
  double c = 0.0;
  std::vector<double> sfs(static_cast<std::size_t>(spec.sfs_cutoff), 0.0);
  for (int j = 1; j <= spec.n_sequences - 1; ++j) {
    const double fj = double(rng.poisson(theta / double(j)));
    c += fj;
    if (j <= spec.sfs_cutoff) sfs[static_cast<std::size_t>(j - 1)] = fj;
  }
  std::vector<double> out;
  if (spec.stats == CoalescentStats::kSitesAndSpectrum) out.push_back(c);
  out.insert(out.end(), sfs.begin(), sfs.end());
  return out;
}

/// Normalized density on a uniform grid over (a, b); trapezoid quadrature for
/// the normalizer, moments and quantiles.
struct GridDensity {
  std::vector<double> grid;
  std::vector<double> density;

  double step() const { return grid[1] - grid[0]; }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
      m += 0.5 * (grid[i] * density[i] + grid[i + 1] * density[i + 1]) * step();
    return m;
  }

  double variance() const {
    const double m = mean();
    double v = 0.0;
    auto sq = [&](std::size_t i) {
      return (grid[i] - m) * (grid[i] - m) * density[i];
    };
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
      v += 0.5 * (sq(i) + sq(i + 1)) * step();
    return v;
  }

  // Inverse-CDF lookup on the trapezoid cumulative.
  double quantile(double level) const {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
      const double seg = 0.5 * (density[i] + density[i + 1]) * step();
      if (acc + seg >= level) {
        const double frac = seg > 0.0 ? (level - acc) / seg : 0.0;
        return grid[i] + frac * step();
      }
      acc += seg;
    }
    return grid.back();
  }
};

/// Posterior of theta on (a, b) given a Poisson count c with mean theta * h.
inline GridDensity coalescent_posterior_from_count(long c_obs, double h,
                                                   double a, double b,
                                                   std::size_t grid_points) {
  if (!(a < b)) throw std::invalid_argument("coalescent_exact_posterior: a < b");
  if (grid_points < 3)
    throw std::invalid_argument("coalescent_exact_posterior: degenerate grid");
  if (c_obs < 0)
    throw std::invalid_argument("coalescent_exact_posterior: c >= 0");
  GridDensity out;
  out.grid.resize(grid_points);
  out.density.resize(grid_points);
  const double dx = (b - a) / double(grid_points - 1);
  double peak = -std::numeric_limits<double>::infinity();
  std::vector<double> logd(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double theta = a + double(i) * dx;
    out.grid[i] = theta;
    const double mean = theta * h;
    logd[i] = mean > 0.0
                  ? double(c_obs) * std::log(mean) - mean - std::lgamma(double(c_obs) + 1.0)
                  : (c_obs == 0 ? 0.0 : -std::numeric_limits<double>::infinity());
    peak = std::max(peak, logd[i]);
  }
  double norm = 0.0;
  for (std::size_t i = 0; i < grid_points; ++i)
    out.density[i] = std::isfinite(logd[i]) ? std::exp(logd[i] - peak) : 0.0;
  for (std::size_t i = 0; i + 1 < grid_points; ++i)
    norm += 0.5 * (out.density[i] + out.density[i + 1]) * dx;
  if (!(norm > 0.0))
    throw std::runtime_error("coalescent_exact_posterior: zero mass on grid");
  for (auto& d : out.density) d /= norm;
  return out;
}

/// Posterior of theta given c segregating sites under the Poisson
/// approximation with uniform prior on (a, b).
inline GridDensity coalescent_exact_posterior(long c_obs, int n_sequences,
                                              double a, double b,
                                              std::size_t grid_points = 4001) {
  return coalescent_posterior_from_count(c_obs, harmonic_number(n_sequences - 1),
                                         a, b, grid_points);
}

inline std::vector<std::string> coalescent_stat_names(const CoalescentSpec& spec) {
  std::vector<std::string> names;
  if (spec.stats != CoalescentStats::kSpectrumOnly) names.push_back("C");
  if (spec.stats != CoalescentStats::kSegregatingSites)
    for (int j = 1; j <= spec.sfs_cutoff; ++j)
      names.push_back("f" + std::to_string(j));
  return names;
}

inline ModelSpec make_coalescent_model(const CoalescentSpec& spec) {
  spec.validate();
  ModelSpec m;
  m.name = "coalescent";
  m.param_names = {"theta"};
  m.stat_names = coalescent_stat_names(spec);
  m.sample_prior = [spec](Rng& rng) {
    return std::vector<double>{rng.uniform(spec.prior_low, spec.prior_high)};
  };
  m.prior_log_density = [spec](std::span<const double> theta) {
    if (theta[0] <= spec.prior_low || theta[0] >= spec.prior_high)
      return -std::numeric_limits<double>::infinity();
    return -std::log(spec.prior_high - spec.prior_low);
  };
  m.simulate_fn = [spec](std::span<const double> theta,
                         Rng& rng) -> std::optional<std::vector<double>> {
    return coalescent_simulate(spec, theta[0], rng);
  };
  return m;
}

}  // namespace rfabc
