#include "rfabc/models/birth_death.hpp"
#include "rfabc/experiment.hpp"
#include <cstdio>
using namespace rfabc;
int main() {
  BirthDeathSpec spec;
  const auto model = make_birth_death_model(spec);
  const auto obs = detail::load_observation("/root/proj/data/bd_demo.csv", model.stat_names);
  const int G = 240;
  const double lo = 1e-3, hi = 3.0;
  double norm = 0, ml = 0, mm = 0, vl = 0, vm = 0;
  std::vector<double> ll(G * G);
  double peak = -1e300;
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) {
      const double l = lo + (hi - lo) * (i + 0.5) / G;
      const double m = lo + (hi - lo) * (j + 0.5) / G;
      ll[i * G + j] = bd_loglikelihood(spec, obs.values(), l, m);
      peak = std::max(peak, ll[i * G + j]);
    }
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) {
      const double l = lo + (hi - lo) * (i + 0.5) / G;
      const double m = lo + (hi - lo) * (j + 0.5) / G;
      const double p = std::exp(ll[i * G + j] - peak);
      norm += p; ml += p * l; mm += p * m;
    }
  ml /= norm; mm /= norm;
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) {
      const double l = lo + (hi - lo) * (i + 0.5) / G;
      const double m = lo + (hi - lo) * (j + 0.5) / G;
      const double p = std::exp(ll[i * G + j] - peak);
      vl += p * (l - ml) * (l - ml); vm += p * (m - mm) * (m - mm);
    }
  std::printf("quadrature posterior: lambda %.4f sd %.4f | mu %.4f sd %.4f\n",
              ml, std::sqrt(vl / norm), mm, std::sqrt(vm / norm));
  return 0;
}
