#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "helpers.hpp"
#include "rfabc/forest_rf.hpp"
#include "rfabc/models/birth_death.hpp"
#include "rfabc/models/coalescent.hpp"
#include "rfabc/table.hpp"
#include "rfabc/thread.hpp"

using namespace rfabc;

namespace {
std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_SUITE_BEGIN("tables");

TEST_CASE("reference table construction enforces invariants") {
  Matrix p(2, 1), s(2, 1);
  p(0, 0) = 1.0;
  p(1, 0) = 2.0;
  s(0, 0) = 3.0;
  s(1, 0) = 4.0;
  CHECK_NOTHROW(ReferenceTable(p, s, {"a"}, {"x"}));
  CHECK_THROWS_AS(ReferenceTable(Matrix(0, 1), Matrix(0, 1), {"a"}, {"x"}),
                  std::invalid_argument);
  Matrix bad = s;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ReferenceTable(p, bad, {"a"}, {"x"}), std::invalid_argument);
  Matrix p2(2, 2, 1.0);
  CHECK_THROWS_AS(ReferenceTable(p2, s, {"a", "a"}, {"x"}),
                  std::invalid_argument);
}

TEST_CASE("weighted particles validate weights") {
  Matrix p(2, 1);
  p(1, 0) = 1.0;
  CHECK_NOTHROW(WeightedParticles(p, {0.5, 0.5}));
  CHECK_THROWS_AS(WeightedParticles(p, {0.7, 0.7}), std::invalid_argument);
  CHECK_THROWS_AS(WeightedParticles(p, {1.5, -0.5}), std::invalid_argument);
  CHECK_THROWS_AS(WeightedParticles::normalized(p, {0.0, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("constant-statistic stub: identical stats, distinct parameters") {
  const auto model = testing::constant_stat_model();
  const auto table = build_reference_table(model, model.sample_prior, 3, 7);
  REQUIRE(table.n_rows() == 3);
  CHECK(table.stats()(0, 0) == 1.0);
  CHECK(table.stats()(1, 0) == 1.0);
  CHECK(table.stats()(2, 0) == 1.0);
  std::set<double> distinct{table.params()(0, 0), table.params()(1, 0),
                            table.params()(2, 0)};
  CHECK(distinct.size() == 3);
}

TEST_CASE("coalescent reference table has the documented schema") {
  CoalescentSpec spec;
  const auto model = make_coalescent_model(spec);
  const auto table =
      build_reference_table(model, model.sample_prior, 10000, 11);
  CHECK(table.n_rows() == 10000);
  REQUIRE(table.param_names() == std::vector<std::string>{"theta"});
  REQUIRE(table.stat_names() == std::vector<std::string>{"C"});
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    CHECK(table.params()(i, 0) > 1.0);
    CHECK(table.params()(i, 0) < 20.0);
  }
}

TEST_CASE("birth-death table rows track the analytic mean") {
  BirthDeathSpec spec;
  const auto model = make_birth_death_model(spec);
  const double lambda = 1.0, mu = 0.5;
  auto fixed_sampler = [&](Rng&) { return std::vector<double>{lambda, mu}; };
  const std::size_t n = 100;
  const auto table = build_reference_table(model, fixed_sampler, n, 19);
  // times[4] = 1.0 and times[24] = 5.0
  for (std::size_t col : {std::size_t(4), std::size_t(24)}) {
    const double t = spec.times[col];
    const double expected = 10.0 * std::exp((lambda - mu) * t);
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += table.stats()(i, col);
    mean /= double(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = table.stats()(i, col) - mean;
      var += d * d;
    }
    var /= double(n - 1);
    const double se = std::sqrt(var / double(n));
    CHECK(std::abs(mean - expected) < 3.0 * se);
  }
}

TEST_CASE("simulator failures retry and eventually abort with diagnostics") {
  auto model = testing::flaky_model(0.5);
  BuildStats stats;
  const auto table =
      build_reference_table(model, model.sample_prior, 50, 3, &stats);
  CHECK(table.n_rows() == 50);
  CHECK(stats.sim_calls > 50);
  CHECK(stats.sim_calls == 50 + stats.sim_failures);
  for (std::size_t i = 0; i < 50; ++i) CHECK(table.params()(i, 0) >= 0.5);

  auto always_fails = testing::flaky_model(2.0);
  CHECK_THROWS_WITH_AS(
      build_reference_table(always_fails, always_fails.sample_prior, 2, 3,
                            nullptr, 10),
      doctest::Contains("simulator failed"), std::runtime_error);
}

TEST_CASE("table construction is bit-identical across runs and thread counts") {
  CoalescentSpec spec;
  spec.stats = CoalescentStats::kSitesAndSpectrum;
  spec.n_sequences = 50;
  spec.sfs_cutoff = 7;
  const auto model = make_coalescent_model(spec);
  set_max_threads(1);
  const auto serial = build_reference_table(model, model.sample_prior, 500, 5);
  set_max_threads(2);
  const auto threaded = build_reference_table(model, model.sample_prior, 500, 5);
  const auto repeat = build_reference_table(model, model.sample_prior, 500, 5);
  set_max_threads(0);
  CHECK(serial == threaded);
  CHECK(serial == repeat);
}

TEST_CASE("weighted_resample: point mass, zero weight, support containment") {
  Matrix p(2, 2);
  p(0, 0) = 1.0;
  p(0, 1) = 2.0;
  p(1, 0) = 3.0;
  p(1, 1) = 4.0;

  const WeightedParticles point(p, {1.0, 0.0});
  const Matrix five = weighted_resample(point, 5, 99);
  REQUIRE(five.rows() == 5);
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(five(r, 0) == 1.0);
    CHECK(five(r, 1) == 2.0);
  }

  const Matrix three = weighted_resample(point, 3, 123);
  for (std::size_t r = 0; r < 3; ++r) CHECK(three(r, 0) != 3.0);

  const WeightedParticles both(p, {0.4, 0.6});
  const Matrix sample = weighted_resample(both, 50, 7);
  for (std::size_t r = 0; r < 50; ++r) {
    const bool row0 = sample(r, 0) == 1.0 && sample(r, 1) == 2.0;
    const bool row1 = sample(r, 0) == 3.0 && sample(r, 1) == 4.0;
    CHECK((row0 || row1));
  }
}

TEST_CASE("weighted_resample: law of large numbers at m = 1e5") {
  Matrix p(2, 1);
  p(1, 0) = 1.0;
  const WeightedParticles half(p, {0.5, 0.5});
  const Matrix sample = weighted_resample(half, 100000, 2024);
  double count = 0.0;
  for (std::size_t r = 0; r < sample.rows(); ++r) count += sample(r, 0);
  const double freq = count / double(sample.rows());
  CHECK(std::abs(freq - 0.5) < 0.01);
}

TEST_CASE("weighted_resample: chi-square goodness of fit") {
  Matrix p(4, 1);
  for (std::size_t i = 0; i < 4; ++i) p(i, 0) = double(i);
  const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  const WeightedParticles particles(p, std::vector<double>(w));
  const std::size_t m = 100000;
  const Matrix sample = weighted_resample(particles, m, 31);
  std::vector<double> counts(4, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    counts[static_cast<std::size_t>(sample(r, 0))] += 1.0;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double expected = w[i] * double(m);
    chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  }
  CHECK(chi2 < 16.266);  // chi-square df=3, p = 0.001
}

TEST_CASE("csv round trip is exact and errors are distinct") {
  Matrix p(2, 1), s(2, 1);
  p(0, 0) = 0.1;
  p(1, 0) = -1.0 / 3.0;
  s(0, 0) = 1e-17;
  s(1, 0) = 12345.678901234567;
  const ReferenceTable table(p, s, {"a"}, {"x"});
  const std::string path = temp_path("rfabc_roundtrip.csv");
  save_table(table, path);
  const ReferenceTable loaded = load_table(path);
  CHECK(loaded == table);

  auto write_file = [&](const std::string& body) {
    const std::string fp = temp_path("rfabc_bad.csv");
    std::FILE* f = std::fopen(fp.c_str(), "w");
    std::fputs(body.c_str(), f);
    std::fclose(f);
    return fp;
  };
  CHECK_THROWS_AS(load_table(write_file("bogus:a,stat:x\n1,2\n")),
                  MalformedHeaderError);
  CHECK_THROWS_AS(load_table(write_file("stat:x,param:a\n1,2\n")),
                  MalformedHeaderError);
  CHECK_THROWS_AS(load_table(write_file("param:a,stat:x\n1,2,3\n")),
                  RowLengthError);
  CHECK_THROWS_AS(load_table(write_file("param:a,stat:x\n1,zebra\n")),
                  NonNumericCellError);
}

TEST_CASE("round-tripped coalescent table reproduces forest weights exactly") {
  CoalescentSpec spec;
  const auto model = make_coalescent_model(spec);
  const auto table =
      build_reference_table(model, model.sample_prior, 10000, 77);
  const std::string path = temp_path("rfabc_coal.csv");
  save_table(table, path);
  const auto loaded = load_table(path);
  REQUIRE(loaded == table);

  RfConfig cfg;
  cfg.n_trees = 20;
  cfg.seed = 5;
  const Observation obs(std::vector<double>{34.0});
  const auto w1 = rf_weights(grow_forest(table, 0, cfg), table, obs);
  const auto w2 = rf_weights(grow_forest(loaded, 0, cfg), loaded, obs);
  REQUIRE(w1.n() == w2.n());
  for (std::size_t i = 0; i < w1.n(); ++i)
    CHECK(w1.weights()[i] == w2.weights()[i]);
}

TEST_SUITE_END();
