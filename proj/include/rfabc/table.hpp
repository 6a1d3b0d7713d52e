#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfabc/matrix.hpp"
#include "rfabc/model.hpp"
#include "rfabc/numeric.hpp"
#include "rfabc/rng.hpp"
#include "rfabc/thread.hpp"

namespace rfabc {

struct TableIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedHeaderError : TableIoError {
  using TableIoError::TableIoError;
};
struct RowLengthError : TableIoError {
  using TableIoError::TableIoError;
};
struct NonNumericCellError : TableIoError {
  using TableIoError::TableIoError;
};

namespace detail {
inline void check_unique(const std::vector<std::string>& names,
                         const char* block) {
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second)
      throw std::invalid_argument(std::string("duplicate ") + block +
                                  " label: " + n);
}
}  // namespace detail

/// N rows of (parameter vector, summary-statistic vector) with named
/// columns. Immutable after construction; all entries finite.
class ReferenceTable {
 public:
  ReferenceTable(Matrix params, Matrix stats,
                 std::vector<std::string> param_names,
                 std::vector<std::string> stat_names)
      : params_(std::move(params)),
        stats_(std::move(stats)),
        param_names_(std::move(param_names)),
        stat_names_(std::move(stat_names)) {
    if (params_.rows() == 0 || params_.rows() != stats_.rows())
      throw std::invalid_argument("ReferenceTable: need N >= 1 matching rows");
    if (params_.cols() != param_names_.size() ||
        stats_.cols() != stat_names_.size())
      throw std::invalid_argument("ReferenceTable: name/column mismatch");
    if (params_.cols() == 0 || stats_.cols() == 0)
      throw std::invalid_argument("ReferenceTable: empty column block");
    if (!all_finite(params_.data()) || !all_finite(stats_.data()))
      throw std::invalid_argument("ReferenceTable: non-finite entry");
    detail::check_unique(param_names_, "param");
    detail::check_unique(stat_names_, "stat");
  }

  std::size_t n_rows() const { return params_.rows(); }
  std::size_t n_params() const { return params_.cols(); }
  std::size_t n_stats() const { return stats_.cols(); }
  const Matrix& params() const { return params_; }
  const Matrix& stats() const { return stats_; }
  const std::vector<std::string>& param_names() const { return param_names_; }
  const std::vector<std::string>& stat_names() const { return stat_names_; }

  friend bool operator==(const ReferenceTable&,
                         const ReferenceTable&) = default;

 private:
  Matrix params_;
  Matrix stats_;
  std::vector<std::string> param_names_;
  std::vector<std::string> stat_names_;
};

/// Parameter vectors with normalized weights; the universal posterior
/// representation.
class WeightedParticles {
 public:
  WeightedParticles(Matrix params, std::vector<double> weights)
      : params_(std::move(params)), weights_(std::move(weights)) {
    if (params_.rows() == 0 || params_.rows() != weights_.size())
      throw std::invalid_argument("WeightedParticles: bad sizes");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w))
        throw std::invalid_argument("WeightedParticles: negative weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("WeightedParticles: weights must sum to 1");
    if (!all_finite(params_.data()))
      throw std::invalid_argument("WeightedParticles: non-finite parameter");
  }

  static WeightedParticles normalized(Matrix params,
                                      std::vector<double> raw_weights) {
    double total = 0.0;
    for (double w : raw_weights) total += w;
    if (!(total > 0.0))
      throw std::invalid_argument("WeightedParticles: zero total weight");
    for (double& w : raw_weights) w /= total;
    return WeightedParticles(std::move(params), std::move(raw_weights));
  }

  static WeightedParticles uniform(Matrix params) {
    std::vector<double> w(params.rows(), 1.0 / double(params.rows()));
    return WeightedParticles(std::move(params), std::move(w));
  }

  std::size_t n() const { return params_.rows(); }
  std::size_t dim() const { return params_.cols(); }
  const Matrix& params() const { return params_; }
  const std::vector<double>& weights() const { return weights_; }

  double mean(std::size_t coord) const {
    return weighted_mean(params_.col(coord), weights_);
  }
  double variance(std::size_t coord) const {
    return weighted_variance(params_.col(coord), weights_);
  }
  double ess() const { return effective_sample_size(weights_); }

 private:
  Matrix params_;
  std::vector<double> weights_;
};

/// Observed statistic vector, aligned to the stat columns of the table it is
/// queried against.
class Observation {
 public:
  explicit Observation(std::vector<double> values)
      : values_(std::move(values)) {
    if (values_.empty() || !all_finite(values_))
      throw std::invalid_argument("Observation: empty or non-finite");
  }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<double> values_;
};

using ParameterSampler = std::function<std::vector<double>(Rng&)>;

struct BuildStats {
  std::uint64_t sim_calls = 0;
  std::uint64_t sim_failures = 0;
};

/// Samples n parameter vectors from `sampler`, simulates each and collects
/// statistics into a reference table. Row i draws from stream (seed, i), so
/// output is identical for any thread count. A failed simulation retries the
/// whole row (fresh parameter draw) up to retry_budget times.
inline ReferenceTable build_reference_table(const ModelSpec& model,
                                            const ParameterSampler& sampler,
                                            std::size_t n, std::uint64_t seed,
                                            BuildStats* stats = nullptr,
                                            int retry_budget = 100) {
  if (n == 0) throw std::invalid_argument("build_reference_table: n >= 1");
  const std::size_t np = model.n_params();
  const std::size_t ns = model.n_stats();
  Matrix params(n, np), statm(n, ns);
  std::atomic<std::uint64_t> calls{0}, failures{0};
  parallel_for(n, [&](std::size_t i) {
    Rng rng(substream(seed, i));
    for (int attempt = 0;; ++attempt) {
      std::vector<double> theta = sampler(rng);
      calls.fetch_add(1, std::memory_order_relaxed);
      auto s = model.simulate(theta, rng);
      if (s && all_finite(*s)) {
        if (theta.size() != np || s->size() != ns)
          throw std::runtime_error("build_reference_table: dimension mismatch");
        for (std::size_t c = 0; c < np; ++c) params(i, c) = theta[c];
        for (std::size_t c = 0; c < ns; ++c) statm(i, c) = (*s)[c];
        return;
      }
      failures.fetch_add(1, std::memory_order_relaxed);
      if (attempt >= retry_budget) {
        std::ostringstream msg;
        msg << "simulator failed " << retry_budget + 1
            << " times for row " << i << "; last theta = (";
        for (std::size_t c = 0; c < theta.size(); ++c)
          msg << (c ? ", " : "") << theta[c];
        msg << ")";
        throw std::runtime_error(msg.str());
      }
    }
  });
  if (stats) {
    stats->sim_calls = calls.load();
    stats->sim_failures = failures.load();
  }
  return ReferenceTable(std::move(params), std::move(statm),
                        model.param_names, model.stat_names);
}

/// Multinomial resample: m i.i.d. draws from the weighted particle set.
inline Matrix weighted_resample(const WeightedParticles& p, std::size_t m,
                                std::uint64_t seed) {
  std::vector<double> cdf(p.n());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.n(); ++i) {
    acc += p.weights()[i];
    cdf[i] = acc;
  }
  if (!(acc > 0.0))
    throw std::invalid_argument("weighted_resample: zero total weight");
  cdf.back() = 1.0;
  Rng rng(seed);
  Matrix out(m, p.dim());
  for (std::size_t r = 0; r < m; ++r) {
    const double u = rng.uniform();
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
    for (std::size_t c = 0; c < p.dim(); ++c) out(r, c) = p.params()(idx, c);
  }
  return out;
}

namespace detail {

inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_real(const std::string& cell, std::size_t line_no) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw NonNumericCellError("line " + std::to_string(line_no) +
                              ": non-numeric cell '" + cell + "'");
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Headered CSV, parameter columns before statistic columns, labels prefixed
/// "param:" / "stat:". Reals printed with 17 significant digits so the
/// round-trip is value-exact.
inline void save_table(const ReferenceTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw TableIoError("cannot open for write: " + path);
  for (std::size_t c = 0; c < t.n_params(); ++c)
    out << (c ? "," : "") << "param:" << t.param_names()[c];
  for (std::size_t c = 0; c < t.n_stats(); ++c)
    out << ",stat:" << t.stat_names()[c];
  out << "\n";
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    for (std::size_t c = 0; c < t.n_params(); ++c)
      out << (c ? "," : "") << detail::format_real(t.params()(r, c));
    for (std::size_t c = 0; c < t.n_stats(); ++c)
      out << "," << detail::format_real(t.stats()(r, c));
    out << "\n";
  }
  if (!out) throw TableIoError("write failed: " + path);
}

inline ReferenceTable load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TableIoError("cannot open for read: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw MalformedHeaderError("empty file: " + path);
  std::vector<std::string> param_names, stat_names;
  bool in_stats = false;
  for (const auto& tok : detail::split_csv(line)) {
    if (tok.rfind("param:", 0) == 0) {
      if (in_stats)
        throw MalformedHeaderError("param column after stat column");
      param_names.push_back(tok.substr(6));
    } else if (tok.rfind("stat:", 0) == 0) {
      in_stats = true;
      stat_names.push_back(tok.substr(5));
    } else {
      throw MalformedHeaderError("header label without param:/stat: prefix: '" +
                                 tok + "'");
    }
  }
  if (param_names.empty() || stat_names.empty())
    throw MalformedHeaderError("header needs at least one param and one stat");
  const std::size_t width = param_names.size() + stat_names.size();
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != width)
      throw RowLengthError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(width) + " cells, got " +
                           std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(width);
    for (const auto& cell : cells)
      row.push_back(detail::parse_real(cell, line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw TableIoError("table has no data rows: " + path);
  Matrix params(rows.size(), param_names.size());
  Matrix stats(rows.size(), stat_names.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < param_names.size(); ++c)
      params(r, c) = rows[r][c];
    for (std::size_t c = 0; c < stat_names.size(); ++c)
      stats(r, c) = rows[r][param_names.size() + c];
  }
  return ReferenceTable(std::move(params), std::move(stats),
                        std::move(param_names), std::move(stat_names));
}

}  // namespace rfabc
