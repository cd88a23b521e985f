#pragma once

// Forecast metrics and the Friedman / Nemenyi multi-method comparison.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cnnlstm/core.hpp"

namespace cnnlstm::eval {

namespace detail {

inline void check_pair(std::span<const double> predicted, std::span<const double> actual, const char* what) {
  if (predicted.size() != actual.size()) {
    throw ConfigError(std::string(what) + ": length mismatch (" + std::to_string(predicted.size()) + " vs " +
                      std::to_string(actual.size()) + ")");
  }
  if (predicted.empty()) throw ConfigError(std::string(what) + ": empty input");
}

}  // namespace detail

inline double mae(std::span<const double> predicted, std::span<const double> actual) {
  detail::check_pair(predicted, actual, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(predicted[i] - actual[i]);
  return s / static_cast<double>(actual.size());
}

inline double mse(std::span<const double> predicted, std::span<const double> actual) {
  detail::check_pair(predicted, actual, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += (predicted[i] - actual[i]) * (predicted[i] - actual[i]);
  return s / static_cast<double>(actual.size());
}

/// 1 - SS_res / SS_tot, SS_tot about the mean of `actual`.
inline double r_squared(std::span<const double> predicted, std::span<const double> actual) {
  detail::check_pair(predicted, actual, "r_squared");
  const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_res += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  if (ss_tot == 0.0) throw DegenerateVariance("r_squared: actual series is constant");
  return 1.0 - ss_res / ss_tot;
}

struct MetricReport {
  double mae = 0.0;
  double mse = 0.0;
  std::optional<double> r_squared;  // empty when the actual series is constant
  std::size_t n = 0;
};

inline MetricReport metric_report(std::span<const double> predicted, std::span<const double> actual) {
  MetricReport r{mae(predicted, actual), mse(predicted, actual), std::nullopt, actual.size()};
  try {
    r.r_squared = r_squared(predicted, actual);
  } catch (const DegenerateVariance&) {
  }
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  return {{"mae", r.mae},
          {"mse", r.mse},
          {"r_squared", r.r_squared ? nlohmann::json(*r.r_squared) : nlohmann::json(nullptr)},
          {"n", r.n}};
}

/// Per-test ranks; rank 1 is the lowest loss, ties share the mean of their positions.
struct RankMatrix {
  std::vector<std::string> methods;  // k
  std::vector<std::string> tests;    // N
  std::vector<std::vector<double>> scores;  // N x k
  std::vector<std::vector<double>> ranks;   // N x k

  std::size_t k() const noexcept { return methods.size(); }
  std::size_t n() const noexcept { return tests.size(); }

  std::vector<double> rank_sums() const {
    std::vector<double> out(k(), 0.0);
    for (const auto& row : ranks) {
      for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j];
    }
    return out;
  }

  std::vector<double> average_ranks() const {
    auto out = rank_sums();
    for (auto& v : out) v /= static_cast<double>(n());
    return out;
  }
};

inline std::vector<double> rank_row(std::span<const double> row) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
  std::vector<double> ranks(row.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && row[order[j + 1]] == row[order[i]]) ++j;
    // positions i..j (0-based) share rank mean((i+1)..(j+1))
    const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = shared;
    i = j + 1;
  }
  return ranks;
}

inline RankMatrix rank_methods(std::vector<std::vector<double>> scores, std::vector<std::string> methods = {},
                               std::vector<std::string> tests = {}) {
  if (scores.empty()) throw ConfigError("rank_methods: no tests");
  const std::size_t k = scores.front().size();
  if (methods.empty()) {
    for (std::size_t j = 0; j < k; ++j) methods.push_back("m" + std::to_string(j + 1));
  }
  if (tests.empty()) {
    for (std::size_t i = 0; i < scores.size(); ++i) tests.push_back("t" + std::to_string(i + 1));
  }
  if (methods.size() != k || tests.size() != scores.size()) throw ConfigError("rank_methods: label count mismatch");
  RankMatrix m{std::move(methods), std::move(tests), std::move(scores), {}};
  for (std::size_t i = 0; i < m.scores.size(); ++i) {
    const auto& row = m.scores[i];
    if (row.size() != k) throw ConfigError("rank_methods: ragged score matrix at test '" + m.tests[i] + "'");
    for (double v : row) {
      if (std::isnan(v)) throw DataError("rank_methods: NaN score in test '" + m.tests[i] + "'");
    }
    m.ranks.push_back(rank_row(row));
  }
  return m;
}

/// chi2_F = 12 / (N k (k+1)) * sum_i R_i^2 - 3 N (k+1), with R_i the rank SUM of method i.
inline double friedman_statistic(const RankMatrix& m) {
  const double n = static_cast<double>(m.n());
  const double k = static_cast<double>(m.k());
  double sum_sq = 0.0;
  for (double r : m.rank_sums()) sum_sq += r * r;
  return 12.0 / (n * k * (k + 1.0)) * sum_sq - 3.0 * n * (k + 1.0);
}

/// Upper 5% points of chi-square, df = 1..30.
inline constexpr double kChiSquare95[] = {3.841,  5.991,  7.815,  9.488,  11.070, 12.592, 14.067, 15.507,
                                          16.919, 18.307, 19.675, 21.026, 22.362, 23.685, 24.996, 26.296,
                                          27.587, 28.869, 30.144, 31.410, 32.671, 33.924, 35.172, 36.415,
                                          37.652, 38.885, 40.113, 41.337, 42.557, 43.773};

inline double chi_square_critical_95(std::size_t df) {
  if (df < 1 || df > std::size(kChiSquare95)) {
    throw ConfigError("chi-square table covers df 1..30, got " + std::to_string(df));
  }
  return kChiSquare95[df - 1];
}

struct FriedmanResult {
  double statistic = 0.0;
  std::size_t df = 0;
  double critical_value = 0.0;  // alpha = 0.05
  bool rejected = false;
};

inline FriedmanResult friedman_test(const RankMatrix& m) {
  FriedmanResult r;
  r.statistic = friedman_statistic(m);
  r.df = m.k() - 1;
  r.critical_value = chi_square_critical_95(r.df);
  r.rejected = r.statistic > r.critical_value;
  return r;
}

/// Studentized range quantiles divided by sqrt(2), k = 2..10.
inline constexpr double kNemenyiQ05[] = {1.960, 2.344, 2.569, 2.728, 2.850, 2.948, 3.031, 3.102, 3.164};
inline constexpr double kNemenyiQ10[] = {1.645, 2.052, 2.291, 2.460, 2.589, 2.693, 2.780, 2.855, 2.920};

inline double nemenyi_q(std::size_t k, double alpha) {
  if (k < 2 || k > 10) throw ConfigError("Nemenyi q table covers k = 2..10, got " + std::to_string(k));
  if (alpha == 0.05) return kNemenyiQ05[k - 2];
  if (alpha == 0.10) return kNemenyiQ10[k - 2];
  throw ConfigError("Nemenyi q table covers alpha 0.05 and 0.10, got " + format_double(alpha));
}

/// CD = q * sqrt(k (k+1) / (6 N)) with an explicit q.
inline double nemenyi_cd_q(std::size_t k, std::size_t n, double q) {
  if (k < 2 || n < 1) throw ConfigError("nemenyi_cd: need k >= 2 and N >= 1");
  if (!(q > 0.0)) throw ConfigError("nemenyi_cd: q must be positive");
  const double kk = static_cast<double>(k);
  return q * std::sqrt(kk * (kk + 1.0) / (6.0 * static_cast<double>(n)));
}

inline double nemenyi_cd(std::size_t k, std::size_t n, double alpha = 0.05) {
  return nemenyi_cd_q(k, n, nemenyi_q(k, alpha));
}

struct ComparisonResult {
  RankMatrix ranks;
  FriedmanResult friedman;
  double alpha = 0.05;
  double q = 0.0;
  double cd = 0.0;
  std::vector<double> average_ranks;
  std::vector<std::vector<bool>> significant;  // k x k, |R_i - R_j| > CD
};

/// Ranks, Friedman test and Nemenyi CD. CD and the pairwise matrix are always
/// filled; `friedman.rejected` says whether the omnibus test licenses reading them.
inline ComparisonResult compare_methods(std::vector<std::vector<double>> scores, std::vector<std::string> methods,
                                        std::vector<std::string> tests = {}, double alpha = 0.05,
                                        std::optional<double> q = std::nullopt) {
  ComparisonResult out;
  out.ranks = rank_methods(std::move(scores), std::move(methods), std::move(tests));
  if (out.ranks.k() < 2 || out.ranks.n() < 2) throw ConfigError("compare_methods: need at least 2 methods and 2 tests");
  out.friedman = friedman_test(out.ranks);
  out.alpha = alpha;
  out.q = q ? *q : nemenyi_q(out.ranks.k(), alpha);
  out.cd = nemenyi_cd_q(out.ranks.k(), out.ranks.n(), out.q);
  out.average_ranks = out.ranks.average_ranks();
  const std::size_t k = out.ranks.k();
  out.significant.assign(k, std::vector<bool>(k, false));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i != j) out.significant[i][j] = std::abs(out.average_ranks[i] - out.average_ranks[j]) > out.cd;
    }
  }
  return out;
}

inline nlohmann::json to_json(const ComparisonResult& c) {
  nlohmann::json avg = nlohmann::json::array();
  for (std::size_t j = 0; j < c.ranks.k(); ++j) {
    avg.push_back({{"method", c.ranks.methods[j]}, {"average_rank", c.average_ranks[j]}});
  }
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < c.ranks.k(); ++i) {
    for (std::size_t j = i + 1; j < c.ranks.k(); ++j) {
      pairs.push_back({{"a", c.ranks.methods[i]},
                       {"b", c.ranks.methods[j]},
                       {"rank_difference", std::abs(c.average_ranks[i] - c.average_ranks[j])},
                       {"significant", static_cast<bool>(c.significant[i][j])}});
    }
  }
  return {{"methods", c.ranks.methods},
          {"k", c.ranks.k()},
          {"n", c.ranks.n()},
          {"friedman_statistic", c.friedman.statistic},
          {"chi_square_df", c.friedman.df},
          {"chi_square_critical_0.05", c.friedman.critical_value},
          {"null_rejected", c.friedman.rejected},
          {"alpha", c.alpha},
          {"q", c.q},
          {"critical_difference", c.cd},
          {"average_ranks", std::move(avg)},
          {"pairwise", std::move(pairs)}};
}

/// method,average_rank rows followed by a cd row, for drawing a CD diagram.
inline std::string cd_diagram_csv(const ComparisonResult& c) {
  std::string out = "method,average_rank\n";
  for (std::size_t j = 0; j < c.ranks.k(); ++j) {
    out += c.ranks.methods[j] + "," + format_double(c.average_ranks[j]) + "\n";
  }
  out += "CD," + format_double(c.cd) + "\n";
  return out;
}

struct ScoreTable {
  std::vector<std::string> methods;
  std::vector<std::string> tests;
  std::vector<std::vector<double>> scores;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Header: first cell (ignored label), then one column per method. Rows: test name, scores.
inline ScoreTable read_score_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open score matrix");
  ScoreTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (t.methods.empty()) {
      if (cells.size() < 3) throw DataError(path + ":" + std::to_string(line_no) + ": need a label and >= 2 methods");
      t.methods.assign(cells.begin() + 1, cells.end());
      continue;
    }
    if (cells.size() != t.methods.size() + 1) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.methods.size() + 1) +
                      " cells, found " + std::to_string(cells.size()));
    }
    t.tests.push_back(cells[0]);
    std::vector<double> row;
    for (std::size_t j = 1; j < cells.size(); ++j) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cells[j], &used));
        if (used != cells[j].size()) throw std::invalid_argument(cells[j]);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": non-numeric score '" + cells[j] + "'");
      }
      if (!std::isfinite(row.back())) {
        throw DataError(path + ":" + std::to_string(line_no) + ": non-finite score '" + cells[j] + "'");
      }
    }
    t.scores.push_back(std::move(row));
  }
  if (t.methods.empty()) throw DataError(path + ": empty score matrix");
  if (t.scores.size() < 2) throw DataError(path + ": need at least 2 test rows");
  return t;
}

}  // namespace cnnlstm::eval
