#pragma once

// Loading, cleaning, scaling, splitting and windowing of daily series.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cnnlstm/core.hpp"
#include "cnnlstm/tensor.hpp"

namespace cnnlstm::timeseries {

using Date = std::chrono::sys_days;

/// In-memory missing marker.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return std::isnan(v); }

/// Parses strict `YYYY-MM-DD`.
inline std::optional<Date> parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [](std::string_view part, auto& out) {
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc{} && p == part.data() + part.size();
  };
  if (!num(s.substr(0, 4), y) || !num(s.substr(5, 2), m) || !num(s.substr(8, 2), d)) {
    return std::nullopt;
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                  std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

inline std::string format_date(Date date) {
  std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

struct Variable {
  std::string name;
  std::vector<double> values;
};

/// One region's daily series. Missing entries are NaN until imputed.
struct TimeSeriesDataset {
  std::string region_id;
  std::vector<Date> dates;
  std::vector<Variable> variables;
  /// Data rows read from the source file; dates.size() - source_rows gaps were filled in.
  std::size_t source_rows = 0;

  std::size_t length() const noexcept { return dates.size(); }

  const std::vector<double>& series(std::string_view name) const {
    for (const auto& v : variables) {
      if (v.name == name) return v.values;
    }
    throw ConfigError("unknown variable '" + std::string(name) + "'");
  }

  std::vector<double>& series(std::string_view name) {
    return const_cast<std::vector<double>&>(std::as_const(*this).series(name));
  }

  std::size_t missing_count() const {
    std::size_t n = 0;
    for (const auto& v : variables) n += std::count_if(v.values.begin(), v.values.end(), is_missing);
    return n;
  }

  /// Throws if the structural invariants do not hold.
  void validate() const {
    for (const auto& v : variables) {
      if (v.values.size() != dates.size()) {
        throw DataError("variable '" + v.name + "' has " + std::to_string(v.values.size()) +
                        " values for " + std::to_string(dates.size()) + " dates");
      }
    }
    for (std::size_t i = 1; i < dates.size(); ++i) {
      if (dates[i] - dates[i - 1] != std::chrono::days{1}) {
        throw DataError("dates are not a contiguous daily sequence at " + format_date(dates[i]));
      }
    }
  }
};

/// Which CSV columns to read. An empty variable list means every non-date column.
struct CsvSchema {
  std::string date_column = "date";
  std::vector<std::string> variables;
  std::string region_id;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_number(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Reads a daily CSV. Rows may be in any order; dates are sorted and gaps are
/// materialised as missing values. Empty cells and "NA" are missing.
inline TimeSeriesDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open file");

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ":1: empty file, expected a header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_commas(line);

  std::optional<std::size_t> date_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == schema.date_column) date_col = i;
  }
  if (!date_col) throw DataError(path + ":1: missing date column '" + schema.date_column + "'");

  std::vector<std::string> names = schema.variables;
  if (names.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i != *date_col) names.emplace_back(header[i]);
    }
  }
  if (names.empty()) throw DataError(path + ":1: no variable columns");
  std::vector<std::size_t> cols;
  for (const auto& n : names) {
    auto it = std::find(header.begin(), header.end(), n);
    if (it == header.end()) throw DataError(path + ":1: missing variable column '" + n + "'");
    cols.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  std::map<Date, std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    if (cells.size() != header.size()) {
      throw DataError(where + "expected " + std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    auto date = parse_date(cells[*date_col]);
    if (!date) throw DataError(where + "unparsable date '" + std::string(cells[*date_col]) + "'");
    std::vector<double> values;
    values.reserve(cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
      auto cell = cells[cols[j]];
      double v = kMissing;
      if (!cell.empty() && cell != "NA" && !detail::parse_number(cell, v)) {
        throw DataError(where + "non-numeric value '" + std::string(cell) + "' in column '" +
                        names[j] + "'");
      }
      values.push_back(v);
    }
    if (!rows.emplace(*date, std::move(values)).second) {
      throw DuplicateDate(where + "duplicate date " + format_date(*date));
    }
  }
  if (rows.empty()) throw DataError(path + ": no data rows");

  TimeSeriesDataset ds;
  ds.region_id = schema.region_id;
  ds.source_rows = rows.size();
  for (const auto& n : names) ds.variables.push_back({n, {}});
  const Date first = rows.begin()->first;
  const Date last = rows.rbegin()->first;
  for (Date d = first; d <= last; d += std::chrono::days{1}) {
    ds.dates.push_back(d);
    auto it = rows.find(d);
    for (std::size_t j = 0; j < names.size(); ++j) {
      ds.variables[j].values.push_back(it == rows.end() ? kMissing : it->second[j]);
    }
  }
  return ds;
}

/// Writes the dataset back out in the same CSV dialect `load_csv` reads.
inline void write_csv(std::ostream& out, const TimeSeriesDataset& ds,
                      const std::string& date_column = "date") {
  out << date_column;
  for (const auto& v : ds.variables) out << ',' << v.name;
  out << '\n';
  for (std::size_t i = 0; i < ds.length(); ++i) {
    out << format_date(ds.dates[i]);
    for (const auto& v : ds.variables) {
      out << ',';
      if (is_missing(v.values[i])) out << "NA";
      else out << format_double(v.values[i]);
    }
    out << '\n';
  }
}

/// Fills each gap with the mean of the nearest present value on either side.
/// A run of consecutive gaps gets the mean of the run's two endpoints.
inline std::vector<double> impute_missing(std::span<const double> series) {
  std::vector<double> out(series.begin(), series.end());
  if (out.empty()) return out;
  const bool any_present = std::any_of(out.begin(), out.end(), [](double v) { return !is_missing(v); });
  if (!any_present) throw DataError("impute_missing: series has no present values");
  if (is_missing(out.front()) || is_missing(out.back())) {
    throw EdgeMissing("impute_missing: first or last value is missing; no neighbour to average");
  }
  std::size_t i = 0;
  while (i < out.size()) {
    if (!is_missing(out[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (is_missing(out[j])) ++j;
    const double fill = 0.5 * (out[i - 1] + out[j]);
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(i), out.begin() + static_cast<std::ptrdiff_t>(j), fill);
    i = j;
  }
  return out;
}

/// Imputes every variable in place; returns how many values were filled.
inline std::size_t impute_dataset(TimeSeriesDataset& ds) {
  std::size_t filled = 0;
  for (auto& v : ds.variables) {
    filled += static_cast<std::size_t>(std::count_if(v.values.begin(), v.values.end(), is_missing));
    try {
      v.values = impute_missing(v.values);
    } catch (const EdgeMissing& e) {
      throw EdgeMissing("variable '" + v.name + "': " + e.what());
    }
  }
  return filled;
}

struct ScalingParams {
  double min = 0.0;
  double max = 1.0;
  bool degenerate = false;

  bool operator==(const ScalingParams&) const = default;
};

/// Min/max of a series; `degenerate` when they coincide.
inline ScalingParams fit_scaling(std::span<const double> series) {
  if (series.empty()) throw DataError("fit_scaling: empty series");
  auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (is_missing(*lo) || is_missing(*hi) ||
      std::any_of(series.begin(), series.end(), is_missing)) {
    throw DataError("fit_scaling: series contains missing values; impute first");
  }
  return {*lo, *hi, *lo == *hi};
}

/// Applies previously fitted params; values outside [min, max] map outside [0, 1].
inline std::vector<double> apply_scaling(std::span<const double> series, const ScalingParams& p) {
  std::vector<double> out(series.size(), 0.0);
  if (p.degenerate) return out;
  const double range = p.max - p.min;
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = (series[i] - p.min) / range;
  return out;
}

inline std::pair<std::vector<double>, ScalingParams> minmax_scale(std::span<const double> series) {
  ScalingParams p = fit_scaling(series);
  return {apply_scaling(series, p), p};
}

inline std::vector<double> inverse_scale(std::span<const double> scaled, const ScalingParams& p) {
  std::vector<double> out(scaled.size(), p.min);
  if (p.degenerate) return out;
  const double range = p.max - p.min;
  for (std::size_t i = 0; i < scaled.size(); ++i) out[i] = p.min + scaled[i] * range;
  return out;
}

/// Index at which a chronological split of `length` items happens.
inline std::size_t split_index(std::size_t length, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("split ratio must lie strictly inside (0, 1), got " + format_double(ratio));
  }
  const auto idx = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(length)));
  if (idx == 0 || idx >= length) {
    throw ConfigError("split ratio " + format_double(ratio) + " leaves an empty side for length " +
                      std::to_string(length));
  }
  return idx;
}

inline std::pair<TimeSeriesDataset, TimeSeriesDataset> train_test_split(const TimeSeriesDataset& ds,
                                                                        double ratio = 0.8) {
  if (ds.length() < 2) throw DataError("train_test_split: need at least 2 rows");
  const std::size_t cut = split_index(ds.length(), ratio);
  auto slice = [&](std::size_t from, std::size_t to) {
    TimeSeriesDataset part;
    part.region_id = ds.region_id;
    part.dates.assign(ds.dates.begin() + static_cast<std::ptrdiff_t>(from),
                      ds.dates.begin() + static_cast<std::ptrdiff_t>(to));
    for (const auto& v : ds.variables) {
      part.variables.push_back({v.name, std::vector<double>(v.values.begin() + static_cast<std::ptrdiff_t>(from),
                                                            v.values.begin() + static_cast<std::ptrdiff_t>(to))});
    }
    part.source_rows = part.dates.size();
    return part;
  };
  return {slice(0, cut), slice(cut, ds.length())};
}

/// Sliding-window supervision pairs. Each input is (lookback, features); each
/// target is (horizon, features) and starts right after its input ends.
struct WindowedSamples {
  std::vector<Tensor> inputs;
  std::vector<Tensor> targets;
  std::size_t lookback = 0;
  std::size_t horizon = 0;

  std::size_t size() const noexcept { return inputs.size(); }
  bool empty() const noexcept { return inputs.empty(); }
};

/// Builds a (time, features) matrix from columns of equal length.
inline Tensor columns_to_matrix(const std::vector<std::vector<double>>& columns) {
  if (columns.empty()) throw ConfigError("columns_to_matrix: no columns");
  const std::size_t len = columns.front().size();
  Tensor m({len, columns.size()});
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].size() != len) throw ConfigError("columns_to_matrix: ragged columns");
    for (std::size_t t = 0; t < len; ++t) m.at(t, c) = columns[c][t];
  }
  return m;
}

inline WindowedSamples make_windows(const Tensor& series, std::size_t lookback, std::size_t horizon) {
  if (series.rank() != 2) throw ConfigError("make_windows: series must be (time, features)");
  if (lookback == 0 || horizon == 0) throw ConfigError("make_windows: lookback and horizon must be >= 1");
  const std::size_t len = series.dim(0);
  const std::size_t feats = series.dim(1);
  if (len < lookback + horizon) {
    throw TooShort("make_windows: series length " + std::to_string(len) + " < lookback " +
                   std::to_string(lookback) + " + horizon " + std::to_string(horizon));
  }
  WindowedSamples out;
  out.lookback = lookback;
  out.horizon = horizon;
  const std::size_t n = len - lookback - horizon + 1;
  out.inputs.reserve(n);
  out.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto first = series.data.begin() + static_cast<std::ptrdiff_t>(i * feats);
    auto mid = first + static_cast<std::ptrdiff_t>(lookback * feats);
    auto last = mid + static_cast<std::ptrdiff_t>(horizon * feats);
    out.inputs.emplace_back(std::vector<std::size_t>{lookback, feats}, std::vector<double>(first, mid));
    out.targets.emplace_back(std::vector<std::size_t>{horizon, feats}, std::vector<double>(mid, last));
  }
  return out;
}

inline WindowedSamples make_windows(std::span<const double> series, std::size_t lookback,
                                    std::size_t horizon) {
  return make_windows(Tensor({series.size(), 1}, std::vector<double>(series.begin(), series.end())),
                      lookback, horizon);
}

/// Windows whose targets all start at or after `first_target`. Inputs may reach
/// back before it, so a held-out segment is scored on every one of its points.
inline WindowedSamples make_windows_from(std::span<const double> series, std::size_t first_target,
                                         std::size_t lookback, std::size_t horizon) {
  if (first_target < lookback || first_target > series.size()) {
    throw TooShort("make_windows_from: need " + std::to_string(lookback) + " points before index " +
                   std::to_string(first_target));
  }
  return make_windows(series.subspan(first_target - lookback), lookback, horizon);
}

}  // namespace cnnlstm::timeseries
