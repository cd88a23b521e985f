#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cnnlstm/timeseries.hpp"

using namespace cnnlstm;
using namespace cnnlstm::timeseries;

namespace {

std::string fixture(const std::string& name) { return std::string(CNNLSTM_TEST_DATA_DIR) + "/" + name; }

const double NA = kMissing;

}  // namespace

TEST_CASE("parse_date accepts ISO dates only", "[timeseries][dates]") {
  REQUIRE(parse_date("2020-03-22").has_value());
  REQUIRE(format_date(*parse_date("2020-03-22")) == "2020-03-22");
  REQUIRE_FALSE(parse_date("2020-3-22").has_value());
  REQUIRE_FALSE(parse_date("2020-02-30").has_value());
  REQUIRE_FALSE(parse_date("22/03/2020").has_value());
  REQUIRE(parse_date("2020-02-29").has_value());
}

TEST_CASE("load_csv parses a clean file", "[timeseries][csv]") {
  auto ds = load_csv(fixture("three_rows.csv"), {"date", {"confirmed"}, "XX"});
  REQUIRE(ds.length() == 3);
  REQUIRE(ds.region_id == "XX");
  REQUIRE(ds.series("confirmed") == std::vector<double>{1, 2, 3});
  REQUIRE(format_date(ds.dates.front()) == "2020-03-22");
  REQUIRE(format_date(ds.dates.back()) == "2020-03-24");
  REQUIRE_NOTHROW(ds.validate());
}

TEST_CASE("load_csv materialises date gaps as missing", "[timeseries][csv]") {
  auto ds = load_csv(fixture("gap.csv"), {});
  REQUIRE(ds.length() == 3);
  REQUIRE(ds.source_rows == 2);
  REQUIRE(format_date(ds.dates[1]) == "2020-03-23");
  REQUIRE(is_missing(ds.series("confirmed")[1]));
  REQUIRE(ds.missing_count() == 1);
}

TEST_CASE("load_csv error surface", "[timeseries][csv][errors]") {
  REQUIRE_THROWS_AS(load_csv(fixture("duplicate.csv"), {}), DuplicateDate);
  REQUIRE_THROWS_AS(load_csv(fixture("does_not_exist.csv"), {}), DataError);
  REQUIRE_THROWS_AS(load_csv(fixture("empty.csv"), {}), DataError);
  REQUIRE_THROWS_AS(load_csv(fixture("non_numeric.csv"), {}), DataError);
  REQUIRE_THROWS_AS(load_csv(fixture("three_rows.csv"), {"day", {}, ""}), DataError);
  REQUIRE_THROWS_AS(load_csv(fixture("three_rows.csv"), {"date", {"deaths"}, ""}), DataError);

  try {
    load_csv(fixture("malformed_date.csv"), {});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    // Line 4 of the file holds the bad date (header is line 1).
    REQUIRE_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring(":4:"));
    REQUIRE_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("2020-3-24"));
  }
}

TEST_CASE("impute_missing fills single gaps with neighbour mean", "[timeseries][impute]") {
  REQUIRE(impute_missing(std::vector<double>{10, NA, 20}) == std::vector<double>{10, 15, 20});
  REQUIRE(impute_missing(std::vector<double>{1, 2, 3}) == std::vector<double>{1, 2, 3});
  REQUIRE(impute_missing(std::vector<double>{10, NA, NA, 30}) == std::vector<double>{10, 20, 20, 30});
  REQUIRE(impute_missing(std::vector<double>{}).empty());
}

TEST_CASE("impute_missing rejects undefined edges", "[timeseries][impute][errors]") {
  REQUIRE_THROWS_AS(impute_missing(std::vector<double>{NA, 1, 2}), EdgeMissing);
  REQUIRE_THROWS_AS(impute_missing(std::vector<double>{1, 2, NA}), EdgeMissing);
  REQUIRE_THROWS_AS(impute_missing(std::vector<double>{NA, NA}), DataError);
}

TEST_CASE("impute_missing is idempotent", "[timeseries][impute][property]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> val(0, 100);
  std::bernoulli_distribution gap(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(2 + rng() % 30);
    for (auto& x : s) x = gap(rng) ? NA : val(rng);
    s.front() = val(rng);
    s.back() = val(rng);
    auto once = impute_missing(s);
    REQUIRE(impute_missing(once) == once);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!is_missing(s[i])) REQUIRE(once[i] == s[i]);
      REQUIRE_FALSE(is_missing(once[i]));
    }
  }
}

TEST_CASE("impute_dataset counts filled cells", "[timeseries][impute]") {
  auto ds = load_csv(fixture("two_gaps.csv"), {});
  REQUIRE(impute_dataset(ds) == 2);
  REQUIRE(ds.series("confirmed")[1] == 15.0);
  REQUIRE(ds.series("deaths")[3] == 4.0);
  REQUIRE(ds.missing_count() == 0);
}

TEST_CASE("minmax_scale maps to the unit interval", "[timeseries][scale]") {
  auto [scaled, p] = minmax_scale(std::vector<double>{0, 5, 10});
  REQUIRE(scaled == std::vector<double>{0.0, 0.5, 1.0});
  REQUIRE(p.min == 0.0);
  REQUIRE(p.max == 10.0);
  REQUIRE_FALSE(p.degenerate);

  auto [flat, q] = minmax_scale(std::vector<double>{7, 7, 7});
  REQUIRE(flat == std::vector<double>{0, 0, 0});
  REQUIRE(q.degenerate);
  REQUIRE(inverse_scale(flat, q) == std::vector<double>{7, 7, 7});
}

TEST_CASE("inverse_scale examples", "[timeseries][scale]") {
  ScalingParams p{0, 10, false};
  REQUIRE(inverse_scale(std::vector<double>{0.0, 0.5, 1.0}, p) == std::vector<double>{0, 5, 10});
  REQUIRE(inverse_scale(std::vector<double>{}, p).empty());
  REQUIRE(inverse_scale(std::vector<double>{0.25}, ScalingParams{4, 8, false}) == std::vector<double>{5.0});

  std::vector<double> x{3, 9, 27};
  auto [s, params] = minmax_scale(x);
  auto back = inverse_scale(s, params);
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(std::abs(back[i] - x[i]) <= 1e-12 * std::abs(x[i]));
}

TEST_CASE("scale/inverse round trip", "[timeseries][scale][property]") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mag(-6, 6);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 500; ++trial) {
    const double scale = std::pow(10.0, mag(rng));
    std::vector<double> x(2 + rng() % 50);
    for (auto& v : x) v = n01(rng) * scale;
    auto [s, p] = minmax_scale(x);
    if (p.degenerate) continue;
    for (double v : s) REQUIRE((v >= 0.0 && v <= 1.0));
    auto back = inverse_scale(s, p);
    for (std::size_t i = 0; i < x.size(); ++i) {
      REQUIRE(std::abs(back[i] - x[i]) <= 1e-12 * std::max(1.0, std::abs(x[i])));
    }
  }
}

TEST_CASE("train_test_split is chronological", "[timeseries][split]") {
  auto make = [](std::size_t n) {
    TimeSeriesDataset ds;
    Date d = *parse_date("2021-01-01");
    ds.variables.push_back({"v", {}});
    for (std::size_t i = 0; i < n; ++i) {
      ds.dates.push_back(d + std::chrono::days{static_cast<int>(i)});
      ds.variables[0].values.push_back(static_cast<double>(i));
    }
    return ds;
  };
  {
    auto [train, test] = train_test_split(make(10), 0.8);
    REQUIRE(train.length() == 8);
    REQUIRE(test.length() == 2);
    REQUIRE(train.dates.back() < test.dates.front());
    REQUIRE(test.series("v") == std::vector<double>{8, 9});
  }
  {
    auto [train, test] = train_test_split(make(10), 0.5);
    REQUIRE(train.length() == 5);
    REQUIRE(test.length() == 5);
  }
  {
    auto [train, test] = train_test_split(make(2), 0.8);
    REQUIRE(train.length() == 1);
    REQUIRE(test.length() == 1);
  }
  REQUIRE_THROWS_AS(train_test_split(make(10), 0.0), ConfigError);
  REQUIRE_THROWS_AS(train_test_split(make(10), 1.0), ConfigError);
  REQUIRE_THROWS_AS(train_test_split(make(10), 1.5), ConfigError);
}

TEST_CASE("make_windows enumerates sliding pairs", "[timeseries][windows]") {
  auto w = make_windows(std::vector<double>{1, 2, 3, 4, 5, 6}, 3, 1);
  REQUIRE(w.size() == 3);
  REQUIRE(w.inputs[0].data == std::vector<double>{1, 2, 3});
  REQUIRE(w.targets[0].data == std::vector<double>{4});
  REQUIRE(w.inputs[0].shape == std::vector<std::size_t>{3, 1});

  auto w2 = make_windows(std::vector<double>{1, 2, 3, 4, 5}, 2, 2);
  REQUIRE(w2.size() == 2);
  REQUIRE(w2.inputs[1].data == std::vector<double>{2, 3});
  REQUIRE(w2.targets[1].data == std::vector<double>{4, 5});

  REQUIRE_THROWS_AS(make_windows(std::vector<double>{1, 2, 3, 4}, 4, 1), TooShort);
}

TEST_CASE("make_windows handles multivariate rows", "[timeseries][windows]") {
  auto m = columns_to_matrix({{1, 2, 3, 4}, {10, 20, 30, 40}});
  auto w = make_windows(m, 2, 1);
  REQUIRE(w.size() == 2);
  REQUIRE(w.inputs[1].data == std::vector<double>{2, 20, 3, 30});
  REQUIRE(w.targets[1].data == std::vector<double>{4, 40});
}

TEST_CASE("window count formula", "[timeseries][windows][property]") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t lookback = 1 + rng() % 10;
    const std::size_t horizon = 1 + rng() % 5;
    const std::size_t len = lookback + horizon + rng() % 40;
    std::vector<double> s(len);
    for (std::size_t i = 0; i < len; ++i) s[i] = static_cast<double>(i);
    auto w = make_windows(s, lookback, horizon);
    REQUIRE(w.size() == len - lookback - horizon + 1);
    for (std::size_t i = 0; i < w.size(); ++i) {
      REQUIRE(w.inputs[i].size() == lookback);
      REQUIRE(w.targets[i].size() == horizon);
      // Target starts one step after the input ends.
      REQUIRE(w.targets[i][0] == w.inputs[i][lookback - 1] + 1.0);
    }
  }
}

TEST_CASE("bundled sample CSV loads, imputes and splits", "[timeseries][sample]") {
  auto ds = load_csv(CNNLSTM_SAMPLE_DATA, {});
  REQUIRE(ds.variables.size() == 3);
  REQUIRE(ds.length() == ds.source_rows + 1);
  REQUIRE(impute_dataset(ds) == 5);  // one missing day across 3 columns + 2 blank cells
  REQUIRE_NOTHROW(ds.validate());
  auto [train, test] = train_test_split(ds, 0.8);
  REQUIRE(train.length() + test.length() == ds.length());
  REQUIRE(train.dates.back() < test.dates.front());
}
