#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cnnlstm/tuning.hpp"

using namespace cnnlstm;
using namespace cnnlstm::tuning;

namespace {

// All 144 cells of the default grid by nested loops, independent of the codec.
struct Cell {
  double filters, kernel, pool, units;
};

std::vector<Cell> enumerate_default_grid() {
  std::vector<Cell> cells;
  for (double f : {32, 64}) {
    for (double k : {3, 4, 5, 6, 7, 8}) {
      for (double p : {2, 3, 4}) {
        for (double u : {10, 15, 20, 25}) cells.push_back({f, k, p, u});
      }
    }
  }
  return cells;
}

HyperparamAssignment assignment_of(const Cell& c) {
  HyperparamAssignment a;
  a.values = {{"n_filters", c.filters}, {"kernel_size", c.kernel}, {"pool_size", c.pool}, {"lstm_units", c.units}};
  return a;
}

TuningOptions surrogate_options(std::uint64_t seed, std::size_t budget = 200) {
  TuningOptions o;
  o.params.population_size = 30;
  o.params.max_iterations = 200;
  o.params.seed = seed;
  o.budget = budget;
  return o;
}

std::vector<double> values_of(const HyperparamAssignment& a) {
  std::vector<double> v;
  for (const auto& kv : a.values) v.push_back(kv.second);
  return v;
}

}  // namespace

TEST_CASE("decode_position examples", "[tuning][decode]") {
  const auto space = HyperparamSpace::default_space();
  REQUIRE(values_of(decode_position(std::vector<double>{0, 0, 0, 0}, space)) == std::vector<double>{32, 3, 2, 10});
  REQUIRE(values_of(decode_position(std::vector<double>{0.99, 0.99, 0.99, 0.99}, space)) ==
          std::vector<double>{64, 8, 4, 25});
  REQUIRE(values_of(decode_position(std::vector<double>{0.5, 0.5, 0.5, 0.5}, space)) ==
          std::vector<double>{64, 6, 3, 20});
  // Exactly 1.0 and out-of-box values clamp onto the end cells.
  REQUIRE(values_of(decode_position(std::vector<double>{1.0, 7.0, -3.0, 1.0}, space)) ==
          std::vector<double>{64, 8, 2, 25});
  REQUIRE_THROWS_AS(decode_position(std::vector<double>{0.5}, space), ConfigError);
  REQUIRE(space.cell_count() == 144);
  REQUIRE(HyperparamSpace::extended_space().cell_count() == 144 * 6);
}

TEST_CASE("decode is surjective: every cell is hit by points drawn inside it", "[tuning][decode][property]") {
  const auto space = HyperparamSpace::default_space();
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::set<std::string> hit;
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 6; ++b) {
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t d = 0; d < 4; ++d) {
          const std::vector<std::size_t> idx{a, b, c, d};
          REQUIRE(decode_position(cell_center(idx, space), space).indices == idx);
          for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> p(4);
            for (std::size_t k = 0; k < 4; ++k) {
              const double n = static_cast<double>(space.dimensions[k].candidates.size());
              p[k] = (static_cast<double>(idx[k]) + u01(rng)) / n;
            }
            auto dec = decode_position(p, space);
            REQUIRE(dec.indices == idx);
            hit.insert(dec.key());
          }
        }
      }
    }
  }
  REQUIRE(hit.size() == 144);
}

TEST_CASE("decode is monotone per dimension", "[tuning][decode][property]") {
  const auto space = HyperparamSpace::extended_space();
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-0.1, 1.1);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> p(space.size());
    for (auto& v : p) v = u(rng);
    const std::size_t d = rng() % space.size();
    auto q = p;
    q[d] = std::max(p[d], u(rng));
    REQUIRE(decode_position(q, space).indices[d] >= decode_position(p, space).indices[d]);
  }
}

TEST_CASE("apply_assignment writes network and training fields", "[tuning]") {
  auto a = decode_position(std::vector<double>{0.9, 0.0, 0.5, 0.3, 0.0, 0.9}, HyperparamSpace::extended_space());
  nn::NetworkConfig net;
  nn::TrainingConfig training;
  apply_assignment(a, net, training);
  REQUIRE(net.n_filters == 64);
  REQUIRE(net.kernel_size == 3);
  REQUIRE(net.pool_size == 3);
  REQUIRE(net.lstm_units == 15);
  REQUIRE(training.learning_rate == 1e-2);
  REQUIRE(training.epochs == 100);

  HyperparamAssignment bad;
  bad.values = {{"dropout", 0.5}};
  REQUIRE_THROWS_AS(apply_assignment(bad, net, training), ConfigError);
  bad.values = {{"n_filters", 2.5}};
  REQUIRE_THROWS_AS(apply_assignment(bad, net, training), ConfigError);
}

TEST_CASE("space JSON round trip and validation", "[tuning][io]") {
  const auto space = HyperparamSpace::extended_space();
  auto back = space_from_json(space_to_json(space));
  REQUIRE(back.size() == space.size());
  for (std::size_t d = 0; d < space.size(); ++d) {
    REQUIRE(back.dimensions[d].name == space.dimensions[d].name);
    REQUIRE(back.dimensions[d].candidates == space.dimensions[d].candidates);
  }
  REQUIRE_THROWS_AS(space_from_json(nlohmann::json::parse(R"([{"name":"n_filters","candidates":[]}])")), ConfigError);
  REQUIRE_THROWS_AS(space_from_json(nlohmann::json::parse(R"([{"name":"n_filters"}])")), ConfigError);
}

TEST_CASE("fitness data keeps validation targets in the last fifth", "[tuning][fitness]") {
  std::vector<double> s(50);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i);
  auto data = make_fitness_data(s, 7, 1);
  // split at 40: training windows end before index 40, validation targets are 40..49.
  REQUIRE(data.train.size() == 40 - 7);
  REQUIRE(data.train.targets.back()[0] == 39.0);
  REQUIRE(data.validation.size() == 10);
  REQUIRE(data.validation.targets.front()[0] == 40.0);
  REQUIRE(data.validation.inputs.front()[0] == 33.0);
}

TEST_CASE("CNN-LSTM fitness: infeasible shapes and determinism", "[tuning][fitness]") {
  std::vector<double> s(60);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.5 + 0.4 * std::sin(0.3 * static_cast<double>(i));
  nn::NetworkConfig base;
  base.lookback = 7;
  nn::TrainingConfig training;
  training.epochs = 3;
  auto fitness = cnn_lstm_fitness(make_fitness_data(s, 7, 1), base, training, 99);
  const auto space = HyperparamSpace::default_space();

  // kernel 8 > lookback 7
  auto k8 = decode_position(std::vector<double>{0.0, 0.99, 0.0, 0.0}, space);
  REQUIRE(k8.get("kernel_size") == 8.0);
  REQUIRE(fitness(k8) == kInf);
  // kernel 6 leaves 2 conv outputs; pool 3 cannot fit.
  REQUIRE(fitness(decode_position(std::vector<double>{0.0, 0.6, 0.5, 0.0}, space)) == kInf);

  auto cell = decode_position(std::vector<double>{0.2, 0.2, 0.2, 0.2}, space);
  const double first = fitness(cell);
  REQUIRE(std::isfinite(first));
  REQUIRE(fitness(cell) == first);
  // A different global seed trains a different network.
  auto other = cnn_lstm_fitness(make_fitness_data(s, 7, 1), base, training, 100);
  REQUIRE(other(cell) != first);
}

TEST_CASE("CNN-LSTM fitness learns a constant series in every feasible cell", "[tuning][fitness]") {
  const std::vector<double> s(40, 0.5);
  nn::NetworkConfig base;
  base.lookback = 7;
  nn::TrainingConfig training;
  training.epochs = 20;
  training.learning_rate = 1e-2;
  auto fitness = cnn_lstm_fitness(make_fitness_data(s, 7, 1), base, training, 5);
  std::size_t feasible = 0;
  for (const auto& c : enumerate_default_grid()) {
    const double loss = fitness(assignment_of(c));
    nn::NetworkConfig net = base;
    net.n_filters = static_cast<std::size_t>(c.filters);
    net.kernel_size = static_cast<std::size_t>(c.kernel);
    net.pool_size = static_cast<std::size_t>(c.pool);
    net.lstm_units = static_cast<std::size_t>(c.units);
    if (!net.feasible()) {
      REQUIRE(loss == kInf);
      continue;
    }
    ++feasible;
    // Untrained output is ~0, i.e. loss ~0.25; the constant must be learned.
    REQUIRE(loss < 1e-3);
  }
  REQUIRE(feasible == 2 * 4 * (3 + 3 + 2 + 1));
}

TEST_CASE("tuner matches exhaustive enumeration on the hash surrogate", "[tuning][oracle]") {
  const auto space = HyperparamSpace::default_space();
  const auto cells = enumerate_default_grid();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto f = hash_surrogate(seed);
    double oracle = kInf;
    for (const auto& c : cells) oracle = std::min(oracle, f(assignment_of(c)));
    for (auto alg : {opt::Algorithm::rs_gwo_woa, opt::Algorithm::ga}) {
      auto options = surrogate_options(seed);
      options.algorithm = alg;
      auto r = tune(f, space, options);
      REQUIRE(r.best_loss == oracle);
      REQUIRE(f(r.best) == oracle);
      REQUIRE(r.cache_misses == 144);
    }
  }
}

TEST_CASE("a grid with a single feasible cell returns that cell", "[tuning]") {
  const auto space = HyperparamSpace::default_space();
  FitnessFn f = [](const HyperparamAssignment& a) {
    return a.key() == "n_filters=64,kernel_size=7,pool_size=3,lstm_units=15" ? 0.75 : kInf;
  };
  auto r = tune(f, space, surrogate_options(3));
  REQUIRE(r.best.key() == "n_filters=64,kernel_size=7,pool_size=3,lstm_units=15");
  REQUIRE(r.best_loss == 0.75);

  FitnessFn none = [](const HyperparamAssignment&) { return kInf; };
  REQUIRE_THROWS_AS(tune(none, space, surrogate_options(3)), DegenerateObjective);
  auto single_run = surrogate_options(3, 0);
  REQUIRE_THROWS_AS(tune(none, space, single_run), DegenerateObjective);
}

TEST_CASE("cache accounting and soundness", "[tuning][cache]") {
  const auto space = HyperparamSpace::default_space();
  auto f = hash_surrogate(21);
  for (std::size_t budget : {0, 10, 50, 200}) {
    auto options = surrogate_options(8, budget);
    options.params.population_size = 10;
    options.params.max_iterations = 30;
    auto r = tune(f, space, options);
    REQUIRE(r.cache_hits + r.cache_misses == r.log.size());
    REQUIRE(r.cache_misses <= 144);
    std::set<std::string> keys;
    for (const auto& rec : r.log) keys.insert(rec.key);
    REQUIRE(keys.size() == r.cache_misses);
    if (budget == 0) {
      REQUIRE(r.runs == 1);
      REQUIRE(r.log.size() == 10 * 31);
    } else {
      REQUIRE(r.cache_misses == std::min<std::size_t>(budget, 144));
    }
    double min_log = kInf;
    for (const auto& rec : r.log) min_log = std::min(min_log, rec.loss);
    REQUIRE(r.best_loss == min_log);
    REQUIRE(r.best.key() == decode_position(r.best.position, space).key());
  }
}

TEST_CASE("cached losses equal fresh recomputation", "[tuning][cache]") {
  std::vector<double> s(50);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.5 + 0.3 * std::cos(0.2 * static_cast<double>(i));
  nn::NetworkConfig base;
  nn::TrainingConfig training;
  training.epochs = 2;
  auto f = cnn_lstm_fitness(make_fitness_data(s, 7, 1), base, training, 17);
  const auto space = HyperparamSpace::default_space();
  TuningOptions options;
  options.params.population_size = 4;
  options.params.max_iterations = 2;
  options.params.seed = 2;
  auto r = tune(f, space, options);
  std::map<std::string, double> by_key;
  for (const auto& rec : r.log) {
    auto [it, fresh] = by_key.emplace(rec.key, rec.loss);
    if (!fresh) REQUIRE(it->second == rec.loss);
  }
  REQUIRE(f(r.best) == r.best_loss);
}

TEST_CASE("tuning is deterministic and independent of worker count", "[tuning][determinism]") {
  const auto space = HyperparamSpace::default_space();
  auto f = hash_surrogate(4);
  auto options = surrogate_options(6, 60);
  options.params.population_size = 12;
  options.params.max_iterations = 25;
  const auto a = tuning_report(tune(f, space, options), space).dump();
  const auto b = tuning_report(tune(f, space, options), space).dump();
  options.params.workers = 3;
  const auto c = tuning_report(tune(f, space, options), space).dump();
  REQUIRE(a == b);
  REQUIRE(a == c);

  auto ga = options;
  ga.algorithm = opt::Algorithm::ga;
  auto report = tuning_report(tune(f, space, ga), space);
  REQUIRE(report.at("algorithm") == "ga");
  REQUIRE(report.at("cache_misses") == 60);
}

TEST_CASE("timing CSV lists trained evaluations only", "[tuning][io]") {
  TuningResult r;
  r.log = {{0, 0, "a=1", 0.5, false, 0.25}, {1, 0, "a=1", 0.5, true, 0.0}};
  REQUIRE(timing_csv(r) == "index,assignment,wall_seconds\n0,\"a=1\",0.25\n");
}
