#pragma once

// Hyperparameter search: a discrete grid encoded as the unit box, decoded by
// floor scaling, with a per-cell fitness cache in front of any optimiser.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cnnlstm/core.hpp"
#include "cnnlstm/metaheuristics.hpp"
#include "cnnlstm/neuralnet.hpp"
#include "cnnlstm/timeseries.hpp"

namespace cnnlstm::tuning {

using opt::kInf;

struct Dimension {
  std::string name;
  std::vector<double> candidates;
};

struct HyperparamSpace {
  std::vector<Dimension> dimensions;

  static HyperparamSpace default_space() {
    return {{{"n_filters", {32, 64}},
             {"kernel_size", {3, 4, 5, 6, 7, 8}},
             {"pool_size", {2, 3, 4}},
             {"lstm_units", {10, 15, 20, 25}}}};
  }

  /// Default four plus learning rate and epoch count.
  static HyperparamSpace extended_space() {
    auto s = default_space();
    s.dimensions.push_back({"learning_rate", {1e-2, 1e-3, 1e-4}});
    s.dimensions.push_back({"epochs", {50, 100}});
    return s;
  }

  std::size_t size() const noexcept { return dimensions.size(); }

  std::size_t cell_count() const noexcept {
    std::size_t n = 1;
    for (const auto& d : dimensions) n *= d.candidates.size();
    return n;
  }

  void validate() const {
    if (dimensions.empty()) throw ConfigError("hyperparameter space has no dimensions");
    for (std::size_t i = 0; i < dimensions.size(); ++i) {
      if (dimensions[i].candidates.empty()) {
        throw ConfigError("hyperparameter '" + dimensions[i].name + "' has no candidates");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (dimensions[j].name == dimensions[i].name) {
          throw ConfigError("hyperparameter '" + dimensions[i].name + "' listed twice");
        }
      }
    }
  }
};

struct HyperparamAssignment {
  std::vector<std::pair<std::string, double>> values;  // in space order
  std::vector<std::size_t> indices;
  std::vector<double> position;  // the point that decoded to this cell

  std::optional<double> get(std::string_view name) const {
    for (const auto& [k, v] : values) {
      if (k == name) return v;
    }
    return std::nullopt;
  }

  /// Canonical text form, e.g. "n_filters=32,kernel_size=3". Used as cache key and hash input.
  std::string key() const {
    std::string out;
    for (const auto& [k, v] : values) {
      if (!out.empty()) out += ',';
      out += k + "=" + format_double(v);
    }
    return out;
  }
};

/// index_d = min(floor(p_d * n_d), n_d - 1) after clamping p into [0, 1].
inline HyperparamAssignment decode_position(std::span<const double> position, const HyperparamSpace& space) {
  if (position.size() != space.size()) {
    throw ConfigError("decode_position: position has " + std::to_string(position.size()) + " entries, space has " +
                      std::to_string(space.size()));
  }
  HyperparamAssignment a;
  a.position.assign(position.begin(), position.end());
  for (std::size_t d = 0; d < space.size(); ++d) {
    const auto& dim = space.dimensions[d];
    const double p = std::isnan(position[d]) ? 0.0 : std::clamp(position[d], 0.0, 1.0);
    const auto n = dim.candidates.size();
    const auto idx = std::min(static_cast<std::size_t>(std::floor(p * static_cast<double>(n))), n - 1);
    a.indices.push_back(idx);
    a.values.emplace_back(dim.name, dim.candidates[idx]);
  }
  return a;
}

/// Centre of the cell selected by `indices`; decode_position maps it back to the same cell.
inline std::vector<double> cell_center(std::span<const std::size_t> indices, const HyperparamSpace& space) {
  if (indices.size() != space.size()) throw ConfigError("cell_center: dimension mismatch");
  std::vector<double> p(indices.size());
  for (std::size_t d = 0; d < indices.size(); ++d) {
    const auto n = space.dimensions[d].candidates.size();
    if (indices[d] >= n) throw ConfigError("cell_center: index out of range");
    p[d] = (static_cast<double>(indices[d]) + 0.5) / static_cast<double>(n);
  }
  return p;
}

inline std::uint64_t fitness_seed(std::uint64_t global_seed, const HyperparamAssignment& a) {
  return mix_seed(global_seed, fnv1a(a.key()));
}

/// Writes assignment values into network/training configs. Unknown names are a config error.
inline void apply_assignment(const HyperparamAssignment& a, nn::NetworkConfig& net, nn::TrainingConfig& training) {
  auto as_count = [](const std::string& name, double v) {
    if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("hyperparameter " + name + " must be a positive integer");
    return static_cast<std::size_t>(v);
  };
  for (const auto& [name, v] : a.values) {
    if (name == "n_filters") {
      net.n_filters = as_count(name, v);
    } else if (name == "kernel_size") {
      net.kernel_size = as_count(name, v);
    } else if (name == "pool_size") {
      net.pool_size = as_count(name, v);
    } else if (name == "lstm_units") {
      net.lstm_units = as_count(name, v);
    } else if (name == "repeat_steps") {
      net.repeat_steps = as_count(name, v);
    } else if (name == "learning_rate") {
      training.learning_rate = v;
    } else if (name == "epochs") {
      training.epochs = as_count(name, v);
    } else if (name == "batch_size") {
      training.batch_size = as_count(name, v);
    } else {
      throw ConfigError("unknown hyperparameter '" + name + "'");
    }
  }
}

using FitnessFn = std::function<double(const HyperparamAssignment&)>;

/// Cheap stand-in fitness: a seeded hash of the assignment mapped to [0, 1).
inline FitnessFn hash_surrogate(std::uint64_t seed) {
  return [seed](const HyperparamAssignment& a) {
    return static_cast<double>(mix_seed(seed, fnv1a(a.key())) >> 11) * 0x1.0p-53;
  };
}

/// Training and validation windows for fitness evaluation, both drawn from the
/// training portion. Validation targets are its last `validation_fraction`.
struct FitnessData {
  timeseries::WindowedSamples train;
  timeseries::WindowedSamples validation;
};

inline FitnessData make_fitness_data(std::span<const double> scaled_train, std::size_t lookback, std::size_t horizon,
                                     double validation_fraction = 0.2) {
  const std::size_t split = timeseries::split_index(scaled_train.size(), 1.0 - validation_fraction);
  FitnessData out;
  out.train = timeseries::make_windows(scaled_train.first(split), lookback, horizon);
  out.validation = timeseries::make_windows_from(scaled_train, split, lookback, horizon);
  return out;
}

/// Validation MSE of a CNN-LSTM trained with the assignment. Infeasible shapes
/// and diverged training score +inf.
inline FitnessFn cnn_lstm_fitness(FitnessData data, nn::NetworkConfig base_net, nn::TrainingConfig base_training,
                                  std::uint64_t global_seed) {
  return [data = std::move(data), base_net, base_training, global_seed](const HyperparamAssignment& a) {
    nn::NetworkConfig net = base_net;
    nn::TrainingConfig training = base_training;
    apply_assignment(a, net, training);
    if (!net.feasible()) return kInf;
    const auto seed = fitness_seed(global_seed, a);
    net.seed = seed;
    training.seed = seed;
    try {
      auto trained = nn::train(nn::initialize_network(net), data.train, training);
      return nn::evaluate_mse(trained, data.validation);
    } catch (const Diverged&) {
      return kInf;
    }
  };
}

struct EvaluationRecord {
  std::size_t index = 0;  // position in evaluation order
  std::size_t run = 0;
  std::string key;
  double loss = kInf;
  bool cached = false;
  double wall_seconds = 0.0;
};

/// Assignment-keyed loss cache shared by concurrent evaluations.
class FitnessCache {
 public:
  std::optional<double> find(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  void store(const std::string& key, double loss) {
    std::lock_guard lock(mu_);
    map_.emplace(key, loss);
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return map_.size();
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, double> map_;
};

struct TuningOptions {
  opt::Algorithm algorithm = opt::Algorithm::rs_gwo_woa;
  opt::OptimizerParams params;
  /// Maximum number of distinct cells to evaluate; 0 = one optimiser run, no cap.
  /// With a cap, the optimiser is restarted (fresh derived seed, shared cache)
  /// until the cap is spent or every cell has been scored.
  std::size_t budget = 0;
  std::size_t max_runs = 1000;
};

struct TuningResult {
  std::string algorithm;
  HyperparamAssignment best;
  double best_loss = kInf;
  opt::OptimizationTrace trace;
  std::vector<EvaluationRecord> log;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t runs = 0;
};

namespace detail {

struct BudgetSpent {};

}  // namespace detail

inline TuningResult tune(const FitnessFn& fitness, const HyperparamSpace& space, const TuningOptions& options) {
  space.validate();
  options.params.validate();
  const std::size_t cells = space.cell_count();
  const std::size_t workers = std::max<std::size_t>(1, options.params.workers);

  TuningResult result;
  result.algorithm = std::string(opt::to_string(options.algorithm));
  FitnessCache cache;
  std::map<std::string, HyperparamAssignment> seen;
  std::size_t run = 0;

  // Scores a batch: distinct uncached cells are trained (in parallel), then
  // every point gets a log entry in batch order.
  opt::BatchObjective objective = [&](const std::vector<std::vector<double>>& xs) {
    std::vector<HyperparamAssignment> decoded;
    decoded.reserve(xs.size());
    for (const auto& x : xs) decoded.push_back(decode_position(x, space));

    std::vector<std::size_t> fresh;  // first occurrence of each uncached key
    for (std::size_t i = 0; i < decoded.size(); ++i) {
      const auto key = decoded[i].key();
      if (cache.find(key)) continue;
      bool dup = false;
      for (auto j : fresh) dup = dup || decoded[j].key() == key;
      if (!dup) fresh.push_back(i);
    }
    bool truncated = false;
    if (options.budget > 0 && result.cache_misses + fresh.size() > options.budget) {
      fresh.resize(options.budget - result.cache_misses);
      truncated = true;
    }

    std::vector<double> fresh_loss(fresh.size());
    std::vector<double> fresh_secs(fresh.size());
    auto score = [&](std::size_t k) {
      const auto t0 = std::chrono::steady_clock::now();
      fresh_loss[k] = opt::sanitize_fitness(fitness(decoded[fresh[k]]));
      fresh_secs[k] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    opt::parallel_for(fresh.size(), workers, score);
    for (std::size_t k = 0; k < fresh.size(); ++k) {
      const auto& a = decoded[fresh[k]];
      cache.store(a.key(), fresh_loss[k]);
      seen.emplace(a.key(), a);
    }

    std::vector<double> out(xs.size(), kInf);
    for (std::size_t i = 0; i < decoded.size(); ++i) {
      const auto key = decoded[i].key();
      const auto hit = cache.find(key);
      if (!hit) break;  // past the budget cut
      EvaluationRecord rec{result.log.size(), run, key, *hit, true, 0.0};
      for (std::size_t k = 0; k < fresh.size(); ++k) {
        if (fresh[k] == i) {
          rec.cached = false;
          rec.wall_seconds = fresh_secs[k];
        }
      }
      (rec.cached ? result.cache_hits : result.cache_misses) += 1;
      result.log.push_back(std::move(rec));
      out[i] = *hit;
    }
    if (truncated) throw detail::BudgetSpent{};
    return out;
  };

  const std::size_t max_runs = options.budget == 0 ? 1 : std::max<std::size_t>(1, options.max_runs);
  double best_so_far = kInf;
  for (run = 0; run < max_runs; ++run) {
    opt::OptimizerParams p = options.params;
    if (run > 0) {
      p.seed = mix_seed(options.params.seed, run);
      p.initial_population.clear();
    }
    bool spent = false;
    try {
      auto r = opt::optimize(options.algorithm, objective, opt::SearchBounds::uniform(space.size(), 0.0, 1.0), p);
      for (double f : r.trace.best_fitness_per_iteration) {
        best_so_far = std::min(best_so_far, f);
        result.trace.best_fitness_per_iteration.push_back(best_so_far);
      }
      result.trace.evaluations += r.trace.evaluations;
      result.trace.gwo_iterations += r.trace.gwo_iterations;
      result.trace.woa_iterations += r.trace.woa_iterations;
    } catch (const detail::BudgetSpent&) {
      spent = true;
    } catch (const DegenerateObjective&) {
      // Every cell this run touched was infeasible; later runs may still find one.
    }
    if (spent || options.budget == 0 || result.cache_misses >= options.budget || cache.size() >= cells) {
      ++run;
      break;
    }
  }
  result.runs = run;

  // Best = minimum over the log, earliest entry on ties.
  const EvaluationRecord* best = nullptr;
  for (const auto& rec : result.log) {
    if (std::isfinite(rec.loss) && (!best || rec.loss < best->loss)) best = &rec;
  }
  if (!best) throw DegenerateObjective("tuning found no cell with a finite loss");
  result.best = seen.at(best->key);
  result.best_loss = best->loss;
  result.trace.best_position = result.best.position;
  return result;
}

inline nlohmann::json assignment_to_json(const HyperparamAssignment& a) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : a.values) j[k] = v;
  return j;
}

inline nlohmann::json space_to_json(const HyperparamSpace& space) {
  nlohmann::json dims = nlohmann::json::array();
  for (const auto& d : space.dimensions) dims.push_back({{"name", d.name}, {"candidates", d.candidates}});
  return dims;
}

inline HyperparamSpace space_from_json(const nlohmann::json& j) {
  HyperparamSpace s;
  try {
    for (const auto& d : j) s.dimensions.push_back({d.at("name").get<std::string>(), d.at("candidates").get<std::vector<double>>()});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed hyperparameter space: ") + e.what());
  }
  s.validate();
  return s;
}

/// Deterministic report: no wall-clock data (see timing_csv for that).
inline nlohmann::json tuning_report(const TuningResult& r, const HyperparamSpace& space) {
  auto loss_json = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json log = nlohmann::json::array();
  for (const auto& rec : r.log) {
    log.push_back({{"index", rec.index}, {"run", rec.run}, {"assignment", rec.key}, {"loss", loss_json(rec.loss)},
                   {"cached", rec.cached}});
  }
  nlohmann::json trace = nlohmann::json::array();
  for (double f : r.trace.best_fitness_per_iteration) trace.push_back(loss_json(f));
  return {{"algorithm", r.algorithm},
          {"best_assignment", assignment_to_json(r.best)},
          {"best_loss", r.best_loss},
          {"best_position", r.best.position},
          {"space", space_to_json(space)},
          {"evaluations", r.log.size()},
          {"cache_hits", r.cache_hits},
          {"cache_misses", r.cache_misses},
          {"runs", r.runs},
          {"gwo_iterations", r.trace.gwo_iterations},
          {"woa_iterations", r.trace.woa_iterations},
          {"trace", std::move(trace)},
          {"log", std::move(log)}};
}

/// index,assignment,wall_seconds for the evaluations that actually trained.
inline std::string timing_csv(const TuningResult& r) {
  std::string out = "index,assignment,wall_seconds\n";
  for (const auto& rec : r.log) {
    if (rec.cached) continue;
    out += std::to_string(rec.index) + ",\"" + rec.key + "\"," + format_double(rec.wall_seconds) + "\n";
  }
  return out;
}

}  // namespace cnnlstm::tuning
