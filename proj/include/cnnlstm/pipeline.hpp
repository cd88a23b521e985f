#pragma once

// Batch pipeline behind the command line: ingest -> tune -> train -> forecast /
// evaluate, plus stand-alone compare and bench-opt. Every step reads and writes
// files under one run directory and records them in manifest.json.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cnnlstm/benchmarks.hpp"
#include "cnnlstm/core.hpp"
#include "cnnlstm/evaluation.hpp"
#include "cnnlstm/metaheuristics.hpp"
#include "cnnlstm/model_io.hpp"
#include "cnnlstm/neuralnet.hpp"
#include "cnnlstm/timeseries.hpp"
#include "cnnlstm/tuning.hpp"

#ifndef CNNLSTM_VERSION
#define CNNLSTM_VERSION "0.0.0"
#endif

namespace cnnlstm::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct DataConfig {
  std::string path;
  std::string date_column = "date";
  std::vector<std::string> variables;  // empty = every non-date column
  std::string region_id;
};

struct TuningSettings {
  std::string algorithm = "rs-gwo-woa";
  std::size_t population = 10;
  std::size_t iterations = 20;
  std::size_t budget = 0;
  std::size_t fitness_epochs = 20;
  double validation_fraction = 0.2;
  std::size_t workers = 1;
  std::string surrogate = "none";  // or "hash"
  bool extended_space = false;
  std::optional<tuning::HyperparamSpace> space;

  tuning::HyperparamSpace effective_space() const {
    if (space) return *space;
    return extended_space ? tuning::HyperparamSpace::extended_space() : tuning::HyperparamSpace::default_space();
  }
};

struct RunConfig {
  DataConfig data;
  std::size_t lookback = 7;
  std::size_t horizon = 1;
  double split_ratio = 0.8;
  std::optional<std::uint64_t> seed;
  std::string output_dir = "runs";
  nn::NetworkConfig network;
  nn::TrainingConfig training;
  TuningSettings tuning;
  bool use_tuned = true;
  std::size_t forecast_steps = 7;

  std::uint64_t seed_value() const {
    if (!seed) throw ConfigError("config has no seed; pass --seed or set \"seed\"");
    return *seed;
  }

  /// Network config for one univariate series, before any tuned values.
  nn::NetworkConfig base_network() const {
    nn::NetworkConfig c = network;
    c.lookback = lookback;
    c.horizon = horizon;
    c.n_features = 1;
    return c;
  }

  void validate() const {
    if (data.path.empty()) throw ConfigError("config: data.path is required");
    if (!fs::exists(data.path)) throw ConfigError("config: data file '" + data.path + "' does not exist");
    seed_value();
    if (lookback < 1 || horizon < 1) throw ConfigError("config: lookback and horizon must be >= 1");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("config: split_ratio must lie in (0, 1)");
    if (forecast_steps < 1) throw ConfigError("config: forecast steps must be >= 1");
    training.validate();
    if (tuning.surrogate != "none" && tuning.surrogate != "hash") {
      throw ConfigError("config: tuning.surrogate must be \"none\" or \"hash\"");
    }
    if (!(tuning.validation_fraction > 0.0 && tuning.validation_fraction < 1.0)) {
      throw ConfigError("config: tuning.validation_fraction must lie in (0, 1)");
    }
    if (tuning.fitness_epochs < 1) throw ConfigError("config: tuning.fitness_epochs must be >= 1");
    opt::algorithm_from_string(tuning.algorithm);
    tuning.effective_space().validate();
  }

  /// Identifies the ingested data: same data section, split and seed -> same run directory.
  std::string run_key() const {
    json key = {{"data", data_json()}, {"split_ratio", split_ratio}, {"seed", seed_value()}};
    return to_hex(fnv1a(key.dump()));
  }

  fs::path run_dir() const { return fs::path(output_dir) / ("run-" + run_key()); }

  json data_json() const {
    return {{"path", data.path},
            {"date_column", data.date_column},
            {"variables", data.variables},
            {"region_id", data.region_id}};
  }

  json to_json() const {
    json space = tuning.space ? tuning::space_to_json(*tuning.space) : json(nullptr);
    return {{"data", data_json()},
            {"lookback", lookback},
            {"horizon", horizon},
            {"split_ratio", split_ratio},
            {"seed", seed ? json(*seed) : json(nullptr)},
            {"output_dir", output_dir},
            {"network",
             {{"n_filters", network.n_filters},
              {"kernel_size", network.kernel_size},
              {"pool_size", network.pool_size},
              {"lstm_units", network.lstm_units},
              {"repeat_steps", network.repeat_steps},
              {"conv_activation", std::string(nn::to_string(network.conv_activation))}}},
            {"training",
             {{"epochs", training.epochs},
              {"batch_size", training.batch_size},
              {"learning_rate", training.learning_rate},
              {"optimizer", std::string(nn::to_string(training.optimizer))},
              {"shuffle", training.shuffle}}},
            {"tuning",
             {{"algorithm", tuning.algorithm},
              {"population", tuning.population},
              {"iterations", tuning.iterations},
              {"budget", tuning.budget},
              {"fitness_epochs", tuning.fitness_epochs},
              {"validation_fraction", tuning.validation_fraction},
              {"workers", tuning.workers},
              {"surrogate", tuning.surrogate},
              {"extended_space", tuning.extended_space},
              {"space", space}}},
            {"use_tuned", use_tuned},
            {"forecast", {{"steps", forecast_steps}}}};
  }

  /// Hash of everything that shapes results; where they are written is left out.
  std::string config_hash() const {
    json j = to_json();
    j.erase("output_dir");
    return to_hex(fnv1a(j.dump()));
  }
};

namespace detail {

// Reads j[key] into out if present; rejects keys the reader does not know.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("config: " + where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: " + where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.push_back(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) {
        throw ConfigError("config: unknown key '" + where_ + "." + k + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  detail::Reader top(j, "config");
  if (const json* d = top.child("data")) {
    detail::Reader r(*d, "data");
    r.get("path", c.data.path);
    r.get("date_column", c.data.date_column);
    r.get("variables", c.data.variables);
    r.get("region_id", c.data.region_id);
    r.finish();
  }
  top.get("lookback", c.lookback);
  top.get("horizon", c.horizon);
  top.get("split_ratio", c.split_ratio);
  if (top.child("seed")) {
    std::uint64_t seed = 0;
    top.get("seed", seed);
    c.seed = seed;
  }
  top.get("output_dir", c.output_dir);
  top.get("use_tuned", c.use_tuned);
  if (const json* n = top.child("network")) {
    detail::Reader r(*n, "network");
    r.get("n_filters", c.network.n_filters);
    r.get("kernel_size", c.network.kernel_size);
    r.get("pool_size", c.network.pool_size);
    r.get("lstm_units", c.network.lstm_units);
    r.get("repeat_steps", c.network.repeat_steps);
    std::string act(nn::to_string(c.network.conv_activation));
    r.get("conv_activation", act);
    c.network.conv_activation = nn::activation_from_string(act);
    r.finish();
  }
  if (const json* t = top.child("training")) {
    detail::Reader r(*t, "training");
    r.get("epochs", c.training.epochs);
    r.get("batch_size", c.training.batch_size);
    r.get("learning_rate", c.training.learning_rate);
    std::string optimizer(nn::to_string(c.training.optimizer));
    r.get("optimizer", optimizer);
    c.training.optimizer = nn::optimizer_from_string(optimizer);
    r.get("shuffle", c.training.shuffle);
    r.finish();
  }
  if (const json* t = top.child("tuning")) {
    detail::Reader r(*t, "tuning");
    r.get("algorithm", c.tuning.algorithm);
    r.get("population", c.tuning.population);
    r.get("iterations", c.tuning.iterations);
    r.get("budget", c.tuning.budget);
    r.get("fitness_epochs", c.tuning.fitness_epochs);
    r.get("validation_fraction", c.tuning.validation_fraction);
    r.get("workers", c.tuning.workers);
    r.get("surrogate", c.tuning.surrogate);
    r.get("extended_space", c.tuning.extended_space);
    if (const json* s = r.child("space")) c.tuning.space = tuning::space_from_json(*s);
    r.finish();
  }
  if (const json* f = top.child("forecast")) {
    detail::Reader r(*f, "forecast");
    r.get("steps", c.forecast_steps);
    r.finish();
  }
  top.finish();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

// ---- files ----------------------------------------------------------------

inline void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path.string() + ": cannot open for writing");
  out << content;
  if (!out) throw ConfigError(path.string() + ": write failed");
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string content_hash(const std::string& content) { return to_hex(fnv1a(content)); }

/// Records one step's artifacts (relative path -> content hash) in manifest.json.
/// Keys are sorted and nothing time-dependent is written.
inline void update_manifest(const RunConfig& cfg, const std::string& step, const std::map<std::string, std::string>& artifacts) {
  const fs::path path = cfg.run_dir() / "manifest.json";
  json m = json::object();
  if (fs::exists(path)) {
    try {
      m = json::parse(read_text(path));
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  m["tool"] = "cnnlstm";
  m["version"] = CNNLSTM_VERSION;
  m["seed"] = cfg.seed_value();
  m["run_key"] = cfg.run_key();
  m["data"] = cfg.data_json();
  json files = json::object();
  for (const auto& [name, hash] : artifacts) files[name] = hash;
  m["steps"][step] = {{"config_hash", cfg.config_hash()}, {"artifacts", std::move(files)}};
  write_text(path, m.dump(2) + "\n");
}

/// Writes an artifact under the run directory and remembers its hash.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {}

  void write(const std::string& relative, const std::string& content) {
    write_text(root_ / relative, content);
    hashes_[relative] = content_hash(content);
  }

  const std::map<std::string, std::string>& hashes() const { return hashes_; }

 private:
  fs::path root_;
  std::map<std::string, std::string> hashes_;
};

inline std::uint64_t variable_seed(std::uint64_t seed, std::string_view purpose, std::string_view variable) {
  return mix_seed(seed, fnv1a(std::string(purpose) + ":" + std::string(variable)));
}

// ---- ingest ---------------------------------------------------------------

struct IngestSummary {
  std::size_t rows = 0;     // rows read from the file
  std::size_t length = 0;   // days after gap filling
  std::size_t gaps = 0;     // missing days materialised
  std::size_t imputed = 0;  // cells filled
  std::size_t train_length = 0;
  std::size_t test_length = 0;
};

/// The ingested data as later steps see it.
struct Prepared {
  timeseries::TimeSeriesDataset clean;   // imputed, original units
  timeseries::TimeSeriesDataset scaled;  // min-max scaled with training-portion params
  std::map<std::string, timeseries::ScalingParams> scaling;
  std::size_t split = 0;  // first test index
};

inline json scaling_to_json(const Prepared& p) {
  json vars = json::object();
  for (const auto& [name, s] : p.scaling) vars[name] = {{"min", s.min}, {"max", s.max}, {"degenerate", s.degenerate}};
  return {{"variables", std::move(vars)},
          {"split_index", p.split},
          {"length", p.clean.length()},
          {"train_end", timeseries::format_date(p.clean.dates[p.split - 1])},
          {"test_start", timeseries::format_date(p.clean.dates[p.split])}};
}

inline Prepared prepare(const RunConfig& cfg, IngestSummary* summary = nullptr) {
  Prepared p;
  p.clean = timeseries::load_csv(cfg.data.path, {cfg.data.date_column, cfg.data.variables, cfg.data.region_id});
  const std::size_t gaps = p.clean.length() - p.clean.source_rows;
  const std::size_t imputed = timeseries::impute_dataset(p.clean);
  p.clean.validate();
  p.split = timeseries::split_index(p.clean.length(), cfg.split_ratio);
  p.scaled = p.clean;
  for (auto& v : p.scaled.variables) {
    const auto params = timeseries::fit_scaling(std::span<const double>(v.values).first(p.split));
    v.values = timeseries::apply_scaling(v.values, params);
    p.scaling[v.name] = params;
  }
  if (summary) *summary = {p.clean.source_rows, p.clean.length(), gaps, imputed, p.split, p.clean.length() - p.split};
  return p;
}

inline std::string dataset_csv(const timeseries::TimeSeriesDataset& ds, const std::string& date_column) {
  std::ostringstream out;
  timeseries::write_csv(out, ds, date_column);
  return out.str();
}

inline IngestSummary cmd_ingest(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  IngestSummary s;
  const Prepared p = prepare(cfg, &s);
  ArtifactWriter w(cfg.run_dir());
  w.write("clean.csv", dataset_csv(p.clean, cfg.data.date_column));
  w.write("scaled.csv", dataset_csv(p.scaled, cfg.data.date_column));
  w.write("scaling.json", scaling_to_json(p).dump(2) + "\n");
  update_manifest(cfg, "ingest", w.hashes());
  log << "rows: " << s.rows << "\n"
      << "days: " << s.length << "\n"
      << "gaps: " << s.gaps << "\n"
      << "imputed: " << s.imputed << "\n"
      << "train: " << s.train_length << "\n"
      << "test: " << s.test_length << "\n"
      << "run: " << cfg.run_dir().string() << "\n";
  return s;
}

/// Reloads the ingest artifacts; later steps never re-read the raw file.
inline Prepared load_prepared(const RunConfig& cfg) {
  const fs::path dir = cfg.run_dir();
  if (!fs::exists(dir / "scaled.csv") || !fs::exists(dir / "scaling.json")) {
    throw ConfigError("no ingested data in " + dir.string() + "; run `ingest` first");
  }
  Prepared p;
  p.clean = timeseries::load_csv((dir / "clean.csv").string(), {cfg.data.date_column, {}, cfg.data.region_id});
  p.scaled = timeseries::load_csv((dir / "scaled.csv").string(), {cfg.data.date_column, {}, cfg.data.region_id});
  json s;
  try {
    s = json::parse(read_text(dir / "scaling.json"));
    p.split = s.at("split_index").get<std::size_t>();
    for (const auto& [name, v] : s.at("variables").items()) {
      p.scaling[name] = {v.at("min").get<double>(), v.at("max").get<double>(), v.at("degenerate").get<bool>()};
    }
  } catch (const json::exception& e) {
    throw ConfigError((dir / "scaling.json").string() + ": " + e.what());
  }
  return p;
}

// ---- per-series building blocks --------------------------------------------

inline tuning::TuningOptions tuning_options(const RunConfig& cfg, std::uint64_t seed) {
  tuning::TuningOptions o;
  o.algorithm = opt::algorithm_from_string(cfg.tuning.algorithm);
  o.params.population_size = cfg.tuning.population;
  o.params.max_iterations = cfg.tuning.iterations;
  o.params.seed = seed;
  o.params.workers = cfg.tuning.workers;
  o.budget = cfg.tuning.budget;
  return o;
}

/// Tunes the hyperparameters of one scaled training series.
inline tuning::TuningResult tune_series(std::span<const double> scaled_train, const RunConfig& cfg,
                                        std::uint64_t seed) {
  const auto space = cfg.tuning.effective_space();
  tuning::FitnessFn fitness;
  if (cfg.tuning.surrogate == "hash") {
    fitness = tuning::hash_surrogate(seed);
  } else {
    nn::TrainingConfig t = cfg.training;
    t.epochs = cfg.tuning.fitness_epochs;
    fitness = tuning::cnn_lstm_fitness(
        tuning::make_fitness_data(scaled_train, cfg.lookback, cfg.horizon, cfg.tuning.validation_fraction),
        cfg.base_network(), t, seed);
  }
  return tuning::tune(fitness, space, tuning_options(cfg, seed));
}

/// Applies a tuned assignment (JSON object name -> value) on top of the config.
inline std::pair<nn::NetworkConfig, nn::TrainingConfig> final_configs(const RunConfig& cfg, const json* tuned) {
  nn::NetworkConfig net = cfg.base_network();
  nn::TrainingConfig training = cfg.training;
  if (tuned) {
    tuning::HyperparamAssignment a;
    for (const auto& [k, v] : tuned->items()) a.values.emplace_back(k, v.get<double>());
    tuning::apply_assignment(a, net, training);
  }
  net.validate();
  return {net, training};
}

/// Trains the final network on every window of the scaled training series.
inline nn::TrainedNetwork train_series(std::span<const double> scaled_train, const nn::NetworkConfig& net_cfg,
                                       const nn::TrainingConfig& training_cfg, std::uint64_t seed) {
  nn::NetworkConfig net = net_cfg;
  nn::TrainingConfig training = training_cfg;
  net.seed = seed;
  training.seed = seed;
  return nn::train(nn::initialize_network(net), timeseries::make_windows(scaled_train, net.lookback, net.horizon),
                   training);
}

struct TestScore {
  std::vector<double> predicted;    // scaled, every horizon step of every window
  std::vector<double> actual;       // scaled
  std::vector<double> persistence;  // last observed value repeated
  double mse = 0.0;
  double persistence_mse = 0.0;
};

/// Direct predictions for every test window (targets at index >= split).
inline TestScore score_test(const nn::TrainedNetwork& net, std::span<const double> scaled_series, std::size_t split) {
  const auto& c = net.config;
  const auto windows = timeseries::make_windows_from(scaled_series, split, c.lookback, c.horizon);
  TestScore s;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto pred = nn::network_forward(windows.inputs[i], net);
    const double last = windows.inputs[i][c.lookback - 1];
    for (std::size_t h = 0; h < c.horizon; ++h) {
      s.predicted.push_back(pred[h]);
      s.actual.push_back(windows.targets[i][h]);
      s.persistence.push_back(last);
    }
  }
  s.mse = eval::mse(s.predicted, s.actual);
  s.persistence_mse = eval::mse(s.persistence, s.actual);
  return s;
}

// ---- tune / train / forecast / evaluate ------------------------------------

inline void cmd_tune(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Prepared p = load_prepared(cfg);
  const auto space = cfg.tuning.effective_space();
  ArtifactWriter w(cfg.run_dir());
  for (const auto& v : p.scaled.variables) {
    const auto seed = variable_seed(cfg.seed_value(), "tune", v.name);
    const auto result = tune_series(std::span<const double>(v.values).first(p.split), cfg, seed);
    json report = tuning::tuning_report(result, space);
    report["variable"] = v.name;
    report["fitness"] = cfg.tuning.surrogate == "hash" ? "hash-surrogate" : "cnn-lstm-validation-mse";
    report["fitness_epochs"] = cfg.tuning.fitness_epochs;
    w.write("tuning/" + v.name + ".json", report.dump(2) + "\n");
    w.write("tuning/" + v.name + "_trace.csv", opt::trace_to_csv(result.trace));
    // Wall-clock timings are kept out of the manifest so reruns compare equal.
    write_text(cfg.run_dir() / "tuning" / (v.name + "_timing.csv"), tuning::timing_csv(result));
    log << v.name << ": best " << result.best.key() << " loss " << format_double(result.best_loss) << " (algorithm "
        << result.algorithm << ", " << result.cache_misses << " cells scored, " << result.cache_hits
        << " cache hits)\n";
  }
  update_manifest(cfg, "tune", w.hashes());
}

inline std::optional<json> load_tuned(const RunConfig& cfg, const std::string& variable) {
  const fs::path path = cfg.run_dir() / "tuning" / (variable + ".json");
  if (!cfg.use_tuned || !fs::exists(path)) return std::nullopt;
  try {
    return json::parse(read_text(path)).at("best_assignment");
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Prepared p = load_prepared(cfg);
  ArtifactWriter w(cfg.run_dir());
  for (const auto& v : p.scaled.variables) {
    const auto tuned = load_tuned(cfg, v.name);
    const auto [net_cfg, training] = final_configs(cfg, tuned ? &*tuned : nullptr);
    const auto net = train_series(std::span<const double>(v.values).first(p.split), net_cfg, training,
                                  variable_seed(cfg.seed_value(), "train", v.name));
    w.write("models/" + v.name + ".json", nn::model_to_json(net).dump(1) + "\n");
    std::string loss = "epoch,loss\n";
    for (std::size_t e = 0; e < net.loss_history.size(); ++e) {
      loss += std::to_string(e + 1) + "," + format_double(net.loss_history[e]) + "\n";
    }
    w.write("training/" + v.name + "_loss.csv", loss);
    log << v.name << ": trained " << net_cfg.n_filters << " filters, kernel " << net_cfg.kernel_size << ", pool "
        << net_cfg.pool_size << ", " << net_cfg.lstm_units << " units for " << training.epochs << " epochs ("
        << (tuned ? "tuned" : "config") << " hyperparameters), final loss " << format_double(net.loss_history.back())
        << "\n";
  }
  update_manifest(cfg, "train", w.hashes());
}

inline nn::TrainedNetwork load_variable_model(const RunConfig& cfg, const std::string& variable) {
  const fs::path path = cfg.run_dir() / "models" / (variable + ".json");
  if (!fs::exists(path)) throw ConfigError("no model for '" + variable + "' in " + path.parent_path().string() + "; run `train` first");
  return nn::load_model(path.string());
}

/// Recursive forecast of `steps` days past the last observed date, original units.
inline std::vector<double> forecast_series(const nn::TrainedNetwork& net, std::span<const double> scaled_history,
                                           std::size_t steps, const timeseries::ScalingParams& scaling) {
  const Tensor history({scaled_history.size(), 1}, std::vector<double>(scaled_history.begin(), scaled_history.end()));
  const timeseries::ScalingParams params[] = {scaling};
  return nn::iterative_forecast(net, history, steps, params).data;
}

inline void cmd_forecast(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Prepared p = load_prepared(cfg);
  std::vector<std::vector<double>> columns;
  for (const auto& v : p.scaled.variables) {
    const auto net = load_variable_model(cfg, v.name);
    columns.push_back(forecast_series(net, v.values, cfg.forecast_steps, p.scaling.at(v.name)));
  }
  std::string csv = cfg.data.date_column;
  for (const auto& v : p.scaled.variables) csv += "," + v.name;
  csv += "\n";
  for (std::size_t s = 0; s < cfg.forecast_steps; ++s) {
    csv += timeseries::format_date(p.scaled.dates.back() + std::chrono::days{static_cast<int>(s + 1)});
    for (const auto& col : columns) csv += "," + format_double(col[s]);
    csv += "\n";
  }
  ArtifactWriter w(cfg.run_dir());
  w.write("forecast.csv", csv);
  update_manifest(cfg, "forecast", w.hashes());
  log << "forecast: " << cfg.forecast_steps << " steps from "
      << timeseries::format_date(p.scaled.dates.back() + std::chrono::days{1}) << " -> "
      << (cfg.run_dir() / "forecast.csv").string() << "\n";
}

inline void cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Prepared p = load_prepared(cfg);
  json report = json::object();
  std::string rows = "date,variable,step,actual,predicted\n";
  for (const auto& v : p.scaled.variables) {
    const auto net = load_variable_model(cfg, v.name);
    const auto score = score_test(net, v.values, p.split);
    const auto& sc = p.scaling.at(v.name);
    const auto pred = timeseries::inverse_scale(score.predicted, sc);
    const auto actual = timeseries::inverse_scale(score.actual, sc);
    const std::size_t H = net.config.horizon;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto date = p.scaled.dates[p.split + i / H + i % H];
      rows += timeseries::format_date(date) + "," + v.name + "," + std::to_string(i % H + 1) + "," +
              format_double(actual[i]) + "," + format_double(pred[i]) + "\n";
    }
    report[v.name] = {{"original_units", eval::to_json(eval::metric_report(pred, actual))},
                      {"scaled_mse", score.mse},
                      {"persistence_scaled_mse", score.persistence_mse},
                      {"beats_persistence", score.mse < score.persistence_mse}};
    log << v.name << ": test MSE (scaled) " << format_double(score.mse) << ", persistence "
        << format_double(score.persistence_mse) << ", MAE " << format_double(eval::mae(pred, actual)) << "\n";
  }
  ArtifactWriter w(cfg.run_dir());
  w.write("evaluation.json", report.dump(2) + "\n");
  w.write("test_predictions.csv", rows);
  update_manifest(cfg, "evaluate", w.hashes());
}

// ---- stand-alone commands ---------------------------------------------------

/// Friedman + Nemenyi over a score CSV; writes comparison.json and cd_diagram.csv to out_dir.
inline eval::ComparisonResult cmd_compare(const std::string& scores_path, const fs::path& out_dir, double alpha,
                                          std::optional<double> q, std::ostream& log) {
  auto table = eval::read_score_csv(scores_path);
  auto result = eval::compare_methods(table.scores, table.methods, table.tests, alpha, q);
  write_text(out_dir / "comparison.json", eval::to_json(result).dump(2) + "\n");
  write_text(out_dir / "cd_diagram.csv", eval::cd_diagram_csv(result));
  log << "methods: " << result.ranks.k() << ", tests: " << result.ranks.n() << "\n"
      << "friedman: " << format_double(result.friedman.statistic) << " (chi2 critical "
      << format_double(result.friedman.critical_value) << ", "
      << (result.friedman.rejected ? "null rejected" : "null not rejected") << ")\n"
      << "q: " << format_double(result.q) << "\n"
      << "cd: " << format_double(result.cd) << "\n";
  for (std::size_t j = 0; j < result.ranks.k(); ++j) {
    log << "  " << result.ranks.methods[j] << " " << format_double(result.average_ranks[j]) << "\n";
  }
  for (std::size_t i = 0; i < result.ranks.k(); ++i) {
    for (std::size_t j = i + 1; j < result.ranks.k(); ++j) {
      if (result.significant[i][j]) {
        log << "significant: " << result.ranks.methods[i] << " vs " << result.ranks.methods[j] << "\n";
      }
    }
  }
  return result;
}

struct BenchSettings {
  std::string function = "sphere";
  std::size_t dim = 5;
  std::optional<double> lower, upper;
  std::string algorithm = "rs-gwo-woa";
  opt::OptimizerParams params;
};

inline opt::OptimizationResult cmd_bench_opt(const BenchSettings& s, const std::optional<fs::path>& trace_path,
                                             std::ostream& log) {
  const auto& bench = opt::find_benchmark(s.function);
  if (s.dim < 1) throw ConfigError("bench-opt: dimension must be >= 1");
  const auto bounds = opt::SearchBounds::uniform(s.dim, s.lower.value_or(bench.default_lower),
                                                 s.upper.value_or(bench.default_upper));
  const auto result =
      opt::optimize(opt::algorithm_from_string(s.algorithm), opt::Objective(bench.function), bounds, s.params);
  if (trace_path) write_text(*trace_path, opt::trace_to_csv(result.trace));
  log << "function: " << bench.name << "\n"
      << "algorithm: " << s.algorithm << "\n"
      << "seed: " << s.params.seed << "\n"
      << "best_fitness: " << format_double(result.best_fitness) << "\n"
      << "evaluations: " << result.trace.evaluations << "\n"
      << "best_position:";
  for (double x : result.best_position) log << " " << format_double(x);
  log << "\n";
  return result;
}

}  // namespace cnnlstm::pipeline
