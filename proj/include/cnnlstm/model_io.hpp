#pragma once

// JSON model files. Doubles are written as the shortest decimal that parses
// back to the identical bit pattern, so save -> load is exact.

#include <fstream>
#include <string>

#include "json.hpp"

#include "cnnlstm/core.hpp"
#include "cnnlstm/neuralnet.hpp"

namespace cnnlstm::nn {

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json config_to_json(const NetworkConfig& c) {
  return {{"n_filters", c.n_filters},       {"kernel_size", c.kernel_size},
          {"pool_size", c.pool_size},       {"lstm_units", c.lstm_units},
          {"repeat_steps", c.repeat_steps}, {"n_features", c.n_features},
          {"horizon", c.horizon},           {"lookback", c.lookback},
          {"conv_activation", std::string(to_string(c.conv_activation))},
          {"seed", c.seed}};
}

inline NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.n_filters = j.at("n_filters").get<std::size_t>();
  c.kernel_size = j.at("kernel_size").get<std::size_t>();
  c.pool_size = j.at("pool_size").get<std::size_t>();
  c.lstm_units = j.at("lstm_units").get<std::size_t>();
  c.repeat_steps = j.at("repeat_steps").get<std::size_t>();
  c.n_features = j.at("n_features").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.lookback = j.at("lookback").get<std::size_t>();
  c.conv_activation = activation_from_string(j.at("conv_activation").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json model_to_json(const TrainedNetwork& net) {
  nlohmann::json weights = nlohmann::json::object();
  net.params.for_each([&](std::string_view name, const Tensor& t) {
    weights[std::string(name)] = {{"shape", t.shape}, {"data", t.data}};
  });
  return {{"format", "cnnlstm-model"},
          {"version", kModelFormatVersion},
          {"config", config_to_json(net.config)},
          {"weights", std::move(weights)},
          {"loss_history", net.loss_history}};
}

inline TrainedNetwork model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "cnnlstm-model") throw ConfigError("not a cnnlstm model document");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw ConfigError("unsupported model format version " + j.at("version").dump());
    }
    TrainedNetwork net;
    net.config = config_from_json(j.at("config"));
    net.params = Parameters::zeros(net.config);
    const auto& weights = j.at("weights");
    net.params.for_each([&](std::string_view name, Tensor& t) {
      const auto& w = weights.at(std::string(name));
      auto shape = w.at("shape").get<std::vector<std::size_t>>();
      if (shape != t.shape) {
        throw ConfigError("weight '" + std::string(name) + "' has shape " + shape_string(shape) +
                          ", config implies " + shape_string(t.shape));
      }
      t = Tensor(std::move(shape), w.at("data").get<std::vector<double>>());
    });
    net.loss_history = j.at("loss_history").get<std::vector<double>>();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model document: ") + e.what());
  }
}

inline void save_model(const TrainedNetwork& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path + ": cannot open for writing");
  out << model_to_json(net).dump(1) << '\n';
}

inline TrainedNetwork load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open model file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace cnnlstm::nn
