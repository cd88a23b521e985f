#pragma once

// CNN-LSTM forecaster: conv1d -> max-pool -> flatten -> repeat -> LSTM -> dense.
// Forward pass, exact reverse-mode gradients, Adam/SGD training and
// recursive multi-step forecasting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cnnlstm/core.hpp"
#include "cnnlstm/tensor.hpp"
#include "cnnlstm/timeseries.hpp"

namespace cnnlstm::nn {

enum class Activation { relu, tanh, identity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity" || s == "linear") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

/// Derivative expressed through the pre-activation and the activation output.
inline double activate_grad(Activation a, double pre, double out) {
  switch (a) {
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - out * out;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Output length of a 1D convolution: floor((W - F + 2P) / S) + 1.
inline std::size_t conv_output_size(std::size_t input_len, std::size_t kernel, std::size_t padding = 0,
                                    std::size_t stride = 1) {
  if (stride < 1) throw ConfigError("conv_output_size: stride must be >= 1");
  if (kernel < 1) throw ConfigError("conv_output_size: kernel must be >= 1");
  if (kernel > input_len + 2 * padding) {
    throw ConfigError("conv_output_size: kernel " + std::to_string(kernel) +
                      " larger than padded input " + std::to_string(input_len + 2 * padding));
  }
  return (input_len + 2 * padding - kernel) / stride + 1;
}

struct NetworkConfig {
  std::size_t n_filters = 32;
  std::size_t kernel_size = 3;
  std::size_t pool_size = 2;
  std::size_t lstm_units = 10;
  std::size_t repeat_steps = 3;
  std::size_t n_features = 1;
  std::size_t horizon = 1;
  std::size_t lookback = 7;
  Activation conv_activation = Activation::relu;
  std::uint64_t seed = 0;

  std::size_t conv_length() const { return conv_output_size(lookback, kernel_size); }
  std::size_t pooled_length() const { return conv_length() / pool_size; }
  std::size_t flat_length() const { return pooled_length() * n_filters; }
  std::size_t output_size() const { return horizon * n_features; }

  /// True when every layer has a non-empty output for this lookback.
  bool feasible() const noexcept {
    if (n_filters == 0 || lstm_units == 0 || repeat_steps == 0 || n_features == 0 || horizon == 0 ||
        pool_size == 0 || kernel_size == 0) {
      return false;
    }
    if (kernel_size > lookback) return false;
    return (lookback - kernel_size + 1) / pool_size >= 1;
  }

  void validate() const {
    if (!feasible()) {
      throw ConfigError("infeasible network: lookback " + std::to_string(lookback) + ", kernel " +
                        std::to_string(kernel_size) + ", pool " + std::to_string(pool_size) +
                        ", filters " + std::to_string(n_filters) + ", units " +
                        std::to_string(lstm_units));
    }
  }

  bool operator==(const NetworkConfig&) const = default;
};

struct ConvWeights {
  Tensor kernel;  // (filters, kernel_size, features)
  Tensor bias;    // (filters)
};

/// The four gates each act on the concatenation [previous hidden, input].
struct LstmWeights {
  Tensor forget_w, forget_b;        // (units, units + input), (units)
  Tensor input_w, input_b;          // input gate
  Tensor candidate_w, candidate_b;  // candidate cell state (tanh)
  Tensor output_w, output_b;        // output gate

  std::size_t units() const { return forget_b.size(); }
  std::size_t input_dim() const { return forget_w.dim(1) - units(); }
};

struct DenseWeights {
  Tensor weight;  // (outputs, units)
  Tensor bias;    // (outputs)
};

/// Every trainable array of the network. Also used as the gradient container.
struct Parameters {
  ConvWeights conv;
  LstmWeights lstm;
  DenseWeights dense;

  template <class F>
  void for_each(F&& f) {
    f("conv_kernel", conv.kernel);
    f("conv_bias", conv.bias);
    f("lstm_forget_w", lstm.forget_w);
    f("lstm_forget_b", lstm.forget_b);
    f("lstm_input_w", lstm.input_w);
    f("lstm_input_b", lstm.input_b);
    f("lstm_candidate_w", lstm.candidate_w);
    f("lstm_candidate_b", lstm.candidate_b);
    f("lstm_output_w", lstm.output_w);
    f("lstm_output_b", lstm.output_b);
    f("dense_w", dense.weight);
    f("dense_b", dense.bias);
  }

  template <class F>
  void for_each(F&& f) const {
    const_cast<Parameters*>(this)->for_each(
        [&](std::string_view name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  /// Zero-filled parameters with the shapes `cfg` implies.
  static Parameters zeros(const NetworkConfig& cfg) {
    cfg.validate();
    const std::size_t h = cfg.lstm_units;
    const std::size_t cat = h + cfg.flat_length();
    Parameters p;
    p.conv.kernel = Tensor({cfg.n_filters, cfg.kernel_size, cfg.n_features});
    p.conv.bias = Tensor({cfg.n_filters});
    for (Tensor* w : {&p.lstm.forget_w, &p.lstm.input_w, &p.lstm.candidate_w, &p.lstm.output_w}) {
      *w = Tensor({h, cat});
    }
    for (Tensor* b : {&p.lstm.forget_b, &p.lstm.input_b, &p.lstm.candidate_b, &p.lstm.output_b}) {
      *b = Tensor({h});
    }
    p.dense.weight = Tensor({cfg.output_size(), h});
    p.dense.bias = Tensor({cfg.output_size()});
    return p;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for_each([&](std::string_view, const Tensor& t) { n += t.size(); });
    return n;
  }

  bool operator==(const Parameters& o) const { return flatten() == o.flatten(); }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(count());
    for_each([&](std::string_view, const Tensor& t) { out.insert(out.end(), t.data.begin(), t.data.end()); });
    return out;
  }
};

struct TrainedNetwork {
  NetworkConfig config;
  Parameters params;
  std::vector<double> loss_history;
};

/// Glorot-uniform conv/dense, Glorot-uniform LSTM input block, U(+-sqrt(1/units))
/// recurrent block, zero biases. Deterministic in `cfg.seed`.
inline TrainedNetwork initialize_network(const NetworkConfig& cfg) {
  TrainedNetwork net{cfg, Parameters::zeros(cfg), {}};
  std::mt19937_64 rng(cfg.seed);
  auto fill_uniform = [&](std::span<double> xs, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& x : xs) x = dist(rng);
  };
  const double conv_fan_in = static_cast<double>(cfg.kernel_size * cfg.n_features);
  const double conv_fan_out = static_cast<double>(cfg.kernel_size * cfg.n_filters);
  fill_uniform(net.params.conv.kernel.data, std::sqrt(6.0 / (conv_fan_in + conv_fan_out)));

  const std::size_t h = cfg.lstm_units;
  const std::size_t d = cfg.flat_length();
  const double input_limit = std::sqrt(6.0 / static_cast<double>(d + 4 * h));
  const double recurrent_limit = std::sqrt(1.0 / static_cast<double>(h));
  auto& l = net.params.lstm;
  for (Tensor* w : {&l.forget_w, &l.input_w, &l.candidate_w, &l.output_w}) {
    for (std::size_t u = 0; u < h; ++u) {
      auto row = w->row(u);
      fill_uniform(row.first(h), recurrent_limit);
      fill_uniform(row.subspan(h), input_limit);
    }
  }
  fill_uniform(net.params.dense.weight.data,
               std::sqrt(6.0 / static_cast<double>(h + cfg.output_size())));
  return net;
}

// ---------------------------------------------------------------------------
// Layers

/// Valid, stride-1 convolution over time with kernels spanning all features.
/// Returns the activated (L - K + 1, filters) map.
inline Tensor conv1d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                             Activation act, Tensor* pre_activation = nullptr) {
  if (input.rank() != 2 || kernel.rank() != 3 || bias.rank() != 1) {
    throw ConfigError("conv1d_forward: expected input (L, C), kernel (F, K, C), bias (F)");
  }
  const std::size_t len = input.dim(0), channels = input.dim(1);
  const std::size_t filters = kernel.dim(0), k = kernel.dim(1);
  if (kernel.dim(2) != channels || bias.dim(0) != filters) {
    throw ConfigError("conv1d_forward: kernel " + shape_string(kernel.shape) + " / bias " +
                      shape_string(bias.shape) + " do not fit input " + shape_string(input.shape));
  }
  const std::size_t out_len = conv_output_size(len, k);
  Tensor out({out_len, filters});
  if (pre_activation) *pre_activation = Tensor({out_len, filters});
  for (std::size_t i = 0; i < out_len; ++i) {
    for (std::size_t f = 0; f < filters; ++f) {
      double s = bias[f];
      for (std::size_t m = 0; m < k; ++m) {
        for (std::size_t c = 0; c < channels; ++c) s += kernel.at(f, m, c) * input.at(i + m, c);
      }
      if (pre_activation) pre_activation->at(i, f) = s;
      out.at(i, f) = activate(act, s);
    }
  }
  return out;
}

/// Non-overlapping max pooling along time; a trailing remainder shorter than
/// `pool` is dropped. `argmax` receives the winning source row per output cell.
inline Tensor maxpool1d_forward(const Tensor& input, std::size_t pool,
                                std::vector<std::size_t>* argmax = nullptr) {
  if (pool < 1) throw ConfigError("maxpool1d_forward: pool must be >= 1");
  if (input.rank() != 2) throw ConfigError("maxpool1d_forward: expected (L, C) input");
  const std::size_t len = input.dim(0), channels = input.dim(1);
  if (len < pool) throw ConfigError("maxpool1d_forward: input shorter than pool");
  const std::size_t out_len = len / pool;
  Tensor out({out_len, channels});
  if (argmax) argmax->assign(out_len * channels, 0);
  for (std::size_t i = 0; i < out_len; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::size_t best = i * pool;
      for (std::size_t r = i * pool + 1; r < (i + 1) * pool; ++r) {
        if (input.at(r, c) > input.at(best, c)) best = r;
      }
      out.at(i, c) = input.at(best, c);
      if (argmax) (*argmax)[i * channels + c] = best;
    }
  }
  return out;
}

struct LSTMState {
  std::vector<double> cell;
  std::vector<double> hidden;

  static LSTMState zeros(std::size_t units) { return {std::vector<double>(units, 0.0), std::vector<double>(units, 0.0)}; }
};

/// Intermediate values of one LSTM step, kept for backpropagation.
struct LstmStepCache {
  std::vector<double> concat;  // [d_{t-1}, x_t]
  std::vector<double> forget, input, candidate, output;
  std::vector<double> cell_prev, cell, cell_tanh;
};

namespace detail {

inline void gate_preactivation(const Tensor& w, const Tensor& b, std::span<const double> concat,
                               std::vector<double>& out) {
  const std::size_t units = b.size();
  const std::size_t width = concat.size();
  out.resize(units);
  for (std::size_t u = 0; u < units; ++u) {
    const double* row = w.data.data() + u * width;
    double s = b[u];
    for (std::size_t j = 0; j < width; ++j) s += row[j] * concat[j];
    out[u] = s;
  }
}

}  // namespace detail

/// One LSTM step:
///   f = sig(Wf z + bf), i = sig(Wi z + bi), g = tanh(Wg z + bg), o = sig(Wo z + bo)
///   c = f*c_prev + i*g,  d = o*tanh(c),  with z = [d_prev, x].
inline std::pair<std::vector<double>, LSTMState> lstm_cell_forward(std::span<const double> x,
                                                                   const LSTMState& prev,
                                                                   const LstmWeights& w,
                                                                   LstmStepCache* cache = nullptr) {
  const std::size_t units = w.units();
  if (prev.cell.size() != units || prev.hidden.size() != units) {
    throw ConfigError("lstm_cell_forward: state size does not match " + std::to_string(units) + " units");
  }
  if (w.forget_w.rank() != 2 || w.forget_w.dim(1) != units + x.size()) {
    throw ConfigError("lstm_cell_forward: weight width " + shape_string(w.forget_w.shape) +
                      " does not fit units " + std::to_string(units) + " + input " + std::to_string(x.size()));
  }
  LstmStepCache local;
  LstmStepCache& c = cache ? *cache : local;
  c.concat.resize(units + x.size());
  std::copy(prev.hidden.begin(), prev.hidden.end(), c.concat.begin());
  std::copy(x.begin(), x.end(), c.concat.begin() + static_cast<std::ptrdiff_t>(units));

  detail::gate_preactivation(w.forget_w, w.forget_b, c.concat, c.forget);
  detail::gate_preactivation(w.input_w, w.input_b, c.concat, c.input);
  detail::gate_preactivation(w.candidate_w, w.candidate_b, c.concat, c.candidate);
  detail::gate_preactivation(w.output_w, w.output_b, c.concat, c.output);

  LSTMState next{std::vector<double>(units), std::vector<double>(units)};
  c.cell_prev = prev.cell;
  c.cell.resize(units);
  c.cell_tanh.resize(units);
  for (std::size_t u = 0; u < units; ++u) {
    c.forget[u] = sigmoid(c.forget[u]);
    c.input[u] = sigmoid(c.input[u]);
    c.candidate[u] = std::tanh(c.candidate[u]);
    c.output[u] = sigmoid(c.output[u]);
    c.cell[u] = c.forget[u] * prev.cell[u] + c.input[u] * c.candidate[u];
    c.cell_tanh[u] = std::tanh(c.cell[u]);
    next.cell[u] = c.cell[u];
    next.hidden[u] = c.output[u] * c.cell_tanh[u];
  }
  return {next.hidden, std::move(next)};
}

/// Everything the backward pass needs from one forward pass.
struct ForwardCache {
  Tensor conv_pre, conv_out, pooled;
  std::vector<std::size_t> pool_argmax;
  std::vector<double> flat;
  std::vector<LstmStepCache> steps;
  std::vector<double> final_hidden;
  std::vector<double> prediction;
};

inline void check_input(const Tensor& input, const NetworkConfig& cfg) {
  if (input.rank() != 2 || input.dim(0) != cfg.lookback || input.dim(1) != cfg.n_features) {
    throw ConfigError("network input " + shape_string(input.shape) + " does not match (lookback " +
                      std::to_string(cfg.lookback) + ", features " + std::to_string(cfg.n_features) + ")");
  }
}

inline std::vector<double> forward_cached(const Tensor& input, const NetworkConfig& cfg,
                                          const Parameters& p, ForwardCache& cache) {
  check_input(input, cfg);
  cache.conv_out = conv1d_forward(input, p.conv.kernel, p.conv.bias, cfg.conv_activation, &cache.conv_pre);
  cache.pooled = maxpool1d_forward(cache.conv_out, cfg.pool_size, &cache.pool_argmax);
  cache.flat = cache.pooled.data;

  const std::size_t units = cfg.lstm_units;
  LSTMState state = LSTMState::zeros(units);
  cache.steps.resize(cfg.repeat_steps);
  for (std::size_t t = 0; t < cfg.repeat_steps; ++t) {
    state = lstm_cell_forward(cache.flat, state, p.lstm, &cache.steps[t]).second;
  }
  cache.final_hidden = state.hidden;

  const std::size_t outs = cfg.output_size();
  cache.prediction.assign(outs, 0.0);
  for (std::size_t o = 0; o < outs; ++o) {
    double s = p.dense.bias[o];
    for (std::size_t u = 0; u < units; ++u) s += p.dense.weight.at(o, u) * state.hidden[u];
    cache.prediction[o] = s;
  }
  return cache.prediction;
}

/// conv -> pool -> flatten -> repeat -> LSTM (last hidden state) -> linear dense.
/// Returns horizon * n_features values, row-major over (horizon, features).
inline std::vector<double> network_forward(const Tensor& input, const TrainedNetwork& net) {
  ForwardCache cache;
  return forward_cached(input, net.config, net.params, cache);
}

inline double mse_loss(std::span<const double> prediction, std::span<const double> target) {
  double s = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double e = prediction[i] - target[i];
    s += e * e;
  }
  return s / static_cast<double>(prediction.size());
}

struct GradientSet {
  Parameters gradients;
  double loss = 0.0;
  std::vector<double> prediction;
};

/// Backpropagation of the sample MSE through dense, the unrolled LSTM, the
/// pooling argmax routing and the convolution. Gradients are accumulated into
/// `grads`, which must already have the network's shapes.
inline double accumulate_gradients(const TrainedNetwork& net, const Tensor& input, const Tensor& target,
                                   Parameters& grads, ForwardCache& cache) {
  const auto& cfg = net.config;
  const auto& p = net.params;
  if (target.size() != cfg.output_size()) {
    throw ConfigError("target size " + std::to_string(target.size()) + " does not match network output " +
                      std::to_string(cfg.output_size()));
  }
  forward_cached(input, cfg, p, cache);
  const std::size_t outs = cfg.output_size();
  const std::size_t units = cfg.lstm_units;
  const std::size_t flat_len = cache.flat.size();
  const std::size_t width = units + flat_len;

  std::vector<double> d_pred(outs);
  for (std::size_t o = 0; o < outs; ++o) {
    d_pred[o] = 2.0 * (cache.prediction[o] - target[o]) / static_cast<double>(outs);
  }
  const double loss = mse_loss(cache.prediction, target.data);

  std::vector<double> d_hidden(units, 0.0);
  for (std::size_t o = 0; o < outs; ++o) {
    grads.dense.bias[o] += d_pred[o];
    for (std::size_t u = 0; u < units; ++u) {
      grads.dense.weight.at(o, u) += d_pred[o] * cache.final_hidden[u];
      d_hidden[u] += d_pred[o] * p.dense.weight.at(o, u);
    }
  }

  std::vector<double> d_cell(units, 0.0);
  std::vector<double> d_flat(flat_len, 0.0);
  std::vector<double> a_f(units), a_i(units), a_g(units), a_o(units);
  struct GateRef {
    const std::vector<double>* pre_grad;
    const Tensor* w;
    Tensor* gw;
    Tensor* gb;
  };
  const GateRef gates[] = {
      {&a_f, &p.lstm.forget_w, &grads.lstm.forget_w, &grads.lstm.forget_b},
      {&a_i, &p.lstm.input_w, &grads.lstm.input_w, &grads.lstm.input_b},
      {&a_g, &p.lstm.candidate_w, &grads.lstm.candidate_w, &grads.lstm.candidate_b},
      {&a_o, &p.lstm.output_w, &grads.lstm.output_w, &grads.lstm.output_b},
  };
  std::vector<double> d_concat(width);
  for (std::size_t t = cfg.repeat_steps; t-- > 0;) {
    const auto& s = cache.steps[t];
    for (std::size_t u = 0; u < units; ++u) {
      const double dc = d_cell[u] + d_hidden[u] * s.output[u] * (1.0 - s.cell_tanh[u] * s.cell_tanh[u]);
      const double d_o = d_hidden[u] * s.cell_tanh[u];
      a_f[u] = dc * s.cell_prev[u] * s.forget[u] * (1.0 - s.forget[u]);
      a_i[u] = dc * s.candidate[u] * s.input[u] * (1.0 - s.input[u]);
      a_g[u] = dc * s.input[u] * (1.0 - s.candidate[u] * s.candidate[u]);
      a_o[u] = d_o * s.output[u] * (1.0 - s.output[u]);
      d_cell[u] = dc * s.forget[u];
    }
    std::fill(d_concat.begin(), d_concat.end(), 0.0);
    for (const auto& g : gates) {
      const auto& a = *g.pre_grad;
      for (std::size_t u = 0; u < units; ++u) {
        const double au = a[u];
        (*g.gb)[u] += au;
        if (au == 0.0) continue;
        double* gw_row = g.gw->data.data() + u * width;
        const double* w_row = g.w->data.data() + u * width;
        for (std::size_t j = 0; j < width; ++j) {
          gw_row[j] += au * s.concat[j];
          d_concat[j] += au * w_row[j];
        }
      }
    }
    std::copy(d_concat.begin(), d_concat.begin() + static_cast<std::ptrdiff_t>(units), d_hidden.begin());
    for (std::size_t j = 0; j < flat_len; ++j) d_flat[j] += d_concat[units + j];
  }

  // Pool routes each gradient to its argmax row; then through the activation.
  const std::size_t filters = cfg.n_filters;
  Tensor d_conv({cache.conv_out.dim(0), filters});
  for (std::size_t idx = 0; idx < flat_len; ++idx) {
    const std::size_t f = idx % filters;
    d_conv.at(cache.pool_argmax[idx], f) += d_flat[idx];
  }
  const std::size_t k = cfg.kernel_size, channels = cfg.n_features;
  for (std::size_t i = 0; i < d_conv.dim(0); ++i) {
    for (std::size_t f = 0; f < filters; ++f) {
      const double g = d_conv.at(i, f) *
                       activate_grad(cfg.conv_activation, cache.conv_pre.at(i, f), cache.conv_out.at(i, f));
      if (g == 0.0) continue;
      grads.conv.bias[f] += g;
      for (std::size_t m = 0; m < k; ++m) {
        for (std::size_t c = 0; c < channels; ++c) grads.conv.kernel.at(f, m, c) += g * input.at(i + m, c);
      }
    }
  }
  return loss;
}

/// Gradient of the sample MSE w.r.t. every parameter.
inline GradientSet compute_gradients(const TrainedNetwork& net, const Tensor& input, const Tensor& target) {
  GradientSet out{Parameters::zeros(net.config), 0.0, {}};
  ForwardCache cache;
  out.loss = accumulate_gradients(net, input, target, out.gradients, cache);
  out.prediction = cache.prediction;
  return out;
}

// ---------------------------------------------------------------------------
// Training

enum class OptimizerKind { adam, sgd };

inline OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

struct TrainingConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 1;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool shuffle = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("training epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("training batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("training learning_rate must be > 0");
    }
  }
};

namespace detail {

class Adam {
 public:
  Adam(const NetworkConfig& cfg, const TrainingConfig& tc)
      : m_(Parameters::zeros(cfg)), v_(Parameters::zeros(cfg)), tc_(tc) {}

  void step(Parameters& params, Parameters& grads, double scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(tc_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(tc_.beta2, static_cast<double>(t_));
    const double lr = tc_.learning_rate;
    std::vector<Tensor*> ps, gs, ms, vs;
    params.for_each([&](std::string_view, Tensor& t) { ps.push_back(&t); });
    grads.for_each([&](std::string_view, Tensor& t) { gs.push_back(&t); });
    m_.for_each([&](std::string_view, Tensor& t) { ms.push_back(&t); });
    v_.for_each([&](std::string_view, Tensor& t) { vs.push_back(&t); });
    for (std::size_t k = 0; k < ps.size(); ++k) {
      auto& p = ps[k]->data;
      auto& g = gs[k]->data;
      auto& m = ms[k]->data;
      auto& v = vs[k]->data;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] * scale;
        m[i] = tc_.beta1 * m[i] + (1.0 - tc_.beta1) * gi;
        v[i] = tc_.beta2 * v[i] + (1.0 - tc_.beta2) * gi * gi;
        p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + tc_.epsilon);
        g[i] = 0.0;
      }
    }
  }

 private:
  Parameters m_, v_;
  TrainingConfig tc_;
  std::uint64_t t_ = 0;
};

inline void sgd_step(Parameters& params, Parameters& grads, double lr, double scale) {
  std::vector<Tensor*> gs;
  grads.for_each([&](std::string_view, Tensor& t) { gs.push_back(&t); });
  std::size_t k = 0;
  params.for_each([&](std::string_view, Tensor& t) {
    auto& g = gs[k++]->data;
    for (std::size_t i = 0; i < t.size(); ++i) {
      t.data[i] -= lr * scale * g[i];
      g[i] = 0.0;
    }
  });
}

}  // namespace detail

/// Mini-batch training (batch 1 by default) on MSE. The loss history holds the
/// mean per-sample loss of each epoch, measured before each update.
inline TrainedNetwork train(TrainedNetwork net, const timeseries::WindowedSamples& samples,
                            const TrainingConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw ConfigError("train: no samples");
  if (samples.inputs.size() != samples.targets.size()) throw ConfigError("train: inputs/targets length mismatch");
  net.config.validate();

  Parameters grads = Parameters::zeros(net.config);
  detail::Adam adam(net.config, cfg);
  ForwardCache cache;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t in_batch = 0;
    auto flush = [&] {
      const double scale = 1.0 / static_cast<double>(in_batch);
      if (cfg.optimizer == OptimizerKind::adam) adam.step(net.params, grads, scale);
      else detail::sgd_step(net.params, grads, cfg.learning_rate, scale);
      in_batch = 0;
    };
    for (std::size_t idx : order) {
      total += accumulate_gradients(net, samples.inputs[idx], samples.targets[idx], grads, cache);
      if (++in_batch == cfg.batch_size) flush();
    }
    if (in_batch > 0) flush();
    const double epoch_loss = total / static_cast<double>(samples.size());
    net.loss_history.push_back(epoch_loss);
    if (!std::isfinite(epoch_loss)) {
      throw Diverged("training diverged at epoch " + std::to_string(epoch + 1) + " (loss " +
                     format_double(epoch_loss) + ")");
    }
  }
  return net;
}

/// Mean MSE of the network over a set of windows.
inline double evaluate_mse(const TrainedNetwork& net, const timeseries::WindowedSamples& samples) {
  if (samples.empty()) throw ConfigError("evaluate_mse: no samples");
  ForwardCache cache;
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += mse_loss(forward_cached(samples.inputs[i], net.config, net.params, cache), samples.targets[i].data);
  }
  return total / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Forecasting

/// Recursive forecast in scaled units: predict from the last `lookback` rows,
/// append the prediction, repeat. Returns (steps, features).
inline Tensor forecast_scaled(const TrainedNetwork& net, const Tensor& history, std::size_t steps) {
  const auto& cfg = net.config;
  if (steps < 1) throw ConfigError("forecast: steps must be >= 1");
  if (history.rank() != 2 || history.dim(1) != cfg.n_features) {
    throw ConfigError("forecast: history must be (time, " + std::to_string(cfg.n_features) + ")");
  }
  if (history.dim(0) < cfg.lookback) {
    throw TooShort("forecast: history length " + std::to_string(history.dim(0)) + " < lookback " +
                   std::to_string(cfg.lookback));
  }
  const std::size_t feats = cfg.n_features;
  std::vector<double> window(history.data.end() - static_cast<std::ptrdiff_t>(cfg.lookback * feats),
                             history.data.end());
  Tensor out({steps, feats});
  ForwardCache cache;
  std::size_t produced = 0;
  while (produced < steps) {
    Tensor input({cfg.lookback, feats}, window);
    const auto pred = forward_cached(input, cfg, net.params, cache);
    for (std::size_t h = 0; h < cfg.horizon && produced < steps; ++h, ++produced) {
      for (std::size_t c = 0; c < feats; ++c) out.at(produced, c) = pred[h * feats + c];
      window.erase(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(feats));
      window.insert(window.end(), pred.begin() + static_cast<std::ptrdiff_t>(h * feats),
                    pred.begin() + static_cast<std::ptrdiff_t>((h + 1) * feats));
    }
  }
  return out;
}

/// Recursive forecast reported in original units; one ScalingParams per feature.
inline Tensor iterative_forecast(const TrainedNetwork& net, const Tensor& history, std::size_t steps,
                                 std::span<const timeseries::ScalingParams> scaling) {
  if (scaling.size() != net.config.n_features) {
    throw ConfigError("iterative_forecast: need one ScalingParams per feature");
  }
  Tensor out = forecast_scaled(net, history, steps);
  for (std::size_t c = 0; c < out.dim(1); ++c) {
    for (std::size_t r = 0; r < out.dim(0); ++r) {
      const double v = out.at(r, c);
      out.at(r, c) = timeseries::inverse_scale(std::span<const double>(&v, 1), scaling[c]).front();
    }
  }
  return out;
}

}  // namespace cnnlstm::nn
