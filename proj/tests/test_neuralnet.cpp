#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "cnnlstm/model_io.hpp"
#include "cnnlstm/neuralnet.hpp"

#include "oracles.hpp"

using namespace cnnlstm;
using namespace cnnlstm::nn;
using cnnlstm::timeseries::ScalingParams;
using cnnlstm::timeseries::WindowedSamples;

TEST_CASE("conv_output_size arithmetic", "[nn][conv]") {
  REQUIRE(conv_output_size(10, 3, 0, 1) == 8);
  REQUIRE(conv_output_size(7, 7, 0, 1) == 1);
  REQUIRE(conv_output_size(9, 3, 1, 2) == 5);
  REQUIRE_THROWS_AS(conv_output_size(3, 4, 0, 1), ConfigError);
  REQUIRE_THROWS_AS(conv_output_size(3, 2, 0, 0), ConfigError);
}

TEST_CASE("conv1d_forward examples", "[nn][conv]") {
  Tensor in({4, 1}, {1, 2, 3, 4});
  Tensor k({1, 3, 1}, {1, 0, -1});
  Tensor b({1}, {0.0});
  auto out = conv1d_forward(in, k, b, Activation::identity);
  REQUIRE(out.shape == std::vector<std::size_t>{2, 1});
  REQUIRE(out.data == std::vector<double>{-2, -2});

  Tensor in3({3, 1}, {1, 1, 1});
  Tensor ones({1, 3, 1}, {1, 1, 1});
  REQUIRE(conv1d_forward(in3, ones, b, Activation::identity).data == std::vector<double>{3});

  Tensor zeros({2, 3, 1});
  Tensor zb({2});
  auto z = conv1d_forward(in, zeros, zb, Activation::relu);
  for (double v : z.data) REQUIRE(v == 0.0);

  REQUIRE_THROWS_AS(conv1d_forward(in, Tensor({1, 3, 2}), b, Activation::relu), ConfigError);
}

TEST_CASE("conv1d_forward spans all features", "[nn][conv]") {
  Tensor in({3, 2}, {1, 10, 2, 20, 3, 30});
  Tensor k({1, 2, 2}, {1, 0.5, -1, 0.25});
  Tensor b({1}, {1.0});
  auto out = conv1d_forward(in, k, b, Activation::identity);
  // row0: 1*1 + .5*10 - 1*2 + .25*20 + 1 = 10; row1: 2 + 10 - 3 + 7.5 + 1 = 17.5
  REQUIRE(out.data == std::vector<double>{10.0, 17.5});
}

TEST_CASE("maxpool1d_forward examples", "[nn][pool]") {
  REQUIRE(maxpool1d_forward(Tensor({4, 1}, {1, 3, 2, 8}), 2).data == std::vector<double>{3, 8});
  REQUIRE(maxpool1d_forward(Tensor({3, 1}, {5, 4, 3}), 2).data == std::vector<double>{5});
  REQUIRE(maxpool1d_forward(Tensor({6, 1}, 2.5), 3).data == std::vector<double>{2.5, 2.5});
  REQUIRE_THROWS_AS(maxpool1d_forward(Tensor({3, 1}), 0), ConfigError);
  std::vector<std::size_t> arg;
  maxpool1d_forward(Tensor({4, 2}, {1, 9, 3, 0, 2, 1, 8, 7}), 2, &arg);
  REQUIRE(arg == std::vector<std::size_t>{1, 0, 3, 3});
}

TEST_CASE("lstm_cell_forward with zero weights", "[nn][lstm]") {
  LstmWeights w = oracle::lstm_weights(3, 2, 0.0);
  LstmStepCache cache;
  auto [d, next] = lstm_cell_forward(std::vector<double>{0.3, -1.2}, LSTMState::zeros(3), w, &cache);
  for (std::size_t u = 0; u < 3; ++u) {
    REQUIRE(cache.forget[u] == 0.5);
    REQUIRE(cache.input[u] == 0.5);
    REQUIRE(cache.output[u] == 0.5);
    REQUIRE(cache.candidate[u] == 0.0);
    REQUIRE(next.cell[u] == 0.0);
    REQUIRE(d[u] == 0.0);
  }
}

TEST_CASE("lstm_cell_forward saturated gates keep the cell", "[nn][lstm]") {
  LstmWeights w = oracle::lstm_weights(1, 1, 0.0);
  w.forget_b[0] = 100;
  w.input_b[0] = -100;
  w.candidate_b[0] = 0;
  w.output_b[0] = 100;
  LSTMState prev{{0.7}, {0.0}};
  auto [d, next] = lstm_cell_forward(std::vector<double>{0.4}, prev, w);
  REQUIRE(next.cell[0] == Catch::Approx(0.7).margin(1e-12));
  REQUIRE(d[0] == Catch::Approx(std::tanh(0.7)).margin(1e-3));
  REQUIRE(d[0] == Catch::Approx(0.6044).margin(1e-4));
}

TEST_CASE("lstm_cell_forward matches the scalar-loop oracle", "[nn][lstm][oracle]") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t units = 1 + rng() % 4, input = 1 + rng() % 5;
    auto draw = oracle::random_lstm_draw(rng, units, input);
    auto [d, next] = lstm_cell_forward(draw.x, draw.prev, draw.w);
    auto [od, oc] = oracle::lstm_step(draw.x, draw.prev.hidden, draw.prev.cell, draw.w);
    for (std::size_t u = 0; u < units; ++u) {
      REQUIRE(std::abs(d[u] - od[u]) <= 1e-12);
      REQUIRE(std::abs(next.cell[u] - oc[u]) <= 1e-12);
    }
  }
  REQUIRE_THROWS_AS(lstm_cell_forward(std::vector<double>{1.0}, LSTMState::zeros(2), oracle::lstm_weights(2, 3, 0.1)),
                    ConfigError);
}

TEST_CASE("lstm outputs stay bounded", "[nn][lstm][property]") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> big(0.0, 20.0);
  for (int trial = 0; trial < 300; ++trial) {
    auto draw = oracle::random_lstm_draw(rng, 3, 4);
    for (auto& x : draw.x) x = big(rng);
    LstmStepCache c;
    auto [d, next] = lstm_cell_forward(draw.x, draw.prev, draw.w, &c);
    for (std::size_t u = 0; u < 3; ++u) {
      REQUIRE(std::abs(d[u]) < 1.0);
      REQUIRE((c.forget[u] >= 0.0 && c.forget[u] <= 1.0));
      REQUIRE((c.output[u] >= 0.0 && c.output[u] <= 1.0));
    }
  }
}

TEST_CASE("network config shape algebra", "[nn][config]") {
  NetworkConfig cfg;
  for (std::size_t k = 3; k <= 8; ++k) {
    for (std::size_t pool : {2, 3, 4}) {
      cfg.kernel_size = k;
      cfg.pool_size = pool;
      cfg.lookback = 7;
      const bool expect = k <= 7 && (7 - k + 1) / pool >= 1;
      REQUIRE(cfg.feasible() == expect);
      if (expect) REQUIRE(cfg.flat_length() == (conv_output_size(7, k, 0, 1) / pool) * cfg.n_filters);
    }
  }
  cfg.kernel_size = 8;
  REQUIRE_THROWS_AS(initialize_network(cfg), ConfigError);
}

TEST_CASE("zero-weight network outputs the dense bias", "[nn][forward]") {
  NetworkConfig cfg{.n_filters = 4, .kernel_size = 3, .pool_size = 2, .lstm_units = 5, .horizon = 2, .lookback = 7};
  TrainedNetwork net{cfg, Parameters::zeros(cfg), {}};
  net.params.dense.bias.data = {0.25, -1.5};
  Tensor in({7, 1}, {1, 2, 3, 4, 5, 6, 7});
  REQUIRE(network_forward(in, net) == std::vector<double>{0.25, -1.5});
}

TEST_CASE("network_forward matches the layer-by-layer oracle", "[nn][forward][oracle]") {
  std::mt19937_64 rng(123);
  for (Activation act : {Activation::relu, Activation::tanh}) {
    for (int sample = 0; sample < 3; ++sample) {
      NetworkConfig cfg{.n_filters = 3, .kernel_size = 2, .pool_size = 2, .lstm_units = 4, .repeat_steps = 3,
                        .n_features = 2, .horizon = 1, .lookback = 6, .conv_activation = act, .seed = rng()};
      auto net = oracle::randomized_network(cfg, rng);
      Tensor in = oracle::random_tensor(rng, {6, 2});
      auto got = network_forward(in, net);
      auto want = oracle::reference_forward(in, net);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(std::abs(got[i] - want[i]) <= 1e-12);
    }
  }
}

TEST_CASE("initialisation is deterministic in the seed", "[nn][init]") {
  NetworkConfig cfg{.n_filters = 32, .kernel_size = 3, .pool_size = 2, .lstm_units = 10, .seed = 42};
  auto a = initialize_network(cfg);
  auto b = initialize_network(cfg);
  REQUIRE(a.params == b.params);
  Tensor in({7, 1}, {0.1, 0.2, 0.3, 0.2, 0.1, 0.0, 0.5});
  REQUIRE(network_forward(in, a) == network_forward(in, b));
  cfg.seed = 43;
  REQUIRE_FALSE(initialize_network(cfg).params == a.params);
  for (double v : a.params.lstm.forget_b.data) REQUIRE(v == 0.0);
}

TEST_CASE("analytic gradients agree with central differences", "[nn][gradients][oracle]") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    for (Activation act : {Activation::relu, Activation::tanh}) {
      NetworkConfig cfg{.n_filters = 2, .kernel_size = 3, .pool_size = 2, .lstm_units = 4, .repeat_steps = 3,
                        .n_features = 1, .horizon = 1, .lookback = 6, .conv_activation = act, .seed = seed};
      auto net = oracle::randomized_network(cfg, rng);
      Tensor in = oracle::random_tensor(rng, {6, 1});
      Tensor target = oracle::random_tensor(rng, {1, 1});
      auto analytic = compute_gradients(net, in, target).gradients.flatten();
      auto numeric = oracle::finite_difference_gradients(net, in, target, 1e-5);
      REQUIRE(analytic.size() == numeric.size());
      REQUIRE(oracle::max_relative_error(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("gradients vanish at a perfect prediction", "[nn][gradients]") {
  std::mt19937_64 rng(8);
  NetworkConfig cfg{.n_filters = 2, .kernel_size = 3, .pool_size = 2, .lstm_units = 4, .lookback = 6, .seed = 8};
  auto net = oracle::randomized_network(cfg, rng);
  Tensor in = oracle::random_tensor(rng, {6, 1});
  Tensor target({1, 1}, network_forward(in, net));
  auto g = compute_gradients(net, in, target);
  REQUIRE(g.loss == 0.0);
  for (double v : g.gradients.flatten()) REQUIRE(v == 0.0);
}

TEST_CASE("dense bias gradient is 2(pred - target)/outputs", "[nn][gradients]") {
  std::mt19937_64 rng(10);
  NetworkConfig cfg{.n_filters = 2, .kernel_size = 3, .pool_size = 2, .lstm_units = 4, .horizon = 3, .lookback = 6};
  auto net = oracle::randomized_network(cfg, rng);
  Tensor in = oracle::random_tensor(rng, {6, 1});
  Tensor target({3, 1}, {0.1, 0.2, 0.3});
  auto g = compute_gradients(net, in, target);
  for (std::size_t o = 0; o < 3; ++o) {
    REQUIRE(g.gradients.dense.bias[o] == Catch::Approx(2.0 * (g.prediction[o] - target[o]) / 3.0).epsilon(1e-14));
  }
}

namespace {

WindowedSamples constant_fixture(std::size_t n, double input, double target) {
  WindowedSamples s;
  s.lookback = 6;
  s.horizon = 1;
  for (std::size_t i = 0; i < n; ++i) {
    s.inputs.emplace_back(std::vector<std::size_t>{6, 1}, input);
    s.targets.emplace_back(std::vector<std::size_t>{1, 1}, target);
  }
  return s;
}

}  // namespace

TEST_CASE("training learns a constant target", "[nn][train]") {
  NetworkConfig cfg{.n_filters = 2, .kernel_size = 3, .pool_size = 2, .lstm_units = 4, .lookback = 6, .seed = 3};
  TrainingConfig tc{.epochs = 200, .learning_rate = 1e-2, .seed = 3};
  auto trained = train(initialize_network(cfg), constant_fixture(8, 0.3, 0.5), tc);
  REQUIRE(trained.loss_history.size() == 200);
  REQUIRE(trained.loss_history.back() < 1e-4);
  REQUIRE(trained.loss_history.back() <= trained.loss_history.front());
}

TEST_CASE("training with sgd and larger batches also converges", "[nn][train]") {
  NetworkConfig cfg{.n_filters = 2, .kernel_size = 3, .pool_size = 2, .lstm_units = 4, .lookback = 6, .seed = 3};
  TrainingConfig tc{.epochs = 300, .batch_size = 4, .learning_rate = 5e-2, .optimizer = OptimizerKind::sgd, .seed = 3};
  auto trained = train(initialize_network(cfg), constant_fixture(8, 0.3, 0.5), tc);
  REQUIRE(trained.loss_history.back() < trained.loss_history.front());
  REQUIRE(trained.loss_history.back() < 1e-3);
}

TEST_CASE("training is reproducible and validates its config", "[nn][train]") {
  NetworkConfig cfg{.n_filters = 4, .kernel_size = 3, .pool_size = 2, .lstm_units = 5, .lookback = 6, .seed = 17};
  std::mt19937_64 rng(17);
  WindowedSamples s;
  for (int i = 0; i < 12; ++i) {
    s.inputs.push_back(oracle::random_tensor(rng, {6, 1}));
    s.targets.push_back(oracle::random_tensor(rng, {1, 1}));
  }
  TrainingConfig tc{.epochs = 5, .seed = 9};
  auto a = train(initialize_network(cfg), s, tc);
  auto b = train(initialize_network(cfg), s, tc);
  REQUIRE(a.loss_history == b.loss_history);
  REQUIRE(a.params == b.params);

  tc.epochs = 0;
  REQUIRE_THROWS_AS(train(initialize_network(cfg), s, tc), ConfigError);
  tc.epochs = 1;
  REQUIRE_THROWS_AS(train(initialize_network(cfg), WindowedSamples{}, tc), ConfigError);
}

TEST_CASE("training aborts on divergence", "[nn][train]") {
  NetworkConfig cfg{.n_filters = 2, .kernel_size = 3, .pool_size = 2, .lstm_units = 4, .lookback = 6, .seed = 1};
  TrainingConfig tc{.epochs = 50, .learning_rate = 1e300, .optimizer = OptimizerKind::sgd, .seed = 1};
  REQUIRE_THROWS_AS(train(initialize_network(cfg), constant_fixture(4, 1.0, 1e10), tc), Diverged);
}

TEST_CASE("iterative forecast base case and unroll", "[nn][forecast]") {
  std::mt19937_64 rng(21);
  NetworkConfig cfg{.n_filters = 3, .kernel_size = 3, .pool_size = 2, .lstm_units = 4, .lookback = 6};
  auto net = oracle::randomized_network(cfg, rng);
  Tensor history = oracle::random_tensor(rng, {10, 1});
  const ScalingParams scale{100.0, 300.0, false};

  auto one = iterative_forecast(net, history, 1, std::span(&scale, 1));
  Tensor last({6, 1}, std::vector<double>(history.data.end() - 6, history.data.end()));
  REQUIRE(one.data == std::vector<double>{100.0 + network_forward(last, net)[0] * 200.0});

  // Manual unroll: predict, append, predict, append, predict.
  std::vector<double> window(history.data.end() - 6, history.data.end());
  std::vector<double> manual;
  for (int step = 0; step < 3; ++step) {
    const double y = network_forward(Tensor({6, 1}, window), net)[0];
    manual.push_back(y);
    window.erase(window.begin());
    window.push_back(y);
  }
  REQUIRE(forecast_scaled(net, history, 3).data == manual);

  REQUIRE_THROWS_AS(forecast_scaled(net, history, 0), ConfigError);
  REQUIRE_THROWS_AS(forecast_scaled(net, Tensor({5, 1}), 1), TooShort);
}

TEST_CASE("a fixed-point network continues a constant", "[nn][forecast]") {
  NetworkConfig cfg{.n_filters = 2, .kernel_size = 3, .pool_size = 2, .lstm_units = 3, .lookback = 6};
  TrainedNetwork net{cfg, Parameters::zeros(cfg), {}};
  net.params.dense.bias[0] = 0.4;
  Tensor history({8, 1}, 0.4);
  REQUIRE(forecast_scaled(net, history, 5).data == std::vector<double>(5, 0.4));
}

TEST_CASE("model JSON round trip is bit exact", "[nn][io][property]") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkConfig cfg{.n_filters = 1 + rng() % 4, .kernel_size = 2 + rng() % 3, .pool_size = 1 + rng() % 2,
                      .lstm_units = 1 + rng() % 5, .repeat_steps = 1 + rng() % 3, .n_features = 1 + rng() % 2,
                      .horizon = 1 + rng() % 2, .lookback = 6,
                      .conv_activation = (trial % 2) ? Activation::tanh : Activation::relu, .seed = rng()};
    auto net = oracle::randomized_network(cfg, rng);
    net.loss_history = {0.1 / 3.0, std::nextafter(1.0, 2.0), 5e-324};
    auto back = model_from_json(nlohmann::json::parse(model_to_json(net).dump()));
    REQUIRE(back.config == net.config);
    REQUIRE(back.params == net.params);
    REQUIRE(back.loss_history == net.loss_history);
  }
  REQUIRE_THROWS_AS(model_from_json(nlohmann::json{{"format", "other"}}), ConfigError);
}
