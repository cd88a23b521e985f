// cnnlstm: command-line front end for the forecasting pipeline.
//
//   cnnlstm ingest   --config run.json
//   cnnlstm tune     --config run.json [--algorithm ga] [--surrogate hash]
//   cnnlstm train | forecast | evaluate --config run.json
//   cnnlstm compare  scores.csv [--q 2.728] [--out DIR]
//   cnnlstm bench-opt --function rastrigin --dim 5 --seed 3
//
// Flags override the JSON config. CNNLSTM_CONFIG names the default config file.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "cnnlstm/pipeline.hpp"

namespace {

using namespace cnnlstm;
namespace pl = cnnlstm::pipeline;

template <class T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& out, const std::string& help) {
  app->add_option_function<T>(name, [&out](const T& v) { out = v; }, help);
}

// Flag values that override the config. Unset flags leave the config alone.
struct Overrides {
  std::string config_path;
  std::optional<std::string> data, date_column, region, output_dir, algorithm, surrogate;
  std::optional<std::vector<std::string>> variables;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> lookback, horizon, population, iterations, budget, fitness_epochs, workers, epochs,
      batch_size, steps;
  std::optional<double> split, learning_rate;
  bool ignore_tuned = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON run config (default: $CNNLSTM_CONFIG)");
    optional_flag(app, "--data", data, "input CSV");
    optional_flag(app, "--date-column", date_column, "name of the date column");
    app->add_option_function<std::vector<std::string>>(
        "--variables", [this](const std::vector<std::string>& v) { variables = v; }, "columns to model");
    optional_flag(app, "--region", region, "region identifier");
    optional_flag(app, "--output-dir", output_dir, "parent directory of run directories");
    optional_flag(app, "--seed", seed, "global seed");
    optional_flag(app, "--lookback", lookback, "input window length in days");
    optional_flag(app, "--horizon", horizon, "days predicted per window");
    optional_flag(app, "--split", split, "fraction of days used for training");
    optional_flag(app, "--algorithm", algorithm, "rs-gwo-woa | gwo | woa | ga");
    optional_flag(app, "--population", population, "tuner population size");
    optional_flag(app, "--iterations", iterations, "tuner iterations");
    optional_flag(app, "--budget", budget, "distinct cells to score (0 = one run)");
    optional_flag(app, "--surrogate", surrogate, "none | hash");
    optional_flag(app, "--fitness-epochs", fitness_epochs, "epochs per fitness evaluation");
    optional_flag(app, "--workers", workers, "parallel fitness evaluations");
    optional_flag(app, "--epochs", epochs, "final training epochs");
    optional_flag(app, "--batch-size", batch_size, "training batch size");
    optional_flag(app, "--learning-rate", learning_rate, "training learning rate");
    optional_flag(app, "--steps", steps, "days to forecast");
    app->add_flag("--ignore-tuned", ignore_tuned, "train with the config network even if tuning results exist");
  }

  pl::RunConfig resolve() const {
    std::string path = config_path;
    if (path.empty()) {
      if (const char* env = std::getenv("CNNLSTM_CONFIG")) path = env;
    }
    pl::RunConfig c = path.empty() ? pl::RunConfig{} : pl::load_config(path);
    if (data) c.data.path = *data;
    if (date_column) c.data.date_column = *date_column;
    if (variables) c.data.variables = *variables;
    if (region) c.data.region_id = *region;
    if (output_dir) c.output_dir = *output_dir;
    if (seed) c.seed = *seed;
    if (lookback) c.lookback = *lookback;
    if (horizon) c.horizon = *horizon;
    if (split) c.split_ratio = *split;
    if (algorithm) c.tuning.algorithm = *algorithm;
    if (population) c.tuning.population = *population;
    if (iterations) c.tuning.iterations = *iterations;
    if (budget) c.tuning.budget = *budget;
    if (surrogate) c.tuning.surrogate = *surrogate;
    if (fitness_epochs) c.tuning.fitness_epochs = *fitness_epochs;
    if (workers) c.tuning.workers = *workers;
    if (epochs) c.training.epochs = *epochs;
    if (batch_size) c.training.batch_size = *batch_size;
    if (learning_rate) c.training.learning_rate = *learning_rate;
    if (steps) c.forecast_steps = *steps;
    if (ignore_tuned) c.use_tuned = false;
    return c;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"CNN-LSTM epidemic forecaster with metaheuristic hyperparameter tuning"};
  app.set_version_flag("--version", std::string(CNNLSTM_VERSION));
  app.require_subcommand(1);

  Overrides ov;
  std::function<void()> action;
  auto pipeline_cmd = [&](const char* name, const char* help, void (*fn)(const pl::RunConfig&, std::ostream&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    ov.attach(sub);
    sub->callback([&, fn] { action = [&, fn] { fn(ov.resolve(), std::cout); }; });
  };
  pipeline_cmd("ingest", "clean, impute and scale the input CSV",
               [](const pl::RunConfig& c, std::ostream& o) { pl::cmd_ingest(c, o); });
  pipeline_cmd("tune", "search CNN-LSTM hyperparameters", pl::cmd_tune);
  pipeline_cmd("train", "train the final model for each variable", pl::cmd_train);
  pipeline_cmd("forecast", "recursive forecast past the last observed day", pl::cmd_forecast);
  pipeline_cmd("evaluate", "score the models on the held-out days", pl::cmd_evaluate);

  std::string scores_path;
  std::string out_dir = ".";
  double alpha = 0.05;
  std::optional<double> q;
  CLI::App* compare = app.add_subcommand("compare", "Friedman test and Nemenyi critical difference over a score CSV");
  compare->add_option("scores", scores_path, "CSV: header test,method1,...; one row per test")->required();
  compare->add_option("-o,--out", out_dir, "directory for comparison.json and cd_diagram.csv");
  compare->add_option("--alpha", alpha, "significance level (0.05 or 0.10)");
  optional_flag(compare, "--q", q, "use this Nemenyi q instead of the table value");
  compare->callback([&] { action = [&] { pl::cmd_compare(scores_path, out_dir, alpha, q, std::cout); }; });

  pl::BenchSettings bench;
  std::optional<std::string> trace;
  CLI::App* bo = app.add_subcommand("bench-opt", "run an optimizer on a benchmark function");
  bo->add_option("-f,--function", bench.function, "sphere | rastrigin | rosenbrock | ackley");
  bo->add_option("-d,--dim", bench.dim, "dimension");
  optional_flag(bo, "--lower", bench.lower, "lower bound in every dimension");
  optional_flag(bo, "--upper", bench.upper, "upper bound in every dimension");
  bo->add_option("-a,--algorithm", bench.algorithm, "rs-gwo-woa | gwo | woa | ga");
  bo->add_option("-p,--population", bench.params.population_size, "population size");
  bo->add_option("-i,--iterations", bench.params.max_iterations, "iterations");
  bo->add_option("-s,--seed", bench.params.seed, "seed");
  bo->add_option("--workers", bench.params.workers, "parallel evaluations");
  optional_flag(bo, "--trace", trace, "write the best-so-far trace CSV here");
  bo->callback([&] {
    action = [&] {
      std::optional<pl::fs::path> path;
      if (trace) path = *trace;
      pl::cmd_bench_opt(bench, path, std::cout);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config_error);
  }
  action();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const cnnlstm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(cnnlstm::ExitCode::config_error);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(cnnlstm::ExitCode::config_error);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
