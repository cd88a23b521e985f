#pragma once

// Standard test functions for the optimisers. All have global minimum 0.

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cnnlstm/core.hpp"
#include "cnnlstm/metaheuristics.hpp"

namespace cnnlstm::opt {

/// sum x_i^2, minimum at the origin.
inline double sphere(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

/// 10 d + sum (x_i^2 - 10 cos(2 pi x_i)), minimum at the origin.
inline double rastrigin(std::span<const double> x) {
  double s = 10.0 * static_cast<double>(x.size());
  for (double v : x) s += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v);
  return s;
}

/// sum 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2, minimum at (1, ..., 1).
inline double rosenbrock(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i];
    const double b = 1.0 - x[i];
    s += 100.0 * a * a + b * b;
  }
  return s;
}

/// -20 exp(-0.2 sqrt(mean x^2)) - exp(mean cos(2 pi x)) + 20 + e, minimum at the origin.
inline double ackley(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double n = static_cast<double>(x.size());
  double sq = 0.0, cs = 0.0;
  for (double v : x) {
    sq += v * v;
    cs += std::cos(2.0 * std::numbers::pi * v);
  }
  return -20.0 * std::exp(-0.2 * std::sqrt(sq / n)) - std::exp(cs / n) + 20.0 + std::numbers::e;
}

struct Benchmark {
  std::string_view name;
  double (*function)(std::span<const double>);
  double default_lower;
  double default_upper;
};

inline constexpr Benchmark kBenchmarks[] = {
    {"sphere", sphere, -5.12, 5.12},
    {"rastrigin", rastrigin, -5.12, 5.12},
    {"rosenbrock", rosenbrock, -5.0, 10.0},
    {"ackley", ackley, -32.768, 32.768},
};

inline const Benchmark& find_benchmark(std::string_view name) {
  for (const auto& b : kBenchmarks) {
    if (b.name == name) return b;
  }
  std::string known;
  for (const auto& b : kBenchmarks) known += (known.empty() ? "" : ", ") + std::string(b.name);
  throw ConfigError("unknown benchmark '" + std::string(name) + "' (known: " + known + ")");
}

/// iteration,best_fitness rows; iteration counts from 1.
inline std::string trace_to_csv(const OptimizationTrace& trace) {
  std::string out = "iteration,best_fitness\n";
  for (std::size_t i = 0; i < trace.best_fitness_per_iteration.size(); ++i) {
    out += std::to_string(i + 1) + "," + format_double(trace.best_fitness_per_iteration[i]) + "\n";
  }
  return out;
}

}  // namespace cnnlstm::opt
