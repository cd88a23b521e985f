#pragma once

// Population-based optimisers over a box: grey wolf (GWO), whale (WOA), the
// random-switching hybrid of the two, and a generational GA baseline.
// All minimise. Positions are clamped into the box after every move.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cnnlstm/core.hpp"

namespace cnnlstm::opt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct SearchBounds {
  std::vector<double> lower;
  std::vector<double> upper;

  static SearchBounds uniform(std::size_t dim, double lo, double hi) {
    return {std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
  }

  std::size_t dim() const noexcept { return lower.size(); }

  void validate() const {
    if (lower.size() != upper.size() || lower.empty()) {
      throw ConfigError("search bounds need equal, non-zero lengths");
    }
    for (std::size_t d = 0; d < lower.size(); ++d) {
      if (!(lower[d] < upper[d])) throw ConfigError("search bounds: lower >= upper in dimension " + std::to_string(d));
    }
  }

  bool contains(std::span<const double> x) const {
    if (x.size() != dim()) return false;
    for (std::size_t d = 0; d < x.size(); ++d) {
      if (!(x[d] >= lower[d] && x[d] <= upper[d])) return false;
    }
    return true;
  }
};

struct Agent {
  std::vector<double> position;
  double fitness = kInf;
};

using Population = std::vector<Agent>;

struct OptimizerParams {
  std::size_t population_size = 30;
  std::size_t max_iterations = 100;
  std::uint64_t seed = 0;
  double spiral_b = 1.0;
  double ga_crossover_rate = 0.25;
  double ga_mutation_rate = 0.25;
  std::size_t ga_tournament_size = 2;
  /// Threads used to evaluate one iteration's positions. 1 = inline.
  std::size_t workers = 1;
  /// Optional starting positions; must hold exactly population_size points.
  std::vector<std::vector<double>> initial_population;

  void validate() const {
    if (population_size < 4) throw ConfigError("population_size must be >= 4");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!rate_ok(ga_crossover_rate) || !rate_ok(ga_mutation_rate)) throw ConfigError("GA rates must lie in [0, 1]");
    if (ga_tournament_size < 1) throw ConfigError("tournament size must be >= 1");
    if (!initial_population.empty() && initial_population.size() != population_size) {
      throw ConfigError("initial_population must hold exactly population_size points");
    }
  }
};

struct OptimizationTrace {
  /// Best fitness seen so far, one entry per iteration (never increases).
  std::vector<double> best_fitness_per_iteration;
  std::vector<double> best_position;
  std::size_t evaluations = 0;
  std::size_t gwo_iterations = 0;
  std::size_t woa_iterations = 0;
};

struct OptimizationResult {
  std::vector<double> best_position;
  double best_fitness = kInf;
  OptimizationTrace trace;
};

using Objective = std::function<double(std::span<const double>)>;
/// Evaluates a whole iteration's positions at once; result i belongs to position i.
using BatchObjective = std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

/// NaN (and anything else non-comparable) becomes +inf so it is never selected.
inline double sanitize_fitness(double f) noexcept { return std::isnan(f) ? kInf : f; }

/// Calls fn(i) for i in [0, n) on up to `workers` threads (strided split).
/// The first exception thrown by any call is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  const std::size_t n_threads = std::min(workers, n);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n_threads);
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += n_threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Wraps a pointwise objective. Results land by index, so the outcome does not
/// depend on thread scheduling.
inline BatchObjective make_batch_objective(Objective f, std::size_t workers = 1) {
  return [f = std::move(f), workers](const std::vector<std::vector<double>>& xs) {
    std::vector<double> out(xs.size());
    parallel_for(xs.size(), workers, [&](std::size_t i) { out[i] = f(xs[i]); });
    return out;
  };
}

inline void clamp_in_place(std::span<double> x, const SearchBounds& b) {
  for (std::size_t d = 0; d < x.size(); ++d) x[d] = std::clamp(x[d], b.lower[d], b.upper[d]);
}

inline std::vector<double> clamp_to_bounds(std::span<const double> position, const SearchBounds& bounds) {
  if (position.size() != bounds.dim()) throw ConfigError("clamp_to_bounds: dimension mismatch");
  std::vector<double> out(position.begin(), position.end());
  clamp_in_place(out, bounds);
  return out;
}

/// The three best agents seen so far, best first. Updated from every evaluated
/// agent, so after an iteration each leader is no worse than any agent of it.
struct Leaders {
  std::array<std::optional<Agent>, 3> slots;

  const Agent& alpha() const { return *slots[0]; }
  const Agent& beta() const { return slots[1] ? *slots[1] : *slots[0]; }
  const Agent& delta() const { return slots[2] ? *slots[2] : beta(); }
  bool empty() const noexcept { return !slots[0]; }

  void offer(const Agent& a) {
    auto better = [&](std::size_t k) { return !slots[k] || a.fitness < slots[k]->fitness; };
    if (better(0)) {
      slots[2] = std::move(slots[1]);
      slots[1] = std::move(slots[0]);
      slots[0] = a;
    } else if (better(1)) {
      slots[2] = std::move(slots[1]);
      slots[1] = a;
    } else if (better(2)) {
      slots[2] = a;
    }
  }
};

/// Coefficients for one wolf moving towards one leader.
struct GwoCoefficients {
  std::vector<double> A;
  std::vector<double> C;
};

/// X(t+1) = mean over leaders k of (X_k - A_k * |C_k * X_k - X|). Not clamped.
inline std::vector<double> gwo_move(std::span<const double> x,
                                    const std::array<std::span<const double>, 3>& leaders,
                                    const std::array<GwoCoefficients, 3>& coef) {
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double dist = std::abs(coef[k].C[d] * leaders[k][d] - x[d]);
      out[d] += leaders[k][d] - coef[k].A[d] * dist;
    }
  }
  for (double& v : out) v /= 3.0;
  return out;
}

/// One GWO sweep: fresh A = 2a r1 - a and C = 2 r2 per leader, agent and
/// dimension. Positions are clamped; fitness is left stale for the caller.
template <class Rng>
void gwo_step(Population& pop, const Leaders& leaders, double a, Rng& rng, const SearchBounds& bounds) {
  if (pop.size() < 4) throw ConfigError("gwo_step: population must hold at least 4 agents");
  if (leaders.empty()) throw ConfigError("gwo_step: leaders not initialised");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const std::size_t dim = bounds.dim();
  const std::array<std::span<const double>, 3> lead{leaders.alpha().position, leaders.beta().position,
                                                    leaders.delta().position};
  std::array<GwoCoefficients, 3> coef;
  for (auto& c : coef) {
    c.A.resize(dim);
    c.C.resize(dim);
  }
  for (auto& agent : pop) {
    for (auto& c : coef) {
      for (std::size_t d = 0; d < dim; ++d) {
        c.A[d] = 2.0 * a * u01(rng) - a;
        c.C[d] = 2.0 * u01(rng);
      }
    }
    agent.position = gwo_move(agent.position, lead, coef);
    clamp_in_place(agent.position, bounds);
  }
}

/// Random draws that decide one whale's move.
struct WoaDraw {
  double A = 0.0;  // 2a r1 - a
  double C = 0.0;  // 2 r2
  double p = 0.0;  // branch selector in [0, 1]
  double l = 0.0;  // spiral parameter in [-1, 1]
};

enum class WoaBranch { encircle, explore, spiral };

inline WoaBranch woa_branch(const WoaDraw& draw) {
  if (draw.p >= 0.5) return WoaBranch::spiral;
  return std::abs(draw.A) < 1.0 ? WoaBranch::encircle : WoaBranch::explore;
}

/// p < 0.5, |A| < 1:  X* - A |C X* - X|
/// p < 0.5, |A| >= 1: X_rand - A |C X_rand - X|
/// p >= 0.5:          |X* - X| e^{bl} cos(2 pi l) + X*
/// Not clamped.
inline std::vector<double> woa_move(std::span<const double> x, std::span<const double> best,
                                    std::span<const double> random_agent, const WoaDraw& draw, double spiral_b) {
  std::vector<double> out(x.size());
  switch (woa_branch(draw)) {
    case WoaBranch::encircle:
      for (std::size_t d = 0; d < x.size(); ++d) out[d] = best[d] - draw.A * std::abs(draw.C * best[d] - x[d]);
      break;
    case WoaBranch::explore:
      for (std::size_t d = 0; d < x.size(); ++d) {
        out[d] = random_agent[d] - draw.A * std::abs(draw.C * random_agent[d] - x[d]);
      }
      break;
    case WoaBranch::spiral: {
      const double factor = std::exp(spiral_b * draw.l) * std::cos(2.0 * std::numbers::pi * draw.l);
      for (std::size_t d = 0; d < x.size(); ++d) out[d] = std::abs(best[d] - x[d]) * factor + best[d];
      break;
    }
  }
  return out;
}

/// One WOA sweep around `best`. The exploration partner is a uniformly chosen
/// agent other than the one moving; partners are read from the pre-sweep positions.
template <class Rng>
void woa_step(Population& pop, std::span<const double> best_in, double a, Rng& rng, const SearchBounds& bounds,
              double spiral_b = 1.0) {
  if (pop.size() < 2) throw ConfigError("woa_step: population must hold at least 2 agents");
  const std::vector<double> best(best_in.begin(), best_in.end());  // may alias an agent
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> u11(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> other(0, pop.size() - 2);
  const Population before = pop;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    WoaDraw draw;
    draw.A = 2.0 * a * u01(rng) - a;
    draw.C = 2.0 * u01(rng);
    draw.p = u01(rng);
    draw.l = u11(rng);
    std::size_t j = other(rng);
    if (j >= i) ++j;
    pop[i].position = woa_move(before[i].position, best, before[j].position, draw, spiral_b);
    clamp_in_place(pop[i].position, bounds);
  }
}

enum class Algorithm { rs_gwo_woa, gwo, woa, ga };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::rs_gwo_woa: return "rs-gwo-woa";
    case Algorithm::gwo: return "gwo";
    case Algorithm::woa: return "woa";
    case Algorithm::ga: return "ga";
  }
  return "?";
}

inline Algorithm algorithm_from_string(std::string_view s) {
  if (s == "rs-gwo-woa" || s == "rs_gwo_woa") return Algorithm::rs_gwo_woa;
  if (s == "gwo") return Algorithm::gwo;
  if (s == "woa") return Algorithm::woa;
  if (s == "ga") return Algorithm::ga;
  throw ConfigError("unknown algorithm '" + std::string(s) + "' (expected rs-gwo-woa, gwo, woa or ga)");
}

namespace detail {

template <class Rng>
Population initial_population(const SearchBounds& bounds, const OptimizerParams& params, Rng& rng) {
  Population pop(params.population_size);
  if (!params.initial_population.empty()) {
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (params.initial_population[i].size() != bounds.dim()) {
        throw ConfigError("initial_population point has the wrong dimension");
      }
      pop[i].position = clamp_to_bounds(params.initial_population[i], bounds);
    }
    return pop;
  }
  for (auto& agent : pop) {
    agent.position.resize(bounds.dim());
    for (std::size_t d = 0; d < bounds.dim(); ++d) {
      agent.position[d] = std::uniform_real_distribution<double>(bounds.lower[d], bounds.upper[d])(rng);
    }
  }
  return pop;
}

inline void evaluate(Population& pop, const BatchObjective& objective, OptimizationTrace& trace) {
  std::vector<std::vector<double>> xs;
  xs.reserve(pop.size());
  for (const auto& a : pop) xs.push_back(a.position);
  const auto fs = objective(xs);
  if (fs.size() != pop.size()) throw ConfigError("batch objective returned the wrong number of values");
  for (std::size_t i = 0; i < pop.size(); ++i) pop[i].fitness = sanitize_fitness(fs[i]);
  trace.evaluations += pop.size();
}

inline OptimizationResult finish(const Agent& best, OptimizationTrace trace) {
  if (!std::isfinite(best.fitness)) {
    throw DegenerateObjective("every evaluated position returned a non-finite objective value");
  }
  trace.best_position = best.position;
  return {best.position, best.fitness, std::move(trace)};
}

}  // namespace detail

/// GWO/WOA driver. `mode` picks the hybrid (fair coin per iteration) or a pure
/// variant. a = 2 (1 - t / T) is shared by both branches.
inline OptimizationResult swarm_optimize(Algorithm mode, const BatchObjective& objective, const SearchBounds& bounds,
                                         const OptimizerParams& params) {
  if (mode == Algorithm::ga) throw ConfigError("swarm_optimize does not run the GA");
  bounds.validate();
  params.validate();
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  OptimizationTrace trace;
  Population pop = detail::initial_population(bounds, params, rng);
  detail::evaluate(pop, objective, trace);
  Leaders leaders;
  for (const auto& a : pop) leaders.offer(a);

  const double T = static_cast<double>(params.max_iterations);
  for (std::size_t t = 0; t < params.max_iterations; ++t) {
    const double a = 2.0 * (1.0 - static_cast<double>(t) / T);
    bool use_woa = mode == Algorithm::woa;
    if (mode == Algorithm::rs_gwo_woa) use_woa = coin(rng) < 0.5;
    if (use_woa) {
      woa_step(pop, leaders.alpha().position, a, rng, bounds, params.spiral_b);
      ++trace.woa_iterations;
    } else {
      gwo_step(pop, leaders, a, rng, bounds);
      ++trace.gwo_iterations;
    }
    detail::evaluate(pop, objective, trace);
    for (const auto& agent : pop) leaders.offer(agent);
    trace.best_fitness_per_iteration.push_back(leaders.alpha().fitness);
  }
  return detail::finish(leaders.alpha(), std::move(trace));
}

inline OptimizationResult rs_gwo_woa(const BatchObjective& f, const SearchBounds& b, const OptimizerParams& p) {
  return swarm_optimize(Algorithm::rs_gwo_woa, f, b, p);
}

inline OptimizationResult rs_gwo_woa(const Objective& f, const SearchBounds& b, const OptimizerParams& p) {
  return swarm_optimize(Algorithm::rs_gwo_woa, make_batch_objective(f, p.workers), b, p);
}

/// Tournament of `size` uniformly drawn agents; lowest fitness wins.
template <class Rng>
const Agent& tournament_select(const Population& pop, std::size_t size, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
  const Agent* best = &pop[pick(rng)];
  for (std::size_t k = 1; k < size; ++k) {
    const Agent& c = pop[pick(rng)];
    if (c.fitness < best->fitness) best = &c;
  }
  return *best;
}

/// Each gene comes from `other` with probability `rate`.
template <class Rng>
std::vector<double> uniform_crossover(std::span<const double> first, std::span<const double> other, double rate,
                                      Rng& rng) {
  std::bernoulli_distribution swap(rate);
  std::vector<double> child(first.begin(), first.end());
  for (std::size_t d = 0; d < child.size(); ++d) {
    if (swap(rng)) child[d] = other[d];
  }
  return child;
}

/// Each gene is redrawn uniformly inside its bounds with probability `rate`.
/// Returns the number of genes redrawn.
template <class Rng>
std::size_t uniform_mutation(std::span<double> genome, const SearchBounds& bounds, double rate, Rng& rng) {
  std::bernoulli_distribution mutate(rate);
  std::size_t n = 0;
  for (std::size_t d = 0; d < genome.size(); ++d) {
    if (mutate(rng)) {
      genome[d] = std::uniform_real_distribution<double>(bounds.lower[d], bounds.upper[d])(rng);
      ++n;
    }
  }
  return n;
}

/// Generational GA: tournament selection, uniform crossover, uniform mutation,
/// one elite carried over unchanged.
inline OptimizationResult ga_optimize(const BatchObjective& objective, const SearchBounds& bounds,
                                      const OptimizerParams& params) {
  bounds.validate();
  params.validate();
  std::mt19937_64 rng(params.seed);
  OptimizationTrace trace;
  Population pop = detail::initial_population(bounds, params, rng);
  detail::evaluate(pop, objective, trace);
  auto best_of = [](const Population& p) {
    return *std::min_element(p.begin(), p.end(), [](const Agent& x, const Agent& y) { return x.fitness < y.fitness; });
  };
  Agent best = best_of(pop);

  for (std::size_t gen = 0; gen < params.max_iterations; ++gen) {
    Population children;
    children.reserve(pop.size() - 1);
    while (children.size() + 1 < pop.size()) {
      const Agent& a = tournament_select(pop, params.ga_tournament_size, rng);
      const Agent& b = tournament_select(pop, params.ga_tournament_size, rng);
      Agent child{uniform_crossover(a.position, b.position, params.ga_crossover_rate, rng), kInf};
      uniform_mutation(child.position, bounds, params.ga_mutation_rate, rng);
      children.push_back(std::move(child));
    }
    detail::evaluate(children, objective, trace);
    Population next;
    next.reserve(pop.size());
    next.push_back(best_of(pop));
    for (auto& c : children) next.push_back(std::move(c));
    pop = std::move(next);
    const Agent gen_best = best_of(pop);
    if (gen_best.fitness < best.fitness) best = gen_best;
    trace.best_fitness_per_iteration.push_back(best.fitness);
  }
  return detail::finish(best, std::move(trace));
}

inline OptimizationResult ga_optimize(const Objective& f, const SearchBounds& b, const OptimizerParams& p) {
  return ga_optimize(make_batch_objective(f, p.workers), b, p);
}

/// Runs any of the four optimisers.
inline OptimizationResult optimize(Algorithm algorithm, const BatchObjective& f, const SearchBounds& b,
                                   const OptimizerParams& p) {
  if (algorithm == Algorithm::ga) return ga_optimize(f, b, p);
  return swarm_optimize(algorithm, f, b, p);
}

inline OptimizationResult optimize(Algorithm algorithm, const Objective& f, const SearchBounds& b,
                                   const OptimizerParams& p) {
  return optimize(algorithm, make_batch_objective(f, p.workers), b, p);
}

}  // namespace cnnlstm::opt
