// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/plan/cem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "spimag/errors.hpp"

namespace spimag::plan {

void CemConfig::validate() const {
  if (candidates == 0 || elites == 0 || elites > candidates) {
    throw ConfigError("CEM needs 1 <= elites <= candidates, got E=" + std::to_string(elites) +
                      " K=" + std::to_string(candidates));
  }
  if (iterations == 0) throw ConfigError("CEM needs at least one iteration");
  if (horizon == 0) throw ConfigError("planning horizon must be at least 1");
  if (action_dim == 0) throw ConfigError("action_dim must be positive");
  if (!(action_max > 0.0)) throw ConfigError("action_max must be positive");
  if (!(std_floor > 0.0)) throw ConfigError("std_floor must be positive");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t iteration, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),      static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),    static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(iteration), static_cast<std::uint32_t>(index)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[1]) << 32) | words[0];
}

CemState initial_state(const CemConfig& cfg) {
  return {Tensor({cfg.horizon, cfg.action_dim}, 0.0), Tensor({cfg.horizon, cfg.action_dim}, cfg.action_max / 2.0)};
}

CemResult cem_optimize(const CemConfig& cfg, const BatchScorer& score) {
  cfg.validate();
  const std::size_t n = cfg.horizon * cfg.action_dim;
  CemResult res;
  res.state = initial_state(cfg);
  double best = std::numeric_limits<double>::infinity();

  std::vector<Tensor> elites;
  std::vector<double> elite_scores;
  std::vector<Tensor> plans(cfg.candidates);
  for (std::size_t m = 0; m < cfg.iterations; ++m) {
    for (std::size_t c = 0; c < cfg.candidates; ++c) {
      std::mt19937_64 rng(derive_seed(cfg.seed, cfg.stream, m, c));
      std::normal_distribution<double> normal(0.0, 1.0);
      Tensor plan({cfg.horizon, cfg.action_dim});
      for (std::size_t i = 0; i < n; ++i) {
        const double a = res.state.mean[i] + res.state.stddev[i] * normal(rng);
        plan[i] = std::clamp(a, -cfg.action_max, cfg.action_max);
      }
      plans[c] = std::move(plan);
    }
    std::vector<double> scores = score(m, plans);
    if (scores.size() != plans.size()) throw PlanningError("scorer returned the wrong number of scores");
    bool any_finite = false;
    for (double& s : scores) {
      if (std::isfinite(s)) {
        any_finite = true;
      } else {
        s = std::numeric_limits<double>::infinity();
      }
    }
    if (!any_finite) throw PlanningError("every CEM candidate scored non-finite at iteration " + std::to_string(m));

    // Pool: fresh candidates, then carried elites. Stable ordering makes
    // ties resolve towards fresh candidates with lower indices.
    std::vector<const Tensor*> pool;
    std::vector<double> pool_scores;
    for (std::size_t c = 0; c < plans.size(); ++c) {
      pool.push_back(&plans[c]);
      pool_scores.push_back(scores[c]);
    }
    if (cfg.carry_elites) {
      for (std::size_t e = 0; e < elites.size(); ++e) {
        pool.push_back(&elites[e]);
        pool_scores.push_back(elite_scores[e]);
      }
    }
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pool_scores[a] < pool_scores[b]; });

    std::vector<Tensor> next;
    std::vector<double> next_scores;
    for (std::size_t e = 0; e < cfg.elites; ++e) {
      next.push_back(*pool[order[e]]);
      next_scores.push_back(pool_scores[order[e]]);
    }
    elites = std::move(next);
    elite_scores = std::move(next_scores);
    if (elite_scores.front() < best || res.best_plan.empty()) {
      best = elite_scores.front();
      res.best_plan = elites.front();
    }
    res.best_score.push_back(elite_scores.front());

    const double e_count = static_cast<double>(cfg.elites);
    for (std::size_t i = 0; i < n; ++i) {
      double mean = 0.0;
      for (const Tensor& t : elites) mean += t[i];
      mean /= e_count;
      double var = 0.0;
      for (const Tensor& t : elites) var += (t[i] - mean) * (t[i] - mean);
      var = cfg.elites > 1 ? var / (e_count - 1.0) : 0.0;
      res.state.mean[i] = mean;
      res.state.stddev[i] = std::max(std::sqrt(var), cfg.std_floor);
    }
  }
  res.plan = res.state.mean;
  return res;
}

}  // namespace spimag::plan
