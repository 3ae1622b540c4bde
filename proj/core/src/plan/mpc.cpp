// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/plan/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "spimag/env/tokenizer.hpp"
#include "spimag/errors.hpp"
#include "spimag/plan/atc.hpp"
#include "spimag/plan/objective.hpp"

namespace spimag::plan {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kRandom: return "random";
    case Strategy::kFixed: return "fixed";
    case Strategy::kLhs: return "lhs";
    case Strategy::kAttentionWm: return "attn-wm";
    case Strategy::kAtc: return "atc";
    case Strategy::kFull: return "full";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kRandom, Strategy::kFixed, Strategy::kLhs, Strategy::kAttentionWm, Strategy::kAtc,
                     Strategy::kFull}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected random|fixed|lhs|attn-wm|atc|full)");
}

void PlanConfig::validate() const {
  if (elites == 0 || elites > candidates) throw ConfigError("plan config needs 1 <= E <= K");
  if (cem_iterations == 0) throw ConfigError("plan config needs at least one CEM iteration");
  if (horizon == 0) throw ConfigError("plan config needs H >= 1");
  if (max_mpc_iterations == 0) throw ConfigError("plan config needs at least one MPC iteration");
  if (!(drop_ratio >= 0.0 && drop_ratio < 1.0)) throw ConfigError("drop ratio must lie in [0, 1)");
}

double EpisodeResult::mean_plan_seconds() const {
  if (plan_seconds.empty()) return 0.0;
  return std::accumulate(plan_seconds.begin(), plan_seconds.end(), 0.0) / static_cast<double>(plan_seconds.size());
}

std::vector<double> attention_importance(const diff::AttentionSink& maps, std::size_t n_tokens) {
  if (n_tokens == 0) throw ConfigError("attention_importance needs n_tokens > 0");
  std::vector<double> score(n_tokens, 0.0);
  double rows = 0.0;
  for (const Tensor& m : maps) {
    if (m.cols() % n_tokens != 0) {
      throw ShapeError("attention map " + m.shape_string() + " is not a whole number of frames of " +
                       std::to_string(n_tokens) + " tokens");
    }
    for (std::size_t q = 0; q < m.rows(); ++q) {
      for (std::size_t k = 0; k < m.cols(); ++k) score[k % n_tokens] += m(q, k);
    }
    rows += static_cast<double>(m.rows());
  }
  if (rows == 0.0) throw DegenerateInputError("no attention maps to score");
  for (double& s : score) s /= rows;
  return score;
}

std::vector<double> score_attention_wm(const wm::WorldModel& model, const wm::History& history) {
  const wm::ModelConfig& cfg = model.config();
  const std::size_t window = cfg.context_frames();
  const std::size_t first = history.frames.size() > window ? history.frames.size() - window : 0;
  std::vector<Tensor> frames(history.frames.begin() + static_cast<std::ptrdiff_t>(first), history.frames.end());
  std::vector<Tensor> actions;
  for (std::size_t f = first; f + 1 < history.frames.size(); ++f) actions.push_back(history.actions.at(f));
  actions.emplace_back(diff::Shape{1, cfg.action_dim}, 0.0);
  diff::AttentionSink sink;
  model.forward(frames, actions, std::nullopt, std::nullopt, &sink);
  return attention_importance(sink, cfg.n_tokens());
}

CemResult cem_plan(const wm::WorldModel& model, const wm::History& history, const Tensor& goal_tokens,
                   const CemConfig& cfg, const std::function<DropMask(std::size_t)>& mask_for,
                   wm::ForwardCounter& counter) {
  return cem_optimize(cfg, [&](std::size_t it, std::span<const Tensor> plans) {
    const DropMask mask = mask_for(it);
    const std::vector<Tensor> preds = model.rollout_batch(history, plans, mask, counter);
    std::vector<double> scores(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) scores[i] = objective(preds[i], goal_tokens, mask);
    return scores;
  });
}

std::pair<env::EnvState, env::EnvState> episode_task(const env::EnvConfig& env, std::uint64_t seed,
                                                     std::size_t index) {
  std::mt19937_64 rng(derive_seed(seed, 0x7461736bULL, index, 0));
  return env::sample_task(env, rng);
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, 0x706c616eULL, index, 0);
}

namespace {

Tensor action_tensor(env::Vec2 a) { return Tensor({1, 2}, {a.x, a.y}); }

// Replaces every representative row with the mean of its cluster's tokens.
Tensor pool_frame(const Tensor& frame, const ClusterSet& set, std::span<const std::size_t> reps) {
  Tensor out = frame;
  const std::size_t d = frame.cols();
  for (std::size_t c = 0; c < set.count(); ++c) {
    double* row = out.data() + reps[c] * d;
    std::fill(row, row + d, 0.0);
  }
  for (std::size_t t = 0; t < frame.rows(); ++t) {
    const std::size_t c = set.assignment[t];
    double* row = out.data() + reps[c] * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += frame(t, j) / static_cast<double>(set.sizes[c]);
  }
  return out;
}

}  // namespace

EpisodeResult mpc_run(const wm::WorldModel& model, const env::EnvConfig& env, const env::EnvState& start,
                      const env::EnvState& goal, const PlanConfig& cfg, const MpcOptions& opts) {
  cfg.validate();
  const wm::ModelConfig& mc = model.config();
  if (env.n_tokens() != mc.n_tokens() || env.token_dim != mc.token_dim) {
    throw ConfigError("environment token grid does not match the model");
  }
  const std::size_t n = mc.n_tokens();
  const env::Tokenizer tok(env);
  const Tensor goal_tokens = tok.tokenize(env::render(env, goal));

  EpisodeResult res;
  env::EnvState state = start;
  wm::History history;
  history.frames.push_back(tok.tokenize(env::render(env, state)));
  if (env::is_success(env, state, goal.agent)) {
    res.success = true;
    res.final_distance = env::distance(state.agent, goal.agent);
    return res;
  }

  wm::ForwardCounter counter;
  std::mt19937_64 mask_rng(derive_seed(opts.seed, 0x6d61736bULL, 0, 0));
  const Strategy strategy = opts.corruption ? Strategy::kRandom : cfg.strategy;
  const std::size_t k = keep_count(n, cfg.drop_ratio);
  std::optional<DropMask> fixed;
  if (strategy == Strategy::kFixed) fixed = sample_mask_random(mask_rng, n, cfg.drop_ratio);

  std::optional<ClusterSet> goal_clusters;
  std::optional<ClusterSet> anchor;
  if (strategy == Strategy::kAtc) goal_clusters = atc_cluster(goal_tokens, k);

  CemConfig cc;
  cc.candidates = cfg.candidates;
  cc.elites = cfg.elites;
  cc.iterations = cfg.cem_iterations;
  cc.horizon = cfg.horizon;
  cc.action_dim = mc.action_dim;
  cc.action_max = env.action_max;
  cc.seed = opts.seed;

  const DropMask all = DropMask::all(n);
  for (std::size_t iter = 0; iter < cfg.max_mpc_iterations; ++iter) {
    cc.stream = iter;
    const auto t0 = std::chrono::steady_clock::now();
    DropMask mask;
    CemResult plan;
    if (opts.corruption) {
      // Full-token rollouts; noise on every prediction; objective on the
      // surviving subset.
      mask = sample_mask_random(mask_rng, n, cfg.drop_ratio);
      const double sigma = opts.corruption->sigma;
      const std::uint64_t noise_seed = derive_seed(opts.seed, 0x6e6f6973ULL, iter, 0);
      std::size_t cem_iter = 0;
      plan = cem_optimize(cc, [&](std::size_t it, std::span<const Tensor> plans) {
        cem_iter = it;
        wm::PredictionHook hook;
        if (sigma > 0.0) {
          hook = [&](std::size_t step, Tensor& pred) {
            std::mt19937_64 rng(derive_seed(noise_seed, cem_iter, step, 1));
            std::normal_distribution<double> normal(0.0, 1.0);
            const std::size_t d = pred.cols();
            const double scale = sigma / std::sqrt(static_cast<double>(d));
            for (std::size_t r = 0; r < pred.rows(); ++r) {
              double norm = 0.0;
              for (double v : pred.row(r)) norm += v * v;
              const double sd = scale * std::sqrt(norm);
              for (double& v : pred.row(r)) v += sd * normal(rng);
            }
          };
        }
        const std::vector<Tensor> preds = model.rollout_batch(history, plans, all, counter, hook);
        std::vector<double> scores(preds.size());
        for (std::size_t i = 0; i < preds.size(); ++i) {
          Tensor kept({mask.size(), mc.token_dim});
          for (std::size_t j = 0; j < mask.size(); ++j) {
            std::copy_n(preds[i].row(mask.kept[j]).data(), mc.token_dim, kept.row(j).data());
          }
          scores[i] = objective(kept, goal_tokens, mask);
        }
        return scores;
      });
    } else if (strategy == Strategy::kAtc) {
      const ClusterSet clusters = atc_cluster(history.frames.back(), k, anchor ? &*anchor : nullptr);
      anchor = clusters;
      std::vector<std::size_t> reps = medoids(history.frames.back(), clusters);
      // Clusters ordered by representative position, matching rollout rows.
      std::vector<std::size_t> order(reps.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return reps[a] < reps[b]; });
      std::vector<std::size_t> sizes;
      mask.n_tokens = n;
      mask.p = cfg.drop_ratio;
      for (std::size_t c : order) {
        mask.kept.push_back(reps[c]);
        sizes.push_back(clusters.sizes[c]);
      }
      wm::History pooled;
      for (const Tensor& f : history.frames) pooled.frames.push_back(pool_frame(f, clusters, reps));
      pooled.actions = history.actions;
      plan = cem_optimize(cc, [&](std::size_t, std::span<const Tensor> plans) {
        const std::vector<Tensor> preds = model.rollout_batch(pooled, plans, mask, counter);
        std::vector<double> scores(preds.size());
        for (std::size_t i = 0; i < preds.size(); ++i) scores[i] = atc_objective(preds[i], sizes, *goal_clusters);
        return scores;
      });
    } else {
      std::function<DropMask(std::size_t)> mask_for;
      switch (strategy) {
        case Strategy::kRandom: mask = sample_mask_random(mask_rng, n, cfg.drop_ratio); break;
        case Strategy::kFixed: mask = *fixed; break;
        case Strategy::kLhs: mask = sample_mask_lhs_ratio(mask_rng, mc.grid_h, mc.grid_w, cfg.drop_ratio); break;
        case Strategy::kAttentionWm: {
          mask = top_k(score_attention_wm(model, history), k);
          mask.p = cfg.drop_ratio;
          break;
        }
        case Strategy::kFull: mask = all; break;
        case Strategy::kAtc: break;
      }
      if (!cfg.replan && (strategy == Strategy::kRandom || strategy == Strategy::kLhs)) {
        // One CEM call only: a fresh mask for every CEM iteration.
        cc.carry_elites = false;
        mask_for = [&](std::size_t it) {
          if (it == 0) return mask;
          return strategy == Strategy::kLhs ? sample_mask_lhs_ratio(mask_rng, mc.grid_h, mc.grid_w, cfg.drop_ratio)
                                            : sample_mask_random(mask_rng, n, cfg.drop_ratio);
        };
      } else {
        mask_for = [&](std::size_t) { return mask; };
      }
      plan = cem_plan(model, history, goal_tokens, cc, mask_for, counter);
    }
    res.plan_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    res.masks.push_back(mask);
    res.mpc_iterations = iter + 1;

    try {
      for (std::size_t h = 0; h < cfg.horizon; ++h) {
        const env::Vec2 a = env::clip_action(env, {plan.plan(h, 0), plan.plan(h, 1)});
        state = env::step(env, state, a);
        history.push(action_tensor(a), tok.tokenize(env::render(env, state)));
        history.trim(mc.context_frames());
        if (env::is_success(env, state, goal.agent)) {
          res.success = true;
          break;
        }
      }
    } catch (const Error& e) {
      res.valid = false;
      res.error = e.what();
      break;
    }
    if (res.success || !cfg.replan) break;
  }
  res.forward_calls = counter.value();
  wm::global_forward_counter().add(res.forward_calls);
  res.final_distance = env::distance(state.agent, goal.agent);
  return res;
}

}  // namespace spimag::plan
