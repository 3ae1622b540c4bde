// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/analysis/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "spimag/errors.hpp"
#include "spimag/plan/cem.hpp"
#include "spimag/plan/masks.hpp"
#include "spimag/wm/trainer.hpp"

namespace spimag::analysis {

RelativeError relative_l2(const diff::Tensor& pred, const diff::Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("relative_l2: shape mismatch " + pred.shape_string() + " vs " + target.shape_string());
  }
  RelativeError out;
  for (std::size_t r = 0; r < target.rows(); ++r) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t c = 0; c < target.cols(); ++c) {
      num += (pred(r, c) - target(r, c)) * (pred(r, c) - target(r, c));
      den += target(r, c) * target(r, c);
    }
    if (den == 0.0) {
      ++out.excluded;
      continue;
    }
    out.sum += std::sqrt(num) / std::sqrt(den);
    ++out.counted;
  }
  return out;
}

PredErrorResult prediction_error(const wm::WorldModel& model, std::span<const env::Episode* const> episodes,
                                 double ratio, const PredErrorConfig& cfg) {
  if (cfg.trials == 0) throw ConfigError("prediction_error needs at least one trial");
  const wm::ModelConfig& mc = model.config();
  const std::size_t frames = mc.context_frames();
  std::vector<wm::Window> windows = wm::make_windows(episodes, frames);
  if (windows.empty()) throw DegenerateInputError("no evaluation windows");
  std::mt19937_64 rng(cfg.seed);
  if (cfg.max_windows != 0 && windows.size() > cfg.max_windows) {
    std::shuffle(windows.begin(), windows.end(), rng);
    windows.resize(cfg.max_windows);
  }
  const std::size_t d = mc.token_dim;
  PredErrorResult res;
  res.ratio = ratio;
  constexpr std::size_t kChunk = 64;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    std::mt19937_64 mask_rng(plan::derive_seed(cfg.seed, 0x70726564ULL, t, 0));
    const wm::DropMask mask = plan::sample_mask_random(mask_rng, mc.n_tokens(), ratio);
    const std::size_t k = mask.size();
    RelativeError acc;
    for (std::size_t w0 = 0; w0 < windows.size(); w0 += kChunk) {
      const std::size_t w1 = std::min(windows.size(), w0 + kChunk);
      wm::SequenceBatch sb;
      sb.batch = w1 - w0;
      sb.frames = frames;
      sb.positions = mask.kept;
      std::vector<double> tok, act, tgt;
      for (std::size_t w = w0; w < w1; ++w) {
        const env::Episode& e = *windows[w].episode;
        for (std::size_t f = 0; f < frames; ++f) {
          const diff::Tensor& grid = e.tokens[windows[w].start + f];
          for (std::size_t p : mask.kept) tok.insert(tok.end(), grid.row(p).begin(), grid.row(p).end());
          const env::Vec2 a = e.actions[windows[w].start + f];
          act.insert(act.end(), {a.x, a.y});
        }
        const diff::Tensor& next = e.tokens[windows[w].start + frames];
        for (std::size_t p : mask.kept) tgt.insert(tgt.end(), next.row(p).begin(), next.row(p).end());
      }
      sb.tokens = diff::Tensor({sb.batch * frames * k, d}, std::move(tok));
      sb.actions = diff::Tensor({sb.batch * frames, mc.action_dim}, std::move(act));
      const diff::Tensor pred = model.predict(sb);
      const RelativeError part = relative_l2(pred, diff::Tensor({sb.batch * k, d}, std::move(tgt)));
      acc.sum += part.sum;
      acc.counted += part.counted;
      acc.excluded += part.excluded;
    }
    res.trials.push_back(acc.mean());
    res.counted += acc.counted;
    res.excluded_zero_norm += acc.excluded;
  }
  const double n = static_cast<double>(res.trials.size());
  res.mean = std::accumulate(res.trials.begin(), res.trials.end(), 0.0) / n;
  double var = 0.0;
  for (double v : res.trials) var += (v - res.mean) * (v - res.mean);
  res.stddev = res.trials.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return res;
}

std::vector<NoiseCell> noise_robustness(const wm::WorldModel& model, const env::EnvConfig& env,
                                        std::span<const double> sigmas, std::span<const double> drops,
                                        std::size_t episodes, const plan::PlanConfig& cfg, std::uint64_t seed) {
  std::vector<NoiseCell> cells;
  for (double sigma : sigmas) {
    if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
    for (double drop : drops) {
      NoiseCell cell;
      cell.sigma = sigma;
      cell.drop = drop;
      plan::PlanConfig pc = cfg;
      pc.drop_ratio = drop;
      for (std::size_t e = 0; e < episodes; ++e) {
        const auto [start, goal] = plan::episode_task(env, seed, e);
        plan::MpcOptions opts;
        opts.seed = plan::episode_seed(seed, e);
        opts.corruption = plan::Corruption{sigma};
        const plan::EpisodeResult r = plan::mpc_run(model, env, start, goal, pc, opts);
        cell.outcomes.push_back(r.success);
        cell.successes += r.success ? 1 : 0;
        ++cell.episodes;
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

NoiseCell random_action_baseline(const env::EnvConfig& env, std::size_t episodes, const plan::PlanConfig& cfg,
                                 std::uint64_t seed) {
  NoiseCell cell;
  const std::size_t steps = cfg.max_mpc_iterations * cfg.horizon;
  for (std::size_t e = 0; e < episodes; ++e) {
    auto [state, goal] = plan::episode_task(env, seed, e);
    std::mt19937_64 rng(plan::derive_seed(seed, 0x72616e64ULL, e, 0));
    std::uniform_real_distribution<double> act(-env.action_max, env.action_max);
    bool ok = env::is_success(env, state, goal.agent);
    for (std::size_t s = 0; s < steps && !ok; ++s) {
      const double ax = act(rng);
      const double ay = act(rng);
      state = env::step(env, state, {ax, ay});
      ok = env::is_success(env, state, goal.agent);
    }
    cell.outcomes.push_back(ok);
    cell.successes += ok ? 1 : 0;
    ++cell.episodes;
  }
  return cell;
}

}  // namespace spimag::analysis
