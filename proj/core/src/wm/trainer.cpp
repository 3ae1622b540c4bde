// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/wm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "spimag/errors.hpp"

namespace spimag::wm {

std::string_view to_string(MaskPolicy policy) { return policy == MaskPolicy::kGrouped ? "grouped" : "full"; }

MaskPolicy parse_mask_policy(std::string_view name) {
  if (name == "grouped") return MaskPolicy::kGrouped;
  if (name == "full") return MaskPolicy::kFull;
  throw ConfigError("unknown mask policy '" + std::string(name) + "' (expected grouped or full)");
}

std::vector<Window> make_windows(std::span<const env::Episode* const> episodes, std::size_t context_frames) {
  std::vector<Window> out;
  for (const env::Episode* e : episodes) {
    // Inputs start..start+F-1, targets start+1..start+F.
    if (e->frames.size() < context_frames + 1) continue;
    for (std::size_t s = 0; s + context_frames < e->frames.size(); ++s) out.push_back({e, s});
  }
  return out;
}

TrainBatch make_batch(const ModelConfig& cfg, std::span<const Window> windows, MaskPolicy policy,
                      std::mt19937_64& rng) {
  if (windows.empty()) throw DegenerateInputError("empty training batch");
  const std::size_t n = cfg.n_tokens();
  const std::size_t d = cfg.token_dim;
  const std::size_t frames = cfg.context_frames();
  TrainBatch tb;
  SequenceBatch& sb = tb.inputs;
  sb.batch = windows.size();
  sb.frames = frames;
  sb.positions.resize(n);
  std::iota(sb.positions.begin(), sb.positions.end(), std::size_t{0});
  std::vector<double> tok, tgt, act;
  tok.reserve(sb.batch * frames * n * d);
  tgt.reserve(sb.batch * frames * n * d);
  for (const Window& w : windows) {
    for (std::size_t f = 0; f < frames; ++f) {
      const Tensor& in = w.episode->tokens.at(w.start + f);
      const Tensor& out = w.episode->tokens.at(w.start + f + 1);
      if (in.rows() != n || in.cols() != d) throw ShapeError("episode tokens do not match model config");
      tok.insert(tok.end(), in.values().begin(), in.values().end());
      tgt.insert(tgt.end(), out.values().begin(), out.values().end());
      const env::Vec2 a = w.episode->actions.at(w.start + f);
      act.insert(act.end(), {a.x, a.y});
    }
    if (policy == MaskPolicy::kGrouped) {
      sb.masks.push_back(build_mask(frames, sb.positions, sample_group_assignment(rng, n)));
    }
  }
  if (cfg.action_dim != 2) throw ConfigError("the wall environment has 2-dimensional actions");
  sb.tokens = Tensor({sb.batch * frames * n, d}, std::move(tok));
  sb.actions = Tensor({sb.batch * frames, cfg.action_dim}, std::move(act));
  tb.targets = Tensor({sb.batch * frames * n, d}, std::move(tgt));
  return tb;
}

double train_step(const ModelConfig& cfg, diff::ParamSet& params, diff::AdamState& adam, const TrainBatch& batch,
                  std::mt19937_64& rng, std::size_t batch_index) {
  diff::Graph g(true);
  const std::vector<diff::NodeId> ids = bind_params(g, params);
  ForwardOptions opts;
  opts.training = true;
  opts.rng = &rng;
  opts.last_frame_only = false;
  diff::NodeId pred;
  diff::NodeId loss;
  try {
    pred = build_forward(g, cfg, ids, batch.inputs, opts);
    loss = diff::mse_rows(g, pred, g.constant(batch.targets));
  } catch (const NumericError& e) {
    throw NumericError("non-finite loss at batch " + std::to_string(batch_index) + ": " + e.what());
  }
  const double value = g.value(loss)[0];
  g.backward(loss);
  diff::GradSet grads;
  for (std::size_t i = 0; i < ids.size(); ++i) grads.add(params.entries()[i].name, g.grad(ids[i]));
  adam_step(params, grads, adam);
  return value;
}

double evaluate_loss(const ModelConfig& cfg, const diff::ParamSet& params, const TrainBatch& batch) {
  diff::Graph g(false);
  const std::vector<diff::NodeId> ids = bind_params(g, params);
  ForwardOptions opts;
  opts.last_frame_only = false;
  const diff::NodeId pred = build_forward(g, cfg, ids, batch.inputs, opts);
  return g.value(diff::mse_rows(g, pred, g.constant(batch.targets)))[0];
}

TrainResult train(const ModelConfig& cfg, const env::Dataset& data, const TrainConfig& tc,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.env.n_tokens() != cfg.n_tokens() || data.env.token_dim != cfg.token_dim) {
    throw ConfigError("model config does not match the dataset token grid");
  }
  if (tc.batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto [train_eps, val_eps] = env::split_episodes(data, tc.validation_fraction);
  std::vector<Window> windows = make_windows(train_eps, cfg.context_frames());
  const std::vector<Window> val_windows = make_windows(val_eps, cfg.context_frames());
  if (windows.empty()) throw DegenerateInputError("episodes are too short for the model context");

  std::mt19937_64 rng(tc.seed);
  TrainResult result;
  result.params = init_params(cfg, tc.seed);
  diff::AdamState adam(result.params, diff::AdamConfig{.lr = tc.lr});

  // Validation always uses full attention so grouped and full runs are
  // scored on the same objective.
  std::mt19937_64 val_rng(tc.seed ^ 0x5a5a5a5aULL);
  std::vector<TrainBatch> val_batches;
  for (std::size_t i = 0; i < val_windows.size(); i += tc.batch_size) {
    const std::size_t end = std::min(val_windows.size(), i + tc.batch_size);
    val_batches.push_back(make_batch(cfg, std::span(val_windows).subspan(i, end - i), MaskPolicy::kFull, val_rng));
  }

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(windows.begin(), windows.end(), rng);
    EpochStats st;
    st.epoch = epoch;
    double sum = 0.0;
    for (std::size_t i = 0; i < windows.size(); i += tc.batch_size) {
      if (tc.max_steps != 0 && step >= tc.max_steps) break;
      const std::size_t end = std::min(windows.size(), i + tc.batch_size);
      const TrainBatch tb = make_batch(cfg, std::span(windows).subspan(i, end - i), tc.policy, rng);
      const double loss = train_step(cfg, result.params, adam, tb, rng, step);
      result.step_losses.push_back(loss);
      sum += loss;
      ++st.steps;
      ++step;
    }
    st.train_loss = st.steps ? sum / static_cast<double>(st.steps) : 0.0;
    double vsum = 0.0;
    double vcount = 0.0;
    for (const TrainBatch& vb : val_batches) {
      const double w = static_cast<double>(vb.inputs.batch);
      vsum += w * evaluate_loss(cfg, result.params, vb);
      vcount += w;
    }
    st.validation_loss = vcount > 0 ? vsum / vcount : 0.0;
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(st);
    if (on_epoch) on_epoch(st);
    if (tc.max_steps != 0 && step >= tc.max_steps) break;
  }
  return result;
}

ModelConfig model_config_for(const env::EnvConfig& env, ModelConfig base) {
  base.grid_h = env.patches_per_side();
  base.grid_w = env.patches_per_side();
  base.token_dim = env.token_dim;
  base.action_dim = 2;
  base.validate();
  return base;
}

}  // namespace spimag::wm
