// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/analysis/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "spimag/diff/adam.hpp"
#include "spimag/diff/graph.hpp"
#include "spimag/diff/ops.hpp"
#include "spimag/errors.hpp"

namespace spimag::analysis {

using diff::Graph;
using diff::NodeId;

diff::ParamSet init_probe(const ProbeConfig& cfg, std::size_t token_dim, std::uint64_t seed) {
  if (cfg.feature_dim == 0 || cfg.n_heads == 0 || cfg.feature_dim % cfg.n_heads != 0) {
    throw ConfigError("probe feature_dim must be a positive multiple of n_heads");
  }
  const std::size_t f = cfg.feature_dim;
  const std::size_t hidden = cfg.mlp_mult * f;
  std::mt19937_64 rng(seed);
  diff::ParamSet p;
  auto weight = [&](const std::string& name, std::size_t in, std::size_t out) {
    Tensor t({in, out});
    std::normal_distribution<double> d(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    for (double& v : t.values()) v = d(rng);
    p.add(name + ".weight", std::move(t));
    p.add(name + ".bias", Tensor({1, out}));
  };
  weight("in_proj", token_dim, f);
  {
    Tensor q({1, f});
    std::normal_distribution<double> d(0.0, 1.0);
    for (double& v : q.values()) v = d(rng);
    p.add("query", std::move(q));
  }
  for (const char* m : {"attn.q", "attn.k", "attn.v", "attn.out"}) weight(m, f, f);
  p.add("ln.gain", Tensor({1, f}, 1.0));
  p.add("ln.bias", Tensor({1, f}));
  weight("mlp.fc1", f, hidden);
  weight("mlp.fc2", hidden, f);
  weight("head", f, cfg.out_dim);
  return p;
}

namespace {

std::vector<NodeId> bind(Graph& g, const diff::ParamSet& params) {
  std::vector<NodeId> ids;
  for (const auto& e : params) ids.push_back(g.recording() ? g.variable(e.value) : g.constant(e.value));
  return ids;
}

NodeId forward(Graph& g, const ProbeConfig& cfg, const diff::ParamSet& params, std::span<const NodeId> ids,
               std::span<const Tensor> samples) {
  auto p = [&](std::string_view name) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params.entries()[i].name == name) return ids[i];
    }
    throw ConfigError("probe parameter '" + std::string(name) + "' missing");
  };
  const std::size_t b = samples.size();
  const std::size_t k = samples.front().rows();
  const std::size_t d = samples.front().cols();
  std::vector<double> flat;
  flat.reserve(b * k * d);
  for (const Tensor& s : samples) {
    if (s.rows() != k || s.cols() != d) throw ShapeError("probe samples must share their token count");
    flat.insert(flat.end(), s.values().begin(), s.values().end());
  }
  const NodeId x = diff::linear(g, g.constant(Tensor({b * k, d}, std::move(flat))), p("in_proj.weight"),
                                p("in_proj.bias"));
  const NodeId query = diff::gather_rows(g, p("query"), std::vector<std::size_t>(b, 0));
  const NodeId q = diff::linear(g, query, p("attn.q.weight"), p("attn.q.bias"));
  const NodeId kk = diff::linear(g, x, p("attn.k.weight"), p("attn.k.bias"));
  const NodeId v = diff::linear(g, x, p("attn.v.weight"), p("attn.v.bias"));
  NodeId pooled = diff::multi_head_attention(g, q, kk, v, {cfg.n_heads, 1, k}, {});
  pooled = diff::add(g, query, diff::linear(g, pooled, p("attn.out.weight"), p("attn.out.bias")));
  NodeId h = diff::layernorm(g, pooled, p("ln.gain"), p("ln.bias"));
  h = diff::gelu(g, diff::linear(g, h, p("mlp.fc1.weight"), p("mlp.fc1.bias")));
  h = diff::linear(g, h, p("mlp.fc2.weight"), p("mlp.fc2.bias"));
  return diff::linear(g, h, p("head.weight"), p("head.bias"));
}

std::vector<Tensor> apply_mask(std::span<const Tensor> tokens, const wm::DropMask& mask) {
  std::vector<Tensor> out;
  out.reserve(tokens.size());
  for (const Tensor& t : tokens) {
    if (mask.n_tokens != t.rows()) throw ShapeError("probe mask does not cover the sample's tokens");
    Tensor kept({mask.size(), t.cols()});
    for (std::size_t i = 0; i < mask.size(); ++i) {
      std::copy(t.row(mask.kept[i]).begin(), t.row(mask.kept[i]).end(), kept.row(i).begin());
    }
    out.push_back(std::move(kept));
  }
  return out;
}

Tensor gather_targets(const Tensor& targets, std::span<const std::size_t> idx) {
  Tensor out({idx.size(), targets.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(targets.row(idx[i]).begin(), targets.row(idx[i]).end(), out.row(i).begin());
  }
  return out;
}

double mse(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.rows());
}

}  // namespace

Tensor probe_predict(const ProbeConfig& cfg, const diff::ParamSet& params, std::span<const Tensor> samples) {
  if (samples.empty()) return Tensor({0, cfg.out_dim});
  Graph g(false);
  const std::vector<NodeId> ids = bind(g, params);
  return g.value(forward(g, cfg, params, ids, samples));
}

ProbeResult train_probe(std::span<const Tensor> tokens, const Tensor& targets, const wm::DropMask& mask,
                        const ProbeConfig& cfg) {
  mask.validate();
  const std::size_t n = tokens.size();
  if (n < 2 || targets.rows() != n || targets.cols() != cfg.out_dim) {
    throw ShapeError("probe needs >= 2 samples and one target row of width out_dim per sample");
  }
  if (cfg.batch_size == 0) throw ConfigError("probe batch_size must be positive");
  const std::vector<Tensor> kept = apply_mask(tokens, mask);
  std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * cfg.validation_fraction);
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  const std::size_t n_train = n - n_val;
  std::vector<std::size_t> train_idx(n_train);
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::vector<std::size_t> val_idx(n_val);
  std::iota(val_idx.begin(), val_idx.end(), n_train);
  const std::vector<Tensor> val_x(kept.begin() + static_cast<std::ptrdiff_t>(n_train), kept.end());
  const Tensor val_y = gather_targets(targets, val_idx);

  ProbeResult res;
  {
    std::vector<double> mean(cfg.out_dim, 0.0);
    for (std::size_t i : train_idx) {
      for (std::size_t c = 0; c < cfg.out_dim; ++c) mean[c] += targets(i, c) / static_cast<double>(n_train);
    }
    Tensor base({n_val, cfg.out_dim});
    for (std::size_t i = 0; i < n_val; ++i) std::copy(mean.begin(), mean.end(), base.row(i).begin());
    res.target_variance = mse(base, val_y);
  }

  std::mt19937_64 rng(cfg.seed);
  res.params = init_probe(cfg, tokens.front().cols(), cfg.seed);
  diff::AdamState adam(res.params, diff::AdamConfig{.lr = cfg.lr});
  const std::size_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch * cfg.epochs);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double sum = 0.0;
    for (std::size_t i = 0; i < n_train; i += cfg.batch_size) {
      if (cfg.cosine_schedule) {
        adam.set_lr(cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps)));
      }
      const std::size_t end = std::min(n_train, i + cfg.batch_size);
      const std::span<const std::size_t> idx(train_idx.data() + i, end - i);
      std::vector<Tensor> xb;
      for (std::size_t j : idx) xb.push_back(kept[j]);
      Graph g(true);
      const std::vector<NodeId> ids = bind(g, res.params);
      double value = 0.0;
      NodeId loss;
      try {
        const NodeId pred = forward(g, cfg, res.params, ids, xb);
        loss = diff::mse_rows(g, pred, g.constant(gather_targets(targets, idx)));
        value = g.value(loss)[0];
      } catch (const NumericError& e) {
        throw NumericError("probe loss diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      g.backward(loss);
      diff::GradSet grads;
      for (std::size_t j = 0; j < ids.size(); ++j) grads.add(res.params.entries()[j].name, g.grad(ids[j]));
      diff::adam_step(res.params, grads, adam);
      sum += value * static_cast<double>(idx.size());
      ++step;
    }
    res.train_loss.push_back(sum / static_cast<double>(n_train));
    const double val = mse(probe_predict(cfg, res.params, val_x), val_y);
    if (!std::isfinite(val)) throw NumericError("probe validation loss diverged at epoch " + std::to_string(epoch));
    res.validation_loss.push_back(val);
  }
  return res;
}

ProbeData probe_data(const env::Dataset& data, std::size_t samples, std::uint64_t seed) {
  if (data.episodes.empty()) throw DegenerateInputError("probe_data needs a non-empty dataset");
  std::mt19937_64 rng(seed);
  ProbeData out;
  out.targets = Tensor({samples, 2});
  std::uniform_int_distribution<std::size_t> pick_ep(0, data.episodes.size() - 1);
  for (std::size_t s = 0; s < samples; ++s) {
    const env::Episode& e = data.episodes[pick_ep(rng)];
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, e.frames.size() - 1)(rng);
    out.tokens.push_back(e.tokens[t]);
    out.targets(s, 0) = e.states[t].agent.x;
    out.targets(s, 1) = e.states[t].agent.y;
  }
  return out;
}

}  // namespace spimag::analysis
