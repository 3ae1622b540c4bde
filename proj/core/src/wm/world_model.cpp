// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/wm/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>

#include "spimag/errors.hpp"

namespace spimag::wm {

using diff::Graph;
using diff::NodeId;

void ModelConfig::validate() const {
  if (n_layers == 0) throw ConfigError("n_layers must be positive");
  if (n_heads == 0 || embed_dim == 0 || embed_dim % n_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (grid_h == 0 || grid_w == 0) throw ConfigError("token grid must be non-empty");
  if (token_dim == 0 || action_dim == 0) throw ConfigError("token_dim and action_dim must be positive");
  if (action_proj_dim == 0) throw ConfigError("action_proj_dim must be positive");
  if (mlp_hidden == 0) throw ConfigError("mlp_hidden must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

GroupAssignment sample_group_assignment(std::mt19937_64& rng, std::size_t n_tokens) {
  if (n_tokens < 2) throw DegenerateInputError("grouped attention needs at least two tokens");
  GroupAssignment ga;
  ga.group0_size = std::uniform_int_distribution<std::size_t>(1, n_tokens - 1)(rng);
  std::vector<std::size_t> order(n_tokens);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  ga.group.assign(n_tokens, 1);
  for (std::size_t i = 0; i < ga.group0_size; ++i) ga.group[order[i]] = 0;
  return ga;
}

AttentionMask build_mask(std::size_t n_frames, std::span<const std::size_t> positions,
                         const std::optional<GroupAssignment>& groups) {
  const std::size_t k = positions.size();
  const std::size_t total = n_frames * k;
  AttentionMask mask(total, total, false);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t fi = i / k;
    const std::size_t pi = positions[i % k];
    for (std::size_t j = 0; j < total; ++j) {
      if (j / k > fi) break;
      const bool same = !groups || groups->group.at(pi) == groups->group.at(positions[j % k]);
      if (same) mask.set(i, j, true);
    }
    mask.set(i, i, true);
  }
  return mask;
}

AttentionMask build_mask(const ModelConfig& cfg, const std::optional<GroupAssignment>& groups) {
  std::vector<std::size_t> all(cfg.n_tokens());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return build_mask(cfg.context_frames(), all, groups);
}

DropMask DropMask::all(std::size_t n_tokens) {
  DropMask m;
  m.n_tokens = n_tokens;
  m.kept.resize(n_tokens);
  std::iota(m.kept.begin(), m.kept.end(), std::size_t{0});
  return m;
}

void DropMask::validate() const {
  if (kept.empty()) throw ShapeError("drop mask keeps no tokens");
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept[i] >= n_tokens) {
      throw ShapeError("kept index " + std::to_string(kept[i]) + " out of range for " + std::to_string(n_tokens) +
                       " tokens");
    }
    if (i > 0 && kept[i] <= kept[i - 1]) throw ShapeError("kept indices must be strictly increasing");
  }
}

namespace {

struct Layout {
  std::vector<std::pair<std::string, diff::Shape>> entries;
};

Layout param_layout(const ModelConfig& c) {
  const std::size_t e = c.embed_dim;
  Layout l;
  auto add = [&](std::string name, diff::Shape s) { l.entries.emplace_back(std::move(name), std::move(s)); };
  add("action_proj.weight", {c.action_dim, c.action_proj_dim});
  add("action_proj.bias", {1, c.action_proj_dim});
  add("embed.weight", {c.token_dim + c.action_proj_dim, e});
  add("embed.bias", {1, e});
  add("pos_embed", {c.n_tokens(), e});
  add("frame_embed", {c.context_frames(), e});
  for (std::size_t b = 0; b < c.n_layers; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    add(p + "ln1.gain", {1, e});
    add(p + "ln1.bias", {1, e});
    for (const char* m : {"q", "k", "v", "out"}) {
      add(p + "attn." + m + ".weight", {e, e});
      add(p + "attn." + m + ".bias", {1, e});
    }
    add(p + "ln2.gain", {1, e});
    add(p + "ln2.bias", {1, e});
    add(p + "mlp.fc1.weight", {e, c.mlp_hidden});
    add(p + "mlp.fc1.bias", {1, c.mlp_hidden});
    add(p + "mlp.fc2.weight", {c.mlp_hidden, e});
    add(p + "mlp.fc2.bias", {1, e});
  }
  add("ln_f.gain", {1, e});
  add("ln_f.bias", {1, e});
  add("head.weight", {e, c.token_dim});
  add("head.bias", {1, c.token_dim});
  return l;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Parameters in canonical order; throws ConfigError on missing names or
// shape mismatches.
diff::ParamSet canonicalize(const ModelConfig& cfg, diff::ParamSet params) {
  const Layout layout = param_layout(cfg);
  if (params.size() != layout.entries.size()) {
    throw ConfigError("expected " + std::to_string(layout.entries.size()) + " parameter tensors, got " +
                      std::to_string(params.size()));
  }
  diff::ParamSet out;
  for (const auto& [name, shape] : layout.entries) {
    Tensor& t = params.at(name);
    if (t.shape() != shape) {
      throw ConfigError("parameter '" + name + "' has shape " + t.shape_string() + ", expected " +
                        diff::to_string(shape));
    }
    out.add(name, std::move(t));
  }
  return out;
}

// Name lookup into a span of bound parameter nodes.
class Bound {
 public:
  Bound(const ModelConfig& cfg, std::span<const NodeId> ids) : ids_(ids) {
    const Layout layout = param_layout(cfg);
    if (layout.entries.size() != ids.size()) throw ConfigError("bound parameter count does not match config");
    for (std::size_t i = 0; i < layout.entries.size(); ++i) index_.emplace(layout.entries[i].first, i);
  }
  NodeId operator()(const std::string& name) const { return ids_[index_.at(name)]; }

 private:
  std::span<const NodeId> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

NodeId maybe_dropout(Graph& g, NodeId x, const ModelConfig& cfg, const ForwardOptions& opts) {
  if (!opts.training || cfg.dropout <= 0.0) return x;
  if (opts.rng == nullptr) throw ConfigError("training forward with dropout needs an rng");
  return diff::dropout(g, x, cfg.dropout, *opts.rng);
}

}  // namespace

std::vector<NodeId> bind_params(Graph& g, const diff::ParamSet& params) {
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const auto& e : params) ids.push_back(g.recording() ? g.variable(e.value) : g.constant(e.value));
  return ids;
}

NodeId build_forward(Graph& g, const ModelConfig& cfg, std::span<const NodeId> params, const SequenceBatch& batch,
                     const ForwardOptions& opts) {
  const Bound p(cfg, params);
  const std::size_t k = batch.positions.size();
  const std::size_t n_frames = batch.frames;
  const std::size_t per_seq = n_frames * k;
  const std::size_t rows = batch.batch * per_seq;
  if (batch.batch == 0 || n_frames == 0) throw DegenerateInputError("empty sequence batch");
  if (k == 0) throw DegenerateInputError("forward pass keeps no tokens");
  if (n_frames > cfg.context_frames()) {
    throw ShapeError("history of " + std::to_string(n_frames) + " frames exceeds context of " +
                     std::to_string(cfg.context_frames()));
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (batch.positions[i] >= cfg.n_tokens() || (i > 0 && batch.positions[i] <= batch.positions[i - 1])) {
      throw ShapeError("token positions must be strictly increasing and below " + std::to_string(cfg.n_tokens()));
    }
  }
  if (batch.tokens.rows() != rows || batch.tokens.cols() != cfg.token_dim) {
    throw ShapeError("tokens " + batch.tokens.shape_string() + " do not match batch layout [" + std::to_string(rows) +
                     ", " + std::to_string(cfg.token_dim) + "]");
  }
  if (batch.actions.rows() != batch.batch * n_frames || batch.actions.cols() != cfg.action_dim) {
    throw ShapeError("actions " + batch.actions.shape_string() + " do not match batch layout");
  }

  const NodeId tokens = g.constant(batch.tokens);
  const NodeId actions = g.constant(batch.actions);

  std::vector<std::size_t> action_rows(rows), pos_rows(rows), frame_rows(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t b = r / per_seq;
    const std::size_t f = (r % per_seq) / k;
    action_rows[r] = b * n_frames + f;
    pos_rows[r] = batch.positions[r % k];
    frame_rows[r] = f;
  }
  const NodeId act = diff::linear(g, actions, p("action_proj.weight"), p("action_proj.bias"));
  const NodeId act_rows = diff::gather_rows(g, act, std::move(action_rows));
  NodeId x = diff::linear(g, diff::concat_cols(g, tokens, act_rows), p("embed.weight"), p("embed.bias"));
  x = diff::add(g, x, diff::gather_rows(g, p("pos_embed"), std::move(pos_rows)));
  x = diff::add(g, x, diff::gather_rows(g, p("frame_embed"), std::move(frame_rows)));

  std::vector<AttentionMask> masks = batch.masks;
  if (masks.empty()) masks.push_back(build_mask(n_frames, batch.positions));
  const diff::AttentionLayout layout{cfg.n_heads, per_seq, per_seq};

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string b = "blocks." + std::to_string(l) + ".";
    const NodeId h = diff::layernorm(g, x, p(b + "ln1.gain"), p(b + "ln1.bias"));
    const NodeId q = diff::linear(g, h, p(b + "attn.q.weight"), p(b + "attn.q.bias"));
    const NodeId kk = diff::linear(g, h, p(b + "attn.k.weight"), p(b + "attn.k.bias"));
    const NodeId v = diff::linear(g, h, p(b + "attn.v.weight"), p(b + "attn.v.bias"));
    NodeId a = diff::multi_head_attention(g, q, kk, v, layout, masks, opts.attention);
    a = diff::linear(g, a, p(b + "attn.out.weight"), p(b + "attn.out.bias"));
    x = diff::add(g, x, maybe_dropout(g, a, cfg, opts));

    const NodeId h2 = diff::layernorm(g, x, p(b + "ln2.gain"), p(b + "ln2.bias"));
    NodeId m = diff::gelu(g, diff::linear(g, h2, p(b + "mlp.fc1.weight"), p(b + "mlp.fc1.bias")));
    m = diff::linear(g, m, p(b + "mlp.fc2.weight"), p(b + "mlp.fc2.bias"));
    x = diff::add(g, x, maybe_dropout(g, m, cfg, opts));
  }

  NodeId base = tokens;
  if (opts.last_frame_only) {
    std::vector<std::size_t> last;
    last.reserve(batch.batch * k);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      for (std::size_t i = 0; i < k; ++i) last.push_back(b * per_seq + (n_frames - 1) * k + i);
    }
    x = diff::gather_rows(g, x, last);
    base = diff::gather_rows(g, tokens, std::move(last));
  }
  x = diff::layernorm(g, x, p("ln_f.gain"), p("ln_f.bias"));
  return diff::add(g, base, diff::linear(g, x, p("head.weight"), p("head.bias")));
}

diff::ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  diff::ParamSet out;
  const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers));
  for (const auto& [name, shape] : param_layout(cfg).entries) {
    Tensor t(shape);
    if (ends_with(name, ".gain")) {
      t.fill(1.0);
    } else if (name == "pos_embed" || name == "frame_embed") {
      std::normal_distribution<double> d(0.0, 0.1);
      for (double& x : t.values()) x = d(rng);
    } else if (ends_with(name, ".weight")) {
      double sd = 1.0 / std::sqrt(static_cast<double>(shape[0]));
      if (ends_with(name, "attn.out.weight") || ends_with(name, "mlp.fc2.weight")) sd *= residual_scale;
      if (name == "head.weight") sd *= 0.1;
      std::normal_distribution<double> d(0.0, sd);
      for (double& x : t.values()) x = d(rng);
    }
    out.add(name, std::move(t));
  }
  return out;
}

ForwardCounter& global_forward_counter() {
  static ForwardCounter counter;
  return counter;
}

void History::push(Tensor executed_action, Tensor next_frame) {
  actions.push_back(std::move(executed_action));
  frames.push_back(std::move(next_frame));
}

void History::trim(std::size_t max_frames) {
  if (frames.size() <= max_frames) return;
  const std::size_t drop = frames.size() - max_frames;
  frames.erase(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(drop));
  actions.erase(actions.begin(), actions.begin() + static_cast<std::ptrdiff_t>(std::min(drop, actions.size())));
}

WorldModel::WorldModel(ModelConfig cfg, diff::ParamSet params) : cfg_(cfg) {
  cfg_.validate();
  params_ = canonicalize(cfg_, std::move(params));
}

Tensor WorldModel::predict(const SequenceBatch& batch, diff::AttentionSink* attention) const {
  Graph g(false);
  const std::vector<NodeId> ids = bind_params(g, params_);
  ForwardOptions opts;
  opts.attention = attention;
  return g.value(build_forward(g, cfg_, ids, batch, opts));
}

namespace {

void check_grid(const Tensor& t, const ModelConfig& cfg, const char* what) {
  if (t.rows() != cfg.n_tokens() || t.cols() != cfg.token_dim) {
    throw ShapeError(std::string(what) + " must be [" + std::to_string(cfg.n_tokens()) + " x " +
                     std::to_string(cfg.token_dim) + "], got " + t.shape_string());
  }
}

void check_action(const Tensor& a, const ModelConfig& cfg) {
  if (a.size() != cfg.action_dim) {
    throw ShapeError("action must hold " + std::to_string(cfg.action_dim) + " values, got " + a.shape_string());
  }
}

void append_rows(std::vector<double>& out, const Tensor& grid, std::span<const std::size_t> rows) {
  for (std::size_t r : rows) {
    const auto row = grid.row(r);
    out.insert(out.end(), row.begin(), row.end());
  }
}

}  // namespace

Tensor WorldModel::forward(std::span<const Tensor> history, std::span<const Tensor> actions,
                           const std::optional<DropMask>& keep, const std::optional<AttentionMask>& mask,
                           diff::AttentionSink* attention) const {
  if (history.empty()) throw DegenerateInputError("forward needs at least one history frame");
  if (actions.size() != history.size()) {
    throw ShapeError("forward needs one action per frame: " + std::to_string(history.size()) + " frames, " +
                     std::to_string(actions.size()) + " actions");
  }
  const DropMask km = keep ? *keep : DropMask::all(cfg_.n_tokens());
  if (km.n_tokens != cfg_.n_tokens()) throw ShapeError("drop mask covers a different token count");
  km.validate();

  SequenceBatch batch;
  batch.batch = 1;
  batch.frames = history.size();
  batch.positions = km.kept;
  std::vector<double> tok, act;
  for (std::size_t f = 0; f < history.size(); ++f) {
    check_grid(history[f], cfg_, "history frame");
    check_action(actions[f], cfg_);
    append_rows(tok, history[f], km.kept);
    act.insert(act.end(), actions[f].values().begin(), actions[f].values().end());
  }
  batch.tokens = Tensor({batch.frames * km.size(), cfg_.token_dim}, std::move(tok));
  batch.actions = Tensor({batch.frames, cfg_.action_dim}, std::move(act));
  if (mask) batch.masks.push_back(*mask);
  return predict(batch, attention);
}

std::vector<Tensor> WorldModel::rollout_batch(const History& history, std::span<const Tensor> plans,
                                              const DropMask& keep, ForwardCounter& counter,
                                              const PredictionHook& hook) const {
  if (history.frames.empty()) throw DegenerateInputError("rollout needs at least one observed frame");
  if (history.actions.size() + 1 != history.frames.size()) {
    throw ShapeError("history needs exactly one executed action between consecutive frames");
  }
  if (keep.n_tokens != cfg_.n_tokens()) throw ShapeError("drop mask covers a different token count");
  keep.validate();
  if (plans.empty()) return {};
  const std::size_t horizon = plans[0].rows();
  if (horizon == 0) throw DegenerateInputError("rollout horizon must be at least 1");
  for (const Tensor& plan : plans) {
    if (plan.rows() != horizon || plan.cols() != cfg_.action_dim) {
      throw ShapeError("every plan must be [" + std::to_string(horizon) + " x " + std::to_string(cfg_.action_dim) +
                       "], got " + plan.shape_string());
    }
  }

  const std::size_t n_plans = plans.size();
  const std::size_t k = keep.size();
  const std::size_t d = cfg_.token_dim;
  const std::size_t window = cfg_.context_frames();

  // Shared prefix: the newest observed frames restricted to kept positions,
  // and the actions executed after them.
  const std::size_t first = history.frames.size() > window ? history.frames.size() - window : 0;
  std::vector<Tensor> shared_frames;
  std::vector<const Tensor*> shared_actions;
  for (std::size_t f = first; f < history.frames.size(); ++f) {
    check_grid(history.frames[f], cfg_, "history frame");
    std::vector<double> rows;
    append_rows(rows, history.frames[f], keep.kept);
    shared_frames.emplace_back(diff::Shape{k, d}, std::move(rows));
    if (f + 1 < history.frames.size()) {
      check_action(history.actions[f], cfg_);
      shared_actions.push_back(&history.actions[f]);
    }
  }

  // Per-plan window of predicted frames appended after the shared prefix.
  std::vector<std::vector<Tensor>> imagined(n_plans);
  Tensor last;
  for (std::size_t s = 0; s < horizon; ++s) {
    const std::size_t n_shared_total = shared_frames.size();
    const std::size_t n_imagined = s;
    const std::size_t total = n_shared_total + n_imagined;
    const std::size_t skip = total > window ? total - window : 0;
    const std::size_t frames = total - skip;

    SequenceBatch batch;
    batch.batch = n_plans;
    batch.frames = frames;
    batch.positions = keep.kept;
    std::vector<double> tok;
    std::vector<double> act;
    tok.reserve(n_plans * frames * k * d);
    act.reserve(n_plans * frames * cfg_.action_dim);
    for (std::size_t b = 0; b < n_plans; ++b) {
      for (std::size_t f = skip; f < total; ++f) {
        const Tensor& grid = f < n_shared_total ? shared_frames[f] : imagined[b][f - n_shared_total];
        tok.insert(tok.end(), grid.values().begin(), grid.values().end());
        // Action taken at frame f: executed for observed frames, planned
        // from the newest observation onwards.
        if (f + 1 < n_shared_total) {
          const auto a = shared_actions[f]->values();
          act.insert(act.end(), a.begin(), a.end());
        } else {
          const auto a = plans[b].row(f + 1 - n_shared_total);
          act.insert(act.end(), a.begin(), a.end());
        }
      }
    }
    batch.tokens = Tensor({n_plans * frames * k, d}, std::move(tok));
    batch.actions = Tensor({n_plans * frames, cfg_.action_dim}, std::move(act));
    last = predict(batch);
    counter.add(n_plans);
    if (hook) hook(s, last);
    if (s + 1 < horizon) {
      for (std::size_t b = 0; b < n_plans; ++b) {
        imagined[b].emplace_back(diff::Shape{k, d},
                                 std::vector<double>(last.data() + b * k * d, last.data() + (b + 1) * k * d));
      }
    }
  }

  std::vector<Tensor> out;
  out.reserve(n_plans);
  for (std::size_t b = 0; b < n_plans; ++b) {
    out.emplace_back(diff::Shape{k, d}, std::vector<double>(last.data() + b * k * d, last.data() + (b + 1) * k * d));
  }
  return out;
}

Tensor WorldModel::rollout(const History& history, const Tensor& plan, const DropMask& keep,
                           ForwardCounter& counter) const {
  return rollout_batch(history, std::span<const Tensor>(&plan, 1), keep, counter).front();
}

}  // namespace spimag::wm
