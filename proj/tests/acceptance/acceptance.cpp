// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <CLI11.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/oracles.hpp"
#include "spimag/analysis/hsic.hpp"
#include "spimag/analysis/prediction.hpp"
#include "spimag/bench/bench.hpp"
#include "spimag/diff/ops.hpp"
#include "spimag/env/dataset.hpp"
#include "spimag/errors.hpp"
#include "spimag/plan/atc.hpp"
#include "spimag/plan/cem.hpp"
#include "spimag/plan/masks.hpp"
#include "spimag/plan/mpc.hpp"
#include "spimag/runtime.hpp"
#include "spimag/wm/model_io.hpp"
#include "spimag/wm/trainer.hpp"

namespace {

using namespace spimag;
using diff::Graph;
using diff::NodeId;
using diff::Tensor;
using oracle::random_tensor;
using oracle::uniform_size;
namespace fs = std::filesystem;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Options {
  fs::path work = "acceptance_work";
  std::uint64_t seed = 1;
  std::size_t dataset_episodes = 500;
  std::size_t episode_length = 50;
  std::size_t epochs = 10;
  std::size_t plan_episodes = 30;
  std::size_t timing_episodes = 2;
  std::size_t timing_iterations = 2;
};

// ---------------------------------------------------------------- 2

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  constexpr int kShapes = 20;
  std::mt19937_64 rng(2);
  double worst = 0.0;
  std::string worst_op;
  std::size_t checks = 0;
  auto against = [](Graph& g, NodeId out, const Tensor& target) { return diff::mse_rows(g, out, g.constant(target)); };
  auto run = [&](const std::string& op, const std::vector<Tensor>& in, const oracle::LossBuilder& b) {
    const oracle::GradCheck r = oracle::finite_difference_check(in, b);
    checks += r.checked;
    if (r.worst_relative > worst) {
      worst = r.worst_relative;
      worst_op = op;
    }
  };
  auto random_mask = [&](std::size_t q, std::size_t k) {
    diff::AttentionMask m(q, k, false);
    std::bernoulli_distribution allow(0.6);
    for (std::size_t i = 0; i < q; ++i) {
      for (std::size_t j = 0; j < k; ++j) m.set(i, j, allow(rng));
      m.set(i, uniform_size(rng, 0, k - 1), true);
    }
    return m;
  };
  for (int s = 0; s < kShapes; ++s) {
    const std::size_t m = uniform_size(rng, 1, 6), k = uniform_size(rng, 1, 6), n = uniform_size(rng, 2, 6);
    const Tensor t_mn = random_tensor(rng, m, n);
    run("matmul", {random_tensor(rng, m, k), random_tensor(rng, k, n)},
        [&](Graph& g, const std::vector<NodeId>& x) { return against(g, diff::matmul(g, x[0], x[1]), t_mn); });
    run("add", {random_tensor(rng, m, n), random_tensor(rng, m, n)},
        [&](Graph& g, const std::vector<NodeId>& x) { return against(g, diff::add(g, x[0], x[1]), t_mn); });
    run("add_row", {random_tensor(rng, m, n), random_tensor(rng, 1, n)},
        [&](Graph& g, const std::vector<NodeId>& x) { return against(g, diff::add_row(g, x[0], x[1]), t_mn); });
    const double factor = std::normal_distribution<double>(0.0, 2.0)(rng);
    run("scale", {random_tensor(rng, m, n)},
        [&](Graph& g, const std::vector<NodeId>& x) { return against(g, diff::scale(g, x[0], factor), t_mn); });
    // Width 2 normalises every row to +-1, so the input gradient is near
    // zero and the finite-difference truncation error dominates.
    const std::size_t w = n + 1;
    const Tensor t_ln = random_tensor(rng, m, w);
    run("layernorm", {random_tensor(rng, m, w), random_tensor(rng, 1, w), random_tensor(rng, 1, w)},
        [&](Graph& g, const std::vector<NodeId>& x) { return against(g, diff::layernorm(g, x[0], x[1], x[2]), t_ln); });
    run("gelu", {random_tensor(rng, m, n, 2.0)},
        [&](Graph& g, const std::vector<NodeId>& x) { return against(g, diff::gelu(g, x[0]), t_mn); });
    const Tensor t_cat = random_tensor(rng, m, k + n);
    run("concat_cols", {random_tensor(rng, m, k), random_tensor(rng, m, n)},
        [&](Graph& g, const std::vector<NodeId>& x) { return against(g, diff::concat_cols(g, x[0], x[1]), t_cat); });
    std::vector<std::size_t> idx(uniform_size(rng, 1, 9));
    for (auto& i : idx) i = uniform_size(rng, 0, m - 1);
    const Tensor t_gather = random_tensor(rng, idx.size(), n);
    run("gather_rows", {random_tensor(rng, m, n)},
        [&](Graph& g, const std::vector<NodeId>& x) { return against(g, diff::gather_rows(g, x[0], idx), t_gather); });
    const std::uint64_t seed = rng();
    run("dropout", {random_tensor(rng, m, n)}, [&](Graph& g, const std::vector<NodeId>& x) {
      std::mt19937_64 local(seed);
      return against(g, diff::dropout(g, x[0], 0.3, local), t_mn);
    });
    run("mse_rows", {random_tensor(rng, m, n), random_tensor(rng, m, n)},
        [](Graph& g, const std::vector<NodeId>& x) { return diff::mse_rows(g, x[0], x[1]); });
    const Tensor t_1 = random_tensor(rng, 1, 1);
    run("sum", {random_tensor(rng, m, n)},
        [&](Graph& g, const std::vector<NodeId>& x) { return against(g, diff::sum(g, x[0]), t_1); });
    run("linear", {random_tensor(rng, m, k), random_tensor(rng, k, n), random_tensor(rng, 1, n)},
        [&](Graph& g, const std::vector<NodeId>& x) { return against(g, diff::linear(g, x[0], x[1], x[2]), t_mn); });
    const std::size_t q = uniform_size(rng, 1, 5), kk = uniform_size(rng, 1, 5), d = uniform_size(rng, 1, 4);
    const diff::AttentionMask mask = random_mask(q, kk);
    const Tensor t_att = random_tensor(rng, q, d);
    run("masked_attention", {random_tensor(rng, q, d), random_tensor(rng, kk, d), random_tensor(rng, kk, d)},
        [&](Graph& g, const std::vector<NodeId>& x) {
          return against(g, diff::masked_attention(g, x[0], x[1], x[2], mask), t_att);
        });
    const std::size_t batch = uniform_size(rng, 1, 3), heads = uniform_size(rng, 1, 3);
    const std::size_t tq = uniform_size(rng, 1, 4), tk = uniform_size(rng, 1, 4), hd = uniform_size(rng, 1, 3);
    std::vector<diff::AttentionMask> masks;
    for (std::size_t i = 0; i < (s % 3 == 2 ? batch : static_cast<std::size_t>(s % 3)); ++i)
      masks.push_back(random_mask(tq, tk));
    const Tensor t_mha = random_tensor(rng, batch * tq, heads * hd);
    run("multi_head_attention",
        {random_tensor(rng, batch * tq, heads * hd), random_tensor(rng, batch * tk, heads * hd),
         random_tensor(rng, batch * tk, heads * hd)},
        [&](Graph& g, const std::vector<NodeId>& x) {
          return against(g, diff::multi_head_attention(g, x[0], x[1], x[2], {heads, tq, tk}, masks), t_mha);
        });
  }
  const double secs = since(t0);
  return {worst <= 1e-4 && secs < 60.0, "worst relative error " + fmt("%.2e", worst) + " (" + worst_op + ") over " +
                                            std::to_string(checks) + " input checks, 14 ops x 20 shapes, " +
                                            fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------- 3

wm::ModelConfig mask_model_config() {
  wm::ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.embed_dim = 16;
  c.mlp_hidden = 32;
  c.token_dim = 8;
  c.history_len = 2;
  c.dropout = 0.0;
  return c;
}

Outcome mask_structure() {
  const auto t0 = Clock::now();
  const wm::ModelConfig c = mask_model_config();
  const wm::WorldModel model(c, wm::init_params(c, 3));
  const std::size_t n = c.n_tokens(), frames = c.context_frames();
  std::mt19937_64 rng(3);

  double worst_cross = 0.0;
  bool exact_isolation = true;
  for (int trial = 0; trial < 20; ++trial) {
    const wm::GroupAssignment g = wm::sample_group_assignment(rng, n);
    const diff::AttentionMask mask = wm::build_mask(c, g);
    std::vector<Tensor> hist, acts;
    for (std::size_t f = 0; f < frames; ++f) {
      hist.push_back(random_tensor(rng, n, c.token_dim));
      acts.push_back(random_tensor(rng, 1, c.action_dim, 0.1));
    }
    diff::AttentionSink sink;
    const Tensor base = model.forward(hist, acts, std::nullopt, mask, &sink);
    for (const Tensor& w : sink)
      for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j)
          if (g.group[i % n] != g.group[j % n]) worst_cross = std::max(worst_cross, std::abs(w(i, j)));
    const std::size_t t = uniform_size(rng, 0, n - 1);
    auto bumped = hist;
    for (auto& h : bumped)
      for (std::size_t d = 0; d < c.token_dim; ++d) h(t, d) += 1.0;
    const Tensor out = model.forward(bumped, acts, std::nullopt, mask);
    for (std::size_t r = 0; r < n; ++r)
      if (g.group[r] != g.group[t])
        for (std::size_t d = 0; d < c.token_dim; ++d) exact_isolation = exact_isolation && out(r, d) == base(r, d);
  }

  // Causality: perturbing the newest frame leaves earlier frames' outputs bit-identical.
  bool exact_causal = true;
  const diff::ParamSet params = wm::init_params(c, 4);
  for (int trial = 0; trial < 10; ++trial) {
    wm::SequenceBatch b;
    b.frames = frames;
    b.positions.resize(n);
    std::iota(b.positions.begin(), b.positions.end(), std::size_t{0});
    b.tokens = random_tensor(rng, frames * n, c.token_dim);
    b.actions = random_tensor(rng, frames, c.action_dim, 0.1);
    if (trial % 2 == 1) b.masks.push_back(wm::build_mask(c, wm::sample_group_assignment(rng, n)));
    wm::ForwardOptions opts;
    opts.last_frame_only = false;
    auto eval = [&](const wm::SequenceBatch& sb) {
      Graph g(false);
      return Tensor(g.value(wm::build_forward(g, c, wm::bind_params(g, params), sb, opts)));
    };
    const Tensor base = eval(b);
    wm::SequenceBatch p = b;
    for (std::size_t r = (frames - 1) * n; r < frames * n; ++r)
      for (std::size_t d = 0; d < c.token_dim; ++d) p.tokens(r, d) += 2.0;
    p.actions(frames - 1, 0) += 0.05;
    const Tensor out = eval(p);
    for (std::size_t r = 0; r < (frames - 1) * n; ++r)
      for (std::size_t d = 0; d < c.token_dim; ++d) exact_causal = exact_causal && out(r, d) == base(r, d);
  }

  const std::size_t draws = 10000;
  std::vector<double> counts(n, 0.0);
  for (std::size_t i = 0; i < draws; ++i) counts[wm::sample_group_assignment(rng, n).group0_size] += 1.0;
  const double expected = static_cast<double>(draws) / static_cast<double>(n - 1);
  double chi2 = 0.0;
  for (std::size_t s = 1; s < n; ++s) chi2 += (counts[s] - expected) * (counts[s] - expected) / expected;
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(static_cast<double>(n - 2)), chi2));

  const double secs = since(t0);
  const bool pass = worst_cross <= 1e-12 && exact_isolation && exact_causal && p > 0.01 && secs < 120.0;
  return {pass, "max cross-group weight " + fmt("%.1e", worst_cross) + ", isolation " +
                    (exact_isolation ? "exact" : "BROKEN") + ", causality " + (exact_causal ? "exact" : "BROKEN") +
                    ", group-size chi2 p=" + fmt("%.3f", p) + ", " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------- 4

Outcome rollout_accounting() {
  wm::ModelConfig c;
  c = wm::model_config_for(env::EnvConfig{}, c);
  const wm::WorldModel model(c, wm::init_params(c, 5));
  std::mt19937_64 rng(4);
  wm::History h;
  h.frames = {random_tensor(rng, c.n_tokens(), c.token_dim), random_tensor(rng, c.n_tokens(), c.token_dim)};
  h.actions = {random_tensor(rng, 1, c.action_dim, 0.1)};
  plan::CemConfig cc;
  cc.candidates = 100;
  cc.iterations = 10;
  cc.horizon = 5;
  wm::ForwardCounter counter;
  plan::cem_plan(model, h, random_tensor(rng, c.n_tokens(), c.token_dim), cc,
                 [&](std::size_t) { return wm::DropMask::all(c.n_tokens()); }, counter);
  return {counter.value() == 5000, "forward calls " + std::to_string(counter.value()) + " (expected 5000)"};
}

// ---------------------------------------------------------------- 5

Outcome planning_time(const Options& o) {
  const auto t0 = Clock::now();
  bench::RunConfig cfg;
  cfg.env.grid = 32;
  cfg.env.patch = 4;
  cfg.model = wm::model_config_for(cfg.env, cfg.model);
  cfg.strategies = {plan::Strategy::kRandom};
  cfg.drop_ratios = {0.3, 0.5, 0.9};
  cfg.episodes = o.timing_episodes;
  cfg.plan.max_mpc_iterations = o.timing_iterations;
  cfg.timing_serial = true;
  cfg.seed = o.seed;
  const wm::WorldModel model(cfg.model, wm::init_params(cfg.model, o.seed));
  const bench::BenchResult r = bench::run_bench(cfg, model);
  std::vector<double> t;
  std::string detail = std::to_string(cfg.model.n_tokens()) + " tokens;";
  for (const bench::BenchRecord& rec : r.records) {
    t.push_back(rec.plan_seconds);
    detail += " p=" + fmt("%.1f", rec.p) + ":" + fmt("%.2f", rec.plan_seconds) + "s";
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < t.size(); ++i) decreasing = decreasing && t[i] < t[i - 1];
  const double ratio = t.back() / t.front();
  detail += "; p=0.9/p=0 " + fmt("%.1f%%", 100.0 * ratio) + "; " + fmt("%.0f", since(t0)) + " s";
  return {decreasing && ratio <= 0.6 && since(t0) < 1800.0, detail};
}

// ------------------------------------------------------- shared models

struct TrainedModel {
  wm::Checkpoint ckpt;
  double train_seconds = 0.0;
  bool cached = false;
};

env::Dataset load_or_generate(const Options& o, const env::EnvConfig& ec) {
  fs::create_directories(o.work);
  const fs::path path = o.work / ("data_" + std::to_string(o.dataset_episodes) + "x" +
                                  std::to_string(o.episode_length) + "_s" + std::to_string(o.seed) + ".bin");
  if (fs::exists(path)) {
    env::Dataset ds = env::read_dataset(path);
    if (ds.env == ec) return ds;
  }
  env::Dataset ds = env::generate_dataset(ec, o.dataset_episodes, o.episode_length, o.seed);
  env::write_dataset(path, ds);
  return ds;
}

TrainedModel load_or_train(const Options& o, const env::Dataset& ds, wm::MaskPolicy policy) {
  const std::string tag = std::string(wm::to_string(policy)) + "_e" + std::to_string(o.epochs) + "_d" +
                          std::to_string(ds.episodes.size()) + "x" + std::to_string(o.episode_length) + "_s" +
                          std::to_string(o.seed);
  const fs::path path = o.work / ("model_" + tag + ".bin");
  const fs::path timing = o.work / ("model_" + tag + ".seconds");
  TrainedModel out;
  if (fs::exists(path) && fs::exists(timing)) {
    out.ckpt = wm::load_checkpoint(path);
    std::ifstream(timing) >> out.train_seconds;
    out.cached = true;
    return out;
  }
  wm::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.seed = o.seed;
  tc.policy = policy;
  const wm::ModelConfig mc = wm::model_config_for(ds.env);
  const auto t0 = Clock::now();
  const wm::TrainResult r = wm::train(mc, ds, tc, [&](const wm::EpochStats& s) {
    std::cerr << "  [" << wm::to_string(policy) << "] epoch " << s.epoch << " train " << s.train_loss << " val "
              << s.validation_loss << " " << s.seconds << " s\n";
  });
  out.train_seconds = since(t0);
  out.ckpt = wm::Checkpoint{mc, r.params, policy, ds.env};
  wm::save_checkpoint(path, out.ckpt);
  std::ofstream(timing) << out.train_seconds << "\n";
  return out;
}

// ---------------------------------------------------------------- 6

struct SuccessRun {
  Outcome outcome;
  std::vector<bool> full_outcomes;  // p = 0 per episode
  double full_rate = 0.0;
};

SuccessRun success_trend(const Options& o, const TrainedModel& grouped) {
  const auto t0 = Clock::now();
  bench::RunConfig cfg;
  cfg.env = *grouped.ckpt.env;
  cfg.model = grouped.ckpt.config;
  cfg.strategies = {plan::Strategy::kRandom};
  cfg.drop_ratios = {0.5};
  cfg.episodes = o.plan_episodes;
  cfg.seed = o.seed;
  cfg.timing_serial = true;
  const wm::WorldModel model(grouped.ckpt.config, grouped.ckpt.params);
  const bench::BenchResult r = bench::run_bench(cfg, model);
  SuccessRun out;
  for (const bench::EpisodeRow& e : r.episodes)
    if (e.strategy == "full") out.full_outcomes.push_back(e.success);
  const double s0 = r.records.at(0).success_rate, s5 = r.records.at(1).success_rate;
  out.full_rate = s0;
  const double gap = 100.0 * std::abs(s5 - s0);
  const bool pass = s0 >= 0.7 && gap <= 15.0 && grouped.train_seconds < 900.0;
  out.outcome = {pass, "p=0 success " + fmt("%.1f%%", 100.0 * s0) + ", random p=0.5 " + fmt("%.1f%%", 100.0 * s5) +
                           " (gap " + fmt("%.1f", gap) + " pp) over " + std::to_string(cfg.episodes) +
                           " episodes; training " + fmt("%.0f", grouped.train_seconds) + " s" +
                           (grouped.cached ? " (cached)" : "") + "; planning " + fmt("%.0f", since(t0)) + " s"};
  return out;
}

// ---------------------------------------------------------------- 7

Outcome grouped_vs_full(const Options& o, const TrainedModel& grouped, const TrainedModel& full) {
  const env::Dataset held_out = env::generate_dataset(*grouped.ckpt.env, 50, o.episode_length, o.seed + 1000);
  std::vector<const env::Episode*> eps;
  for (const env::Episode& e : held_out.episodes) eps.push_back(&e);
  analysis::PredErrorConfig pc;
  pc.trials = 5;
  pc.seed = o.seed;
  const analysis::PredErrorResult g =
      analysis::prediction_error(wm::WorldModel(grouped.ckpt.config, grouped.ckpt.params), eps, 0.5, pc);
  const analysis::PredErrorResult f =
      analysis::prediction_error(wm::WorldModel(full.ckpt.config, full.ckpt.params), eps, 0.5, pc);
  return {g.mean < f.mean, "relative L2 at p=0.5: grouped " + fmt("%.4f", g.mean) + " +- " + fmt("%.4f", g.stddev) +
                               ", full " + fmt("%.4f", f.mean) + " +- " + fmt("%.4f", f.stddev) + " (5 masks)"};
}

// ---------------------------------------------------------------- 8

Outcome hsic_suite(const env::Dataset& ds, std::uint64_t seed) {
  using analysis::KernelSpec;
  std::mt19937_64 rng(8);
  double self_err = 0.0, form_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4 + uniform_size(rng, 0, 60);
    const Tensor x = random_tensor(rng, n, 5), y = random_tensor(rng, n, 2);
    self_err = std::max(self_err, std::abs(analysis::nhsic(x, x, KernelSpec::linear(), KernelSpec::linear()) - 1.0));
    self_err = std::max(self_err, std::abs(analysis::nhsic(x, x, KernelSpec::rbf(), KernelSpec::rbf()) - 1.0));
    const double lin = oracle::hsic_sum_form(oracle::linear_gram(x), oracle::linear_gram(y), n);
    form_err = std::max(form_err,
                        std::abs(analysis::hsic(x, y, KernelSpec::linear(), KernelSpec::linear()) - std::max(lin, 0.0)));
    const double rbf = oracle::hsic_sum_form(oracle::rbf_gram(x, oracle::lower_median_distance(x)),
                                             oracle::rbf_gram(y, oracle::lower_median_distance(y)), n);
    form_err =
        std::max(form_err, std::abs(analysis::hsic(x, y, KernelSpec::rbf(), KernelSpec::rbf()) - std::max(rbf, 0.0)));
  }

  // 128 toy frames: kept tokens against agent position, aligned vs shuffled.
  const std::size_t n = 128;
  std::mt19937_64 pick(seed);
  const std::size_t tokens = ds.env.n_tokens(), dim = ds.env.token_dim;
  const wm::DropMask keep = plan::sample_mask_random(pick, tokens, 0.5);
  Tensor x({n, keep.size() * dim}), y({n, 2}), ys({n, 2});
  for (std::size_t s = 0; s < n; ++s) {
    const env::Episode& e = ds.episodes[uniform_size(pick, 0, ds.episodes.size() - 1)];
    const std::size_t t = uniform_size(pick, 0, e.states.size() - 1);
    for (std::size_t j = 0; j < keep.size(); ++j)
      for (std::size_t d = 0; d < dim; ++d) x(s, j * dim + d) = e.tokens[t](keep.kept[j], d);
    y(s, 0) = e.states[t].agent.x;
    y(s, 1) = e.states[t].agent.y;
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), pick);
  for (std::size_t s = 0; s < n; ++s) {
    ys(s, 0) = y(perm[s], 0);
    ys(s, 1) = y(perm[s], 1);
  }
  const double aligned = analysis::nhsic(x, y, KernelSpec::linear(), KernelSpec::rbf());
  const double shuffled = analysis::nhsic(x, ys, KernelSpec::linear(), KernelSpec::rbf());

  const std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 0.9};
  analysis::HsicSweepConfig sc;
  sc.samples = 128;
  sc.seed = seed;
  bool in_range = true;
  std::size_t values = 0;
  for (const analysis::HsicRow& row : analysis::hsic_sweep(ds, ratios, sc))
    for (double v : row.values) {
      in_range = in_range && v >= 0.0 && v <= 1.0;
      ++values;
    }
  const bool pass = self_err <= 1e-9 && form_err <= 1e-10 && aligned > shuffled && in_range;
  return {pass, "|nhsic(X,X)-1| " + fmt("%.1e", self_err) + ", trace vs sum form " + fmt("%.1e", form_err) +
                    ", aligned " + fmt("%.3f", aligned) + " vs shuffled " + fmt("%.3f", shuffled) + ", " +
                    std::to_string(values) + " sweep values " + (in_range ? "in [0,1]" : "OUT OF RANGE")};
}

// ---------------------------------------------------------------- 9

Outcome hungarian_suite() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::size_t mismatches = 0, trials = 0;
  for (std::size_t c = 2; c <= 7; ++c) {
    for (int t = 0; t < 200; ++t) {
      Tensor cost({c, c});
      for (double& v : cost.values()) v = u(rng);
      const plan::Assignment a = plan::hungarian_match(cost);
      double total = 0.0;
      for (std::size_t i = 0; i < c; ++i) total += cost(i, a.col_of_row[i]);
      std::set<std::size_t> cols(a.col_of_row.begin(), a.col_of_row.end());
      if (cols.size() != c || total != oracle::brute_force_assignment(cost)) ++mismatches;
      ++trials;
    }
  }
  return {mismatches == 0, std::to_string(trials) + " matrices (C=2..7), " + std::to_string(mismatches) +
                               " differ from the permutation minimum"};
}

// ---------------------------------------------------------------- 10

Outcome atc_suite() {
  std::mt19937_64 rng(10);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + uniform_size(rng, 0, 62), k = uniform_size(rng, 1, n);
    const Tensor x = random_tensor(rng, n, 8);
    const plan::ClusterSet cs = plan::atc_cluster(x, k);
    for (std::size_t d = 0; d < 8; ++d) {
      double global = 0.0, weighted = 0.0;
      for (std::size_t i = 0; i < n; ++i) global += x(i, d) / static_cast<double>(n);
      for (std::size_t j = 0; j < k; ++j)
        weighted += static_cast<double>(cs.sizes[j]) * cs.centroids(j, d) / static_cast<double>(n);
      worst = std::max(worst, std::abs(global - weighted));
    }
  }
  std::size_t recovered = 0;
  const int blobs = 50;
  for (int trial = 0; trial < blobs; ++trial) {
    const std::size_t n = 4 + uniform_size(rng, 0, 8);
    Tensor x = random_tensor(rng, n, 3, 0.3);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t split = uniform_size(rng, 1, n - 1);
    for (std::size_t i = 0; i < split; ++i)
      for (std::size_t d = 0; d < 3; ++d) x(idx[i], d) += 10.0;
    const plan::ClusterSet cs = plan::atc_cluster(x, 2);
    const std::vector<int> best = oracle::best_two_partition(x);
    bool same = true;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) same = same && ((cs.assignment[i] == cs.assignment[j]) == (best[i] == best[j]));
    recovered += same ? 1 : 0;
  }
  return {worst <= 1e-10 && recovered == static_cast<std::size_t>(blobs),
          "centroid mass error " + fmt("%.1e", worst) + ", two-blob recovery " + std::to_string(recovered) + "/" +
              std::to_string(blobs)};
}

// ---------------------------------------------------------------- 11

Outcome cem_suite() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor target = random_tensor(rng, 5, 2, 0.03);
    plan::CemConfig c;
    c.candidates = 100;
    c.elites = 10;
    c.iterations = 10;
    c.horizon = 5;
    c.seed = seed;
    const plan::CemResult r = plan::cem_optimize(c, [&](std::size_t, std::span<const Tensor> plans) {
      std::vector<double> s;
      for (const Tensor& p : plans) s.push_back(oracle::two_loop_mse(p, target));
      return s;
    });
    worst = std::max(worst, diff::max_abs_diff(r.plan, target));
  }
  return {worst <= 1e-2, "max |mean - optimum| " + fmt("%.2e", worst) + " after 10 iterations, 10 seeds"};
}

// ---------------------------------------------------------------- 12

Outcome noise_harness(const Options& o, const TrainedModel& grouped, const SuccessRun& baseline) {
  const auto t0 = Clock::now();
  const wm::WorldModel model(grouped.ckpt.config, grouped.ckpt.params);
  const std::vector<double> sigmas{0.0, 0.5, 2.0}, drops{0.0};
  const std::vector<analysis::NoiseCell> cells =
      analysis::noise_robustness(model, *grouped.ckpt.env, sigmas, drops, o.plan_episodes, plan::PlanConfig{}, o.seed);
  const bool identical = cells[0].outcomes == baseline.full_outcomes;
  bool monotone = true;
  std::string detail = "sigma=0 ";
  detail += identical ? "identical to baseline" : "DIFFERS from baseline";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    detail += "; sigma=" + fmt("%.1f", cells[i].sigma) + " " + fmt("%.1f%%", 100.0 * cells[i].success_rate());
    if (i > 0) monotone = monotone && cells[i].success_rate() <= cells[i - 1].success_rate() + 0.10 + 1e-12;
  }
  detail += "; " + fmt("%.0f", since(t0)) + " s";
  return {identical && monotone, detail};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app("spimag acceptance runner");
  Options o;
  std::vector<int> only;
  app.add_option("--work-dir", o.work, "Directory for cached datasets and models");
  app.add_option("--seed", o.seed);
  app.add_option("--epochs", o.epochs, "World-model training epochs");
  app.add_option("--dataset-episodes", o.dataset_episodes);
  app.add_option("--plan-episodes", o.plan_episodes, "Planning episodes per cell");
  app.add_option("--timing-episodes", o.timing_episodes);
  app.add_option("--timing-iterations", o.timing_iterations, "MPC iterations per timing episode");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::set<int> wanted(only.begin(), only.end());
  auto want = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };
  std::map<int, Outcome> results;
  auto record = [&](int c, Outcome out) {
    std::cout << "criterion " << c << ": " << (out.pass ? "PASS" : "FAIL") << " - " << out.detail << std::endl;
    results[c] = std::move(out);
  };
  auto guarded = [&](int c, const std::function<Outcome()>& f) {
    if (!want(c)) return;
    try {
      record(c, f());
    } catch (const std::exception& e) {
      record(c, {false, std::string("error: ") + e.what()});
    }
  };

  guarded(2, gradient_suite);
  guarded(3, mask_structure);
  guarded(4, rollout_accounting);
  guarded(9, hungarian_suite);
  guarded(10, atc_suite);
  guarded(11, cem_suite);
  guarded(5, [&] { return planning_time(o); });

  const bool need_data = want(6) || want(7) || want(8) || want(12);
  if (need_data) {
    try {
      const env::Dataset ds = load_or_generate(o, env::EnvConfig{});
      guarded(8, [&] { return hsic_suite(ds, o.seed); });
      std::optional<TrainedModel> grouped;
      if (want(6) || want(7) || want(12)) grouped = load_or_train(o, ds, wm::MaskPolicy::kGrouped);
      std::optional<SuccessRun> success;
      if (want(6) || want(12)) {
        success = success_trend(o, *grouped);
        if (want(6)) record(6, success->outcome);
      }
      guarded(7, [&] { return grouped_vs_full(o, *grouped, load_or_train(o, ds, wm::MaskPolicy::kFull)); });
      guarded(12, [&] { return noise_harness(o, *grouped, *success); });
    } catch (const std::exception& e) {
      for (int c : {6, 7, 8, 12})
        if (want(c) && !results.count(c)) record(c, {false, std::string("error: ") + e.what()});
    }
  }

  if (want(1)) {
    bool all = true;
    std::string failed;
    for (int c = 2; c <= 12; ++c) {
      const auto it = results.find(c);
      const bool ok = it != results.end() && it->second.pass;
      all = all && ok;
      if (!ok) failed += (failed.empty() ? "" : ",") + std::to_string(c);
    }
    record(1, {all, all ? "desk-scale trend and oracle suites all pass"
                        : "desk-scale acceptance incomplete; failing or not run: " + failed});
  }
  std::size_t failures = 0;
  for (const auto& [c, out] : results) failures += out.pass ? 0 : 1;
  std::cout << results.size() - failures << "/" << results.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
