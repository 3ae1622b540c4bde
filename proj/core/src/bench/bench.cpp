// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/bench/bench.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>

#include <toml.hpp>

#include "spimag/binary_io.hpp"
#include "spimag/env/dataset.hpp"
#include "spimag/errors.hpp"
#include "spimag/wm/model_io.hpp"

namespace spimag::bench {

void RunConfig::validate(bool require_checkpoint) const {
  env.validate();
  plan.validate();
  if (strategies.empty()) throw ConfigError("bench needs at least one strategy");
  if (drop_ratios.empty()) throw ConfigError("bench needs at least one drop ratio");
  for (double p : drop_ratios) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("drop ratio " + std::to_string(p) + " is outside [0, 1)");
  }
  if (episodes == 0) throw ConfigError("bench needs at least one episode per cell");
  if (require_checkpoint) {
    if (checkpoint.empty()) throw ConfigError("bench config names no checkpoint");
    if (!std::filesystem::exists(checkpoint)) {
      throw ConfigError("checkpoint '" + checkpoint.string() + "' does not exist");
    }
    if (!std::filesystem::exists(wm::sidecar_path(checkpoint))) {
      throw ConfigError("checkpoint sidecar '" + wm::sidecar_path(checkpoint).string() + "' does not exist");
    }
  }
}

namespace {

template <class T>
T get_or(const toml::table& t, std::string_view key, T fallback) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return fallback;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = n->value<bool>()) return *v;
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = n->value<double>()) return *v;
  } else if constexpr (std::is_integral_v<T>) {
    if (auto v = n->value<std::int64_t>()) {
      if (*v < 0) throw ConfigError("key '" + std::string(key) + "' must be non-negative");
      return static_cast<T>(*v);
    }
  } else {
    if (auto v = n->value<std::string>()) return *v;
  }
  throw ConfigError("key '" + std::string(key) + "' has the wrong type");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("invalid TOML: ") + std::string(e.description()));
  }
  RunConfig c;
  c.seed = get_or<std::uint64_t>(root, "seed", c.seed);
  c.episodes = get_or<std::size_t>(root, "episodes", c.episodes);
  c.timing_serial = get_or<bool>(root, "timing_serial", c.timing_serial);
  c.workers = get_or<std::size_t>(root, "workers", c.workers);
  c.checkpoint = resolve(base_dir, get_or<std::string>(root, "checkpoint", ""));
  c.out_dir = resolve(base_dir, get_or<std::string>(root, "out_dir", c.out_dir.string()));
  if (const toml::array* a = root["strategies"].as_array()) {
    c.strategies.clear();
    for (const toml::node& n : *a) {
      const auto s = n.value<std::string>();
      if (!s) throw ConfigError("strategies must be strings");
      c.strategies.push_back(plan::parse_strategy(*s));
    }
  }
  if (const toml::array* a = root["drop_ratios"].as_array()) {
    c.drop_ratios.clear();
    for (const toml::node& n : *a) {
      const auto v = n.value<double>();
      if (!v) throw ConfigError("drop_ratios must be numbers");
      c.drop_ratios.push_back(*v);
    }
  }
  if (const toml::table* e = root["env"].as_table()) {
    env::EnvConfig& ec = c.env;
    ec.grid = get_or<std::size_t>(*e, "grid", ec.grid);
    ec.patch = get_or<std::size_t>(*e, "patch", ec.patch);
    ec.token_dim = get_or<std::size_t>(*e, "token_dim", ec.token_dim);
    ec.tokenizer_seed = get_or<std::uint64_t>(*e, "tokenizer_seed", ec.tokenizer_seed);
    ec.wall.x = get_or<double>(*e, "wall_x", ec.wall.x);
    ec.wall.gap_lo = get_or<double>(*e, "gap_lo", ec.wall.gap_lo);
    ec.wall.gap_hi = get_or<double>(*e, "gap_hi", ec.wall.gap_hi);
    ec.agent_radius = get_or<double>(*e, "agent_radius", ec.agent_radius);
    ec.action_max = get_or<double>(*e, "action_max", ec.action_max);
    ec.contact_eps = get_or<double>(*e, "contact_eps", ec.contact_eps);
    ec.success_radius = get_or<double>(*e, "success_radius", ec.success_radius);
    ec.goal_min_distance = get_or<double>(*e, "goal_min_distance", ec.goal_min_distance);
    ec.goal_max_distance = get_or<double>(*e, "goal_max_distance", ec.goal_max_distance);
  }
  if (const toml::table* d = root["data"].as_table()) {
    c.dataset_episodes = get_or<std::size_t>(*d, "episodes", c.dataset_episodes);
    c.episode_length = get_or<std::size_t>(*d, "length", c.episode_length);
  }
  if (const toml::table* m = root["model"].as_table()) {
    wm::ModelConfig& mc = c.model;
    mc.n_layers = get_or<std::size_t>(*m, "n_layers", mc.n_layers);
    mc.n_heads = get_or<std::size_t>(*m, "n_heads", mc.n_heads);
    mc.embed_dim = get_or<std::size_t>(*m, "embed_dim", mc.embed_dim);
    mc.mlp_hidden = get_or<std::size_t>(*m, "mlp_hidden", mc.mlp_hidden);
    mc.action_proj_dim = get_or<std::size_t>(*m, "action_proj_dim", mc.action_proj_dim);
    mc.history_len = get_or<std::size_t>(*m, "history_len", mc.history_len);
    mc.dropout = get_or<double>(*m, "dropout", mc.dropout);
  }
  if (const toml::table* t = root["train"].as_table()) {
    wm::TrainConfig& tc = c.train;
    tc.epochs = get_or<std::size_t>(*t, "epochs", tc.epochs);
    tc.batch_size = get_or<std::size_t>(*t, "batch_size", tc.batch_size);
    tc.lr = get_or<double>(*t, "lr", tc.lr);
    tc.policy = wm::parse_mask_policy(get_or<std::string>(*t, "policy", std::string(wm::to_string(tc.policy))));
    tc.validation_fraction = get_or<double>(*t, "validation_fraction", tc.validation_fraction);
    tc.max_steps = get_or<std::size_t>(*t, "max_steps", tc.max_steps);
  }
  if (const toml::table* p = root["plan"].as_table()) {
    plan::PlanConfig& pc = c.plan;
    pc.candidates = get_or<std::size_t>(*p, "candidates", pc.candidates);
    pc.elites = get_or<std::size_t>(*p, "elites", pc.elites);
    pc.cem_iterations = get_or<std::size_t>(*p, "cem_iterations", pc.cem_iterations);
    pc.horizon = get_or<std::size_t>(*p, "horizon", pc.horizon);
    pc.max_mpc_iterations = get_or<std::size_t>(*p, "max_mpc_iterations", pc.max_mpc_iterations);
    pc.replan = get_or<bool>(*p, "replan", pc.replan);
  }
  c.train.seed = c.seed;
  c.model = wm::model_config_for(c.env, c.model);
  c.validate(false);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["env"] = env::to_json(c.env);
  j["model"] = wm::to_json(c.model);
  j["data"] = {{"episodes", c.dataset_episodes}, {"length", c.episode_length}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"policy", std::string(wm::to_string(c.train.policy))},
                {"validation_fraction", c.train.validation_fraction},
                {"max_steps", c.train.max_steps}};
  j["plan"] = {{"candidates", c.plan.candidates},
               {"elites", c.plan.elites},
               {"cem_iterations", c.plan.cem_iterations},
               {"horizon", c.plan.horizon},
               {"max_mpc_iterations", c.plan.max_mpc_iterations},
               {"replan", c.plan.replan}};
  auto& s = j["strategies"] = nlohmann::json::array();
  for (plan::Strategy st : c.strategies) s.push_back(std::string(plan::to_string(st)));
  j["drop_ratios"] = c.drop_ratios;
  j["seed"] = c.seed;
  j["episodes"] = c.episodes;
  j["checkpoint"] = c.checkpoint.string();
  j["timing_serial"] = c.timing_serial;
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, io::fnv1a64(to_json(cfg).dump()));
  return buf;
}

EpisodeRow episode_row(const plan::EpisodeResult& r, std::size_t episode, plan::Strategy s, double p) {
  return {episode, std::string(plan::to_string(s)), p, r.success, r.mpc_iterations, r.mean_plan_seconds(),
          r.forward_calls, r.final_distance};
}

BenchResult run_bench(const RunConfig& cfg, const wm::WorldModel& model) {
  cfg.validate(false);
  struct Cell {
    plan::Strategy strategy;
    double p;
  };
  std::vector<Cell> cells{{plan::Strategy::kFull, 0.0}};
  for (plan::Strategy s : cfg.strategies) {
    if (s == plan::Strategy::kFull) continue;
    for (double p : cfg.drop_ratios) cells.push_back({s, p});
  }

  BenchResult out;
  double full_seconds = 0.0;
  for (const Cell& cell : cells) {
    plan::PlanConfig pc = cfg.plan;
    pc.strategy = cell.strategy;
    pc.drop_ratio = cell.p;
    auto run_one = [&](std::size_t e) {
      const auto [start, goal] = plan::episode_task(cfg.env, cfg.seed, e);
      plan::MpcOptions opts;
      opts.seed = plan::episode_seed(cfg.seed, e);
      return plan::mpc_run(model, cfg.env, start, goal, pc, opts);
    };
    std::vector<plan::EpisodeResult> results(cfg.episodes);
    if (cfg.timing_serial || cfg.workers <= 1) {
      for (std::size_t e = 0; e < cfg.episodes; ++e) results[e] = run_one(e);
    } else {
      for (std::size_t e0 = 0; e0 < cfg.episodes; e0 += cfg.workers) {
        std::vector<std::future<plan::EpisodeResult>> jobs;
        for (std::size_t e = e0; e < std::min(cfg.episodes, e0 + cfg.workers); ++e) {
          jobs.push_back(std::async(std::launch::async, run_one, e));
        }
        for (std::size_t i = 0; i < jobs.size(); ++i) results[e0 + i] = jobs[i].get();
      }
    }

    BenchRecord rec;
    rec.strategy = std::string(plan::to_string(cell.strategy));
    rec.p = cell.p;
    rec.episodes = cfg.episodes;
    double seconds = 0.0;
    std::size_t iters = 0;
    std::size_t successes = 0;
    for (std::size_t e = 0; e < results.size(); ++e) {
      const plan::EpisodeResult& r = results[e];
      successes += r.success ? 1 : 0;
      rec.forward_calls += r.forward_calls;
      for (double s : r.plan_seconds) seconds += s;
      iters += r.plan_seconds.size();
      out.episodes.push_back(episode_row(r, e, cell.strategy, cell.p));
    }
    rec.success_rate = static_cast<double>(successes) / static_cast<double>(cfg.episodes);
    rec.plan_seconds = iters ? seconds / static_cast<double>(iters) : 0.0;
    if (out.records.empty()) full_seconds = rec.plan_seconds;
    rec.change_pct = full_seconds > 0.0 ? (rec.plan_seconds - full_seconds) / full_seconds * 100.0 : 0.0;
    out.records.push_back(rec);
  }

  out.manifest = to_json(cfg);
  out.manifest["config_hash"] = config_hash(cfg);
  out.manifest["model"] = wm::to_json(model.config());
  out.manifest["cells"] = out.records.size();
  return out;
}

BenchResult run_bench(const RunConfig& cfg) {
  cfg.validate(true);
  const wm::Checkpoint ck = wm::load_checkpoint(cfg.checkpoint);
  if (ck.env && (ck.env->n_tokens() != cfg.env.n_tokens() || ck.env->token_dim != cfg.env.token_dim)) {
    throw ConfigError("checkpoint was trained on a different token grid than the bench env");
  }
  BenchResult res = run_bench(cfg, wm::WorldModel(ck.config, ck.params));
  res.manifest["mask_policy"] = std::string(wm::to_string(ck.policy));
  write_bench(res, cfg.out_dir);
  return res;
}

void write_bench(const BenchResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(out_dir / name, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + (out_dir / name).string() + "'");
    out << text;
  };
  write("records.csv", to_csv(result.records));
  write("episodes.csv", episodes_csv(result.episodes));
  write("manifest.json", result.manifest.dump(2) + "\n");
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr std::string_view kRecordHeader =
    "strategy,p,success_rate,plan_seconds_per_iter,change_pct,forward_calls,episodes";

}  // namespace

std::string format_table(std::span<const BenchRecord> records) {
  if (records.empty()) throw DegenerateInputError("no bench records to report");
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %6s %9s %14s %10s %14s %9s\n", "strategy", "p", "success", "plan s/iter",
                "change %", "forward calls", "episodes");
  out += line;
  for (const BenchRecord& r : records) {
    std::snprintf(line, sizeof line, "%-10s %6.2f %8.1f%% %14.4f %+9.1f%% %14" PRIu64 " %9zu\n", r.strategy.c_str(),
                  r.p, r.success_rate * 100.0, r.plan_seconds, r.change_pct, r.forward_calls, r.episodes);
    out += line;
  }
  return out;
}

std::string to_csv(std::span<const BenchRecord> records) {
  if (records.empty()) throw DegenerateInputError("no bench records to report");
  std::string out(kRecordHeader);
  out += '\n';
  for (const BenchRecord& r : records) {
    out += r.strategy + ',' + num(r.p) + ',' + num(r.success_rate) + ',' + num(r.plan_seconds) + ',' +
           num(r.change_pct) + ',' + std::to_string(r.forward_calls) + ',' + std::to_string(r.episodes) + '\n';
  }
  return out;
}

std::vector<BenchRecord> parse_records_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != kRecordHeader) throw IoError("unexpected bench CSV header");
  std::vector<BenchRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw IoError("bench CSV row has " + std::to_string(f.size()) + " fields: " + line);
    try {
      out.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                     std::stoull(f[5]), static_cast<std::size_t>(std::stoull(f[6]))});
    } catch (const std::exception&) {
      throw IoError("malformed bench CSV row: " + line);
    }
  }
  if (out.empty()) throw DegenerateInputError("bench CSV holds no records");
  return out;
}

std::string episodes_csv(std::span<const EpisodeRow> rows) {
  std::string out = "episode,strategy,p,success,mpc_iters,plan_seconds_per_iter,forward_calls,final_distance\n";
  for (const EpisodeRow& r : rows) {
    out += std::to_string(r.episode) + ',' + r.strategy + ',' + num(r.p) + ',' + (r.success ? "1" : "0") + ',' +
           std::to_string(r.mpc_iters) + ',' + num(r.plan_seconds_per_iter) + ',' + std::to_string(r.forward_calls) +
           ',' + num(r.final_distance) + '\n';
  }
  return out;
}

}  // namespace spimag::bench
