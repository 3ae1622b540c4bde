// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spimag/env/wall_env.hpp"
#include "spimag/plan/mpc.hpp"
#include "spimag/wm/trainer.hpp"
#include "spimag/wm/world_model.hpp"

namespace spimag::bench {

struct RunConfig {
  env::EnvConfig env;
  wm::ModelConfig model;
  wm::TrainConfig train;
  plan::PlanConfig plan;
  std::size_t dataset_episodes = 500;
  std::size_t episode_length = 50;
  std::vector<plan::Strategy> strategies{plan::Strategy::kRandom};
  std::vector<double> drop_ratios{0.0, 0.3, 0.5, 0.9};
  std::uint64_t seed = 0;
  std::size_t episodes = 30;
  std::filesystem::path checkpoint;
  std::filesystem::path out_dir = "bench_out";
  bool timing_serial = true;
  std::size_t workers = 1;  // ignored when timing_serial

  // Drop ratios in [0, 1), at least one strategy and episode, and an
  // existing checkpoint when `require_checkpoint`. Throws ConfigError.
  void validate(bool require_checkpoint = true) const;
};

// TOML layout:
//   seed, episodes, checkpoint, out_dir, timing_serial, workers,
//   strategies = [...], drop_ratios = [...]
//   [env]  grid, patch, token_dim, tokenizer_seed, agent_radius, ...
//   [data] episodes, length
//   [model] n_layers, n_heads, embed_dim, mlp_hidden, action_proj_dim,
//           history_len, dropout
//   [train] epochs, batch_size, lr, policy, validation_fraction, max_steps
//   [plan] candidates, elites, cem_iterations, horizon,
//          max_mpc_iterations, replan
// Relative paths resolve against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir = ".");
nlohmann::json to_json(const RunConfig& cfg);
// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

struct EpisodeRow {
  std::size_t episode = 0;
  std::string strategy;
  double p = 0.0;
  bool success = false;
  std::size_t mpc_iters = 0;
  double plan_seconds_per_iter = 0.0;
  std::uint64_t forward_calls = 0;
  double final_distance = 0.0;
};

struct BenchRecord {
  std::string strategy;
  double p = 0.0;
  double success_rate = 0.0;
  double plan_seconds = 0.0;  // mean over planning iterations
  double change_pct = 0.0;    // vs the p = 0 Full row
  std::uint64_t forward_calls = 0;
  std::size_t episodes = 0;

  friend bool operator==(const BenchRecord&, const BenchRecord&) = default;
};

struct BenchResult {
  std::vector<BenchRecord> records;
  std::vector<EpisodeRow> episodes;
  nlohmann::json manifest;
};

// Runs every (strategy, p) cell plus the p = 0 Full reference row. Full
// ignores p, so it appears once. Episode i of every cell shares its task
// and planner seed.
BenchResult run_bench(const RunConfig& cfg, const wm::WorldModel& model);

// Loads the checkpoint named by cfg, runs, and writes records.csv,
// episodes.csv and manifest.json into cfg.out_dir.
BenchResult run_bench(const RunConfig& cfg);
void write_bench(const BenchResult& result, const std::filesystem::path& out_dir);

// Aligned text table and CSV of the same records. Throws
// DegenerateInputError when empty.
std::string format_table(std::span<const BenchRecord> records);
std::string to_csv(std::span<const BenchRecord> records);
std::vector<BenchRecord> parse_records_csv(std::string_view csv);

std::string episodes_csv(std::span<const EpisodeRow> rows);
EpisodeRow episode_row(const plan::EpisodeResult& r, std::size_t episode, plan::Strategy s, double p);

}  // namespace spimag::bench
