// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spimag/analysis/hsic.hpp"
#include "spimag/analysis/prediction.hpp"
#include "spimag/analysis/probe.hpp"
#include "spimag/bench/bench.hpp"
#include "spimag/env/dataset.hpp"
#include "spimag/errors.hpp"
#include "spimag/plan/masks.hpp"
#include "spimag/runtime.hpp"
#include "spimag/wm/model_io.hpp"
#include "spimag/wm/trainer.hpp"

namespace fs = std::filesystem;
using namespace spimag;

namespace {

struct Global {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

bench::RunConfig load_config(const Global& g) {
  bench::RunConfig c = g.config.empty() ? bench::parse_run_config("") : bench::load_run_config(g.config);
  if (g.seed) {
    c.seed = *g.seed;
    c.train.seed = *g.seed;
  }
  return c;
}

fs::path out_or(const Global& g, const char* fallback) { return g.out.empty() ? fs::path(fallback) : fs::path(g.out); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " '" + path + "' does not exist");
}

wm::WorldModel load_model(const std::string& path) {
  require_file(path, "checkpoint");
  wm::Checkpoint ck = wm::load_checkpoint(path);
  return wm::WorldModel(ck.config, std::move(ck.params));
}

env::Dataset load_dataset(const std::string& path) {
  require_file(path, "dataset");
  return env::read_dataset(path);
}

std::vector<const env::Episode*> all_episodes(const env::Dataset& ds) {
  std::vector<const env::Episode*> out;
  for (const env::Episode& e : ds.episodes) out.push_back(&e);
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"spimag: sparse token world-model planning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Master seed (overrides the config)");
  app.add_option("--config", g.config, "TOML run configuration");
  app.add_option("--out", g.out, "Output file or directory");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate random-action episodes of the wall environment");
  std::optional<std::size_t> gen_episodes, gen_length;
  gen->add_option("--episodes", gen_episodes, "Episode count");
  gen->add_option("--ep-len,--length", gen_length, "Actions per episode");

  // train
  auto* train = app.add_subcommand("train", "Train the world model on a dataset");
  std::string train_data;
  std::optional<std::string> train_policy;
  std::optional<std::size_t> train_epochs, train_steps;
  train->add_option("--dataset", train_data, "Dataset file")->required();
  train->add_option("--policy", train_policy, "grouped or full");
  train->add_option("--epochs", train_epochs);
  train->add_option("--max-steps", train_steps);

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "Run MPC episodes with one strategy and drop ratio");
  std::string plan_ckpt;
  std::string plan_strategy = "random";
  double plan_p = 0.0;
  std::optional<std::size_t> plan_episodes;
  bool plan_no_replan = false;
  std::optional<double> plan_sigma;
  std::string plan_env_cfg;
  plan_cmd->add_option("--checkpoint", plan_ckpt)->required();
  plan_cmd->add_option("--env-config", plan_env_cfg, "TOML whose [env] table overrides the checkpoint's");
  plan_cmd->add_option("--strategy", plan_strategy, "random|fixed|lhs|attn-wm|atc|full");
  plan_cmd->add_option("-p,--drop-ratio", plan_p);
  plan_cmd->add_option("--episodes", plan_episodes);
  plan_cmd->add_flag("--no-replan", plan_no_replan);
  plan_cmd->add_option("--sigma", plan_sigma, "Corrupt full-token rollouts with this noise scale");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Success rate and planning time per strategy and drop ratio");
  std::optional<std::string> bench_ckpt;
  bool bench_serial = false;
  std::optional<std::size_t> bench_workers, bench_episodes;
  bench_cmd->add_option("--checkpoint", bench_ckpt);
  bench_cmd->add_flag("--timing-serial", bench_serial);
  bench_cmd->add_option("--workers", bench_workers);
  bench_cmd->add_option("--episodes", bench_episodes);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Information and robustness analyses");
  analyze->require_subcommand(1);
  analyze->fallthrough();
  std::string an_ckpt, an_data;
  std::vector<double> an_ratios{0.0, 0.25, 0.5, 0.75, 0.9};
  std::size_t an_repeats = 0;
  auto add_common = [&](CLI::App* sub, bool checkpoint, bool dataset) {
    if (checkpoint) sub->add_option("--checkpoint", an_ckpt)->required();
    if (dataset) sub->add_option("--dataset", an_data)->required();
    sub->add_option("--ratios", an_ratios, "Drop ratios")->delimiter(',');
    sub->add_option("--repeats", an_repeats, "Masks per ratio (0 = default)");
  };
  auto* hsic_cmd = analyze->add_subcommand("hsic", "nHSIC between kept tokens and agent position");
  add_common(hsic_cmd, false, true);
  std::size_t hsic_samples = 128;
  hsic_cmd->add_option("--samples", hsic_samples);

  auto* probe_cmd = analyze->add_subcommand("probe", "Attentive probe of agent position from kept tokens");
  add_common(probe_cmd, false, true);
  std::size_t probe_samples = 2000, probe_epochs = 500;
  std::optional<double> probe_lr;
  probe_cmd->add_option("--samples", probe_samples);
  probe_cmd->add_option("--epochs", probe_epochs);
  probe_cmd->add_option("--lr", probe_lr);

  auto* pred_cmd = analyze->add_subcommand("prederr", "Relative L2 error of sparse next-frame prediction");
  add_common(pred_cmd, true, true);

  auto* noise_cmd = analyze->add_subcommand("noise", "Planning success under corrupted predictions");
  noise_cmd->add_option("--checkpoint", an_ckpt)->required();
  std::vector<double> noise_sigmas{0.0, 0.5, 2.0}, noise_drops{0.0};
  std::optional<std::size_t> noise_episodes;
  bool noise_baseline = false;
  noise_cmd->add_option("--sigmas", noise_sigmas)->delimiter(',');
  noise_cmd->add_option("--drops", noise_drops)->delimiter(',');
  noise_cmd->add_option("--episodes", noise_episodes);
  noise_cmd->add_flag("--random-baseline", noise_baseline, "Add a uniform random-action row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    bench::RunConfig cfg = load_config(g);

    if (*gen) {
      const std::size_t n = gen_episodes.value_or(cfg.dataset_episodes);
      const std::size_t len = gen_length.value_or(cfg.episode_length);
      if (n == 0 || len == 0) throw ConfigError("--episodes and --length must be positive");
      const env::Dataset ds = env::generate_dataset(cfg.env, n, len, cfg.seed);
      const fs::path out = out_or(g, "data.bin");
      env::write_dataset(out, ds);
      std::cout << "wrote " << n << " episodes (" << ds.total_transitions() << " transitions) to " << out << "\n";
    } else if (*train) {
      const env::Dataset ds = load_dataset(train_data);
      wm::TrainConfig tc = cfg.train;
      if (train_policy) tc.policy = wm::parse_mask_policy(*train_policy);
      if (train_epochs) tc.epochs = *train_epochs;
      if (train_steps) tc.max_steps = *train_steps;
      const wm::ModelConfig mc = wm::model_config_for(ds.env, cfg.model);
      const wm::TrainResult r = wm::train(mc, ds, tc, [](const wm::EpochStats& s) {
        std::printf("epoch %zu  steps %zu  train %.6f  val %.6f  %.1fs\n", s.epoch, s.steps, s.train_loss,
                    s.validation_loss, s.seconds);
        std::fflush(stdout);
      });
      const fs::path out = out_or(g, "model.bin");
      wm::save_checkpoint(out, wm::Checkpoint{mc, r.params, tc.policy, ds.env});
      std::cout << "saved " << out << "\n";
    } else if (*plan_cmd) {
      require_file(plan_ckpt, "checkpoint");
      const wm::Checkpoint ck = wm::load_checkpoint(plan_ckpt);
      env::EnvConfig envc = ck.env.value_or(cfg.env);
      if (!plan_env_cfg.empty()) {
        envc = bench::load_run_config(plan_env_cfg).env;
        if (envc.n_tokens() != ck.config.n_tokens() || envc.token_dim != ck.config.token_dim) {
          throw ConfigError("--env-config token grid does not match the checkpoint");
        }
      }
      const wm::WorldModel model(ck.config, ck.params);
      plan::PlanConfig pc = cfg.plan;
      pc.strategy = plan::parse_strategy(plan_strategy);
      pc.drop_ratio = plan_p;
      if (plan_no_replan) pc.replan = false;
      pc.validate();
      const std::size_t episodes = plan_episodes.value_or(cfg.episodes);
      std::vector<bench::EpisodeRow> rows;
      std::size_t successes = 0;
      for (std::size_t e = 0; e < episodes; ++e) {
        const auto [start, goal] = plan::episode_task(envc, cfg.seed, e);
        plan::MpcOptions opts;
        opts.seed = plan::episode_seed(cfg.seed, e);
        if (plan_sigma) opts.corruption = plan::Corruption{*plan_sigma};
        const plan::EpisodeResult r = plan::mpc_run(model, envc, start, goal, pc, opts);
        successes += r.success ? 1 : 0;
        rows.push_back(bench::episode_row(r, e, pc.strategy, pc.drop_ratio));
        std::printf("episode %zu  success %d  iters %zu  %.3fs/iter  dist %.4f\n", e, r.success ? 1 : 0,
                    r.mpc_iterations, r.mean_plan_seconds(), r.final_distance);
        std::fflush(stdout);
      }
      const fs::path out = out_or(g, "plan.csv");
      write_text(out, bench::episodes_csv(rows));
      std::printf("success %zu/%zu, wrote %s\n", successes, episodes, out.string().c_str());
    } else if (*bench_cmd) {
      if (bench_ckpt) cfg.checkpoint = *bench_ckpt;
      if (bench_serial) cfg.timing_serial = true;
      if (bench_workers) {
        cfg.workers = *bench_workers;
        if (!bench_serial) cfg.timing_serial = false;
      }
      if (bench_episodes) cfg.episodes = *bench_episodes;
      if (!g.out.empty()) cfg.out_dir = g.out;
      const bench::BenchResult r = bench::run_bench(cfg);
      std::cout << bench::format_table(r.records) << "wrote " << cfg.out_dir << "\n";
    } else if (*analyze) {
      if (*hsic_cmd) {
        const env::Dataset ds = load_dataset(an_data);
        analysis::HsicSweepConfig hc;
        hc.samples = hsic_samples;
        hc.seed = cfg.seed;
        if (an_repeats) hc.masks_per_ratio = an_repeats;
        const auto rows = analysis::hsic_sweep(ds, an_ratios, hc);
        std::string csv = "ratio,kept,mean,std,repeats\n";
        for (const auto& r : rows) {
          csv += num(r.ratio) + ',' + std::to_string(r.kept) + ',' + num(r.mean) + ',' + num(r.stddev) + ',' +
                 std::to_string(r.values.size()) + '\n';
        }
        write_text(out_or(g, "hsic.csv"), csv);
        std::cout << csv;
      } else if (*probe_cmd) {
        const env::Dataset ds = load_dataset(an_data);
        const analysis::ProbeData pd = analysis::probe_data(ds, probe_samples, cfg.seed);
        analysis::ProbeConfig pc;
        pc.epochs = probe_epochs;
        if (probe_lr) pc.lr = *probe_lr;
        pc.seed = cfg.seed;
        const std::size_t n = ds.env.n_tokens();
        const std::size_t repeats = an_repeats ? an_repeats : 3;
        std::mt19937_64 rng(cfg.seed);
        std::string csv = "ratio,kept,mean,std,target_variance\n";
        for (double p : an_ratios) {
          std::vector<double> losses;
          double var = 0.0;
          for (std::size_t rep = 0; rep < (p == 0.0 ? 1 : repeats); ++rep) {
            const wm::DropMask m = plan::sample_mask_random(rng, n, p);
            const analysis::ProbeResult r = analysis::train_probe(pd.tokens, pd.targets, m, pc);
            losses.push_back(r.validation_loss.back());
            var = r.target_variance;
          }
          const std::string row = num(p) + ',' + std::to_string(plan::keep_count(n, p)) + ',' + num(mean_of(losses)) +
                                  ',' + num(std_of(losses)) + ',' + num(var) + '\n';
          csv += row;
          std::cout << row << std::flush;
        }
        write_text(out_or(g, "probe.csv"), csv);
      } else if (*pred_cmd) {
        const wm::WorldModel model = load_model(an_ckpt);
        const env::Dataset ds = load_dataset(an_data);
        const auto eps = all_episodes(ds);
        analysis::PredErrorConfig pc;
        pc.seed = cfg.seed;
        if (an_repeats) pc.trials = an_repeats;
        std::string csv = "ratio,kept,mean,std,trials,excluded_zero_norm\n";
        for (double p : an_ratios) {
          const auto r = analysis::prediction_error(model, eps, p, pc);
          const std::string row = num(p) + ',' + std::to_string(plan::keep_count(ds.env.n_tokens(), p)) + ',' +
                                  num(r.mean) + ',' + num(r.stddev) + ',' + std::to_string(r.trials.size()) + ',' +
                                  std::to_string(r.excluded_zero_norm) + '\n';
          csv += row;
          std::cout << row << std::flush;
        }
        write_text(out_or(g, "prederr.csv"), csv);
      } else if (*noise_cmd) {
        require_file(an_ckpt, "checkpoint");
        const wm::Checkpoint ck = wm::load_checkpoint(an_ckpt);
        const env::EnvConfig envc = ck.env.value_or(cfg.env);
        const wm::WorldModel model(ck.config, ck.params);
        const std::size_t episodes = noise_episodes.value_or(cfg.episodes);
        const auto cells =
            analysis::noise_robustness(model, envc, noise_sigmas, noise_drops, episodes, cfg.plan, cfg.seed);
        std::string csv = "kind,sigma,drop,episodes,successes,success_rate\n";
        for (const auto& c : cells) {
          csv += "corrupted," + num(c.sigma) + ',' + num(c.drop) + ',' + std::to_string(c.episodes) + ',' +
                 std::to_string(c.successes) + ',' + num(c.success_rate()) + '\n';
        }
        if (noise_baseline) {
          const auto c = analysis::random_action_baseline(envc, episodes, cfg.plan, cfg.seed);
          csv += "random_actions,nan,nan," + std::to_string(c.episodes) + ',' + std::to_string(c.successes) + ',' +
                 num(c.success_rate()) + '\n';
        }
        write_text(out_or(g, "noise.csv"), csv);
        std::cout << csv;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
