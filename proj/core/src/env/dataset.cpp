// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/env/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "spimag/binary_io.hpp"
#include "spimag/env/tokenizer.hpp"
#include "spimag/errors.hpp"

namespace spimag::env {

namespace {

constexpr std::string_view kMagic = "SPIMAGD1";

std::uint64_t episode_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[1]) << 32) | words[0];
}

}  // namespace

std::size_t Dataset::total_transitions() const noexcept {
  std::size_t n = 0;
  for (const Episode& e : episodes) n += e.length();
  return n;
}

Episode generate_episode(const EnvConfig& cfg, std::size_t ep_len, std::uint64_t seed, std::size_t index) {
  cfg.validate();
  const Tokenizer tok(cfg);
  Episode ep;
  ep.seed = episode_seed(seed, index);
  std::mt19937_64 rng(ep.seed);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  std::uniform_real_distribution<double> act(-cfg.action_max, cfg.action_max);

  EnvState s = make_state(cfg, {pos(rng), pos(rng)});
  ep.states.push_back(s);
  ep.frames.push_back(render(cfg, s));
  ep.tokens.push_back(tok.tokenize(ep.frames.back()));
  for (std::size_t t = 0; t < ep_len; ++t) {
    const Vec2 a{act(rng), act(rng)};
    s = step(cfg, s, a);
    ep.actions.push_back(a);
    ep.states.push_back(s);
    ep.frames.push_back(render(cfg, s));
    ep.tokens.push_back(tok.tokenize(ep.frames.back()));
  }
  return ep;
}

Dataset generate_dataset(const EnvConfig& cfg, std::size_t n_episodes, std::size_t ep_len, std::uint64_t seed) {
  Dataset ds;
  ds.env = cfg;
  ds.seed = seed;
  ds.episodes.reserve(n_episodes);
  for (std::size_t e = 0; e < n_episodes; ++e) ds.episodes.push_back(generate_episode(cfg, ep_len, seed, e));
  return ds;
}

nlohmann::json to_json(const EnvConfig& c) {
  return {{"grid", c.grid},
          {"patch", c.patch},
          {"token_dim", c.token_dim},
          {"tokenizer_seed", c.tokenizer_seed},
          {"wall_x", c.wall.x},
          {"gap_lo", c.wall.gap_lo},
          {"gap_hi", c.wall.gap_hi},
          {"agent_radius", c.agent_radius},
          {"action_max", c.action_max},
          {"contact_eps", c.contact_eps},
          {"success_radius", c.success_radius},
          {"goal_min_distance", c.goal_min_distance},
          {"goal_max_distance", c.goal_max_distance},
          {"door", "global"}};
}

EnvConfig env_config_from_json(const nlohmann::json& j) {
  EnvConfig c;
  c.grid = j.value("grid", c.grid);
  c.patch = j.value("patch", c.patch);
  c.token_dim = j.value("token_dim", c.token_dim);
  c.tokenizer_seed = j.value("tokenizer_seed", c.tokenizer_seed);
  c.wall.x = j.value("wall_x", c.wall.x);
  c.wall.gap_lo = j.value("gap_lo", c.wall.gap_lo);
  c.wall.gap_hi = j.value("gap_hi", c.wall.gap_hi);
  c.agent_radius = j.value("agent_radius", c.agent_radius);
  c.action_max = j.value("action_max", c.action_max);
  c.contact_eps = j.value("contact_eps", c.contact_eps);
  c.success_radius = j.value("success_radius", c.success_radius);
  c.goal_min_distance = j.value("goal_min_distance", c.goal_min_distance);
  c.goal_max_distance = j.value("goal_max_distance", c.goal_max_distance);
  c.validate();
  return c;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  const std::size_t g = ds.env.grid;
  const std::size_t n = ds.env.n_tokens();
  const std::size_t d = ds.env.token_dim;
  nlohmann::json manifest;
  manifest["format"] = "spimag.dataset";
  manifest["version"] = 1;
  manifest["env"] = to_json(ds.env);
  manifest["tokenizer_seed"] = ds.env.tokenizer_seed;
  manifest["seed"] = ds.seed;
  auto& eps = manifest["episodes"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
    const Episode& e = ds.episodes[i];
    const std::uint64_t frames = e.frames.size();
    const std::uint64_t nbytes = sizeof(double) * (frames * g * g + frames * n * d + e.actions.size() * 2 + frames * 2);
    eps.push_back({{"index", i}, {"seed", e.seed}, {"length", e.length()}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  io::write_preamble(out, kMagic, manifest.dump());
  std::vector<double> buf;
  for (const Episode& e : ds.episodes) {
    for (const Frame& f : e.frames) io::write_f64s(out, f.pixels);
    for (const diff::Tensor& t : e.tokens) io::write_f64s(out, t.values());
    buf.clear();
    for (const Vec2& a : e.actions) buf.insert(buf.end(), {a.x, a.y});
    io::write_f64s(out, buf);
    buf.clear();
    for (const EnvState& s : e.states) buf.insert(buf.end(), {s.agent.x, s.agent.y});
    io::write_f64s(out, buf);
  }
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_preamble(in, kMagic));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset manifest in '" + path.string() + "': " + e.what());
  }
  Dataset ds;
  ds.env = env_config_from_json(manifest.at("env"));
  ds.seed = manifest.value("seed", std::uint64_t{0});
  const std::size_t g = ds.env.grid;
  const std::size_t n = ds.env.n_tokens();
  const std::size_t d = ds.env.token_dim;
  std::vector<double> buf;
  for (const auto& meta : manifest.at("episodes")) {
    Episode e;
    e.seed = meta.at("seed").get<std::uint64_t>();
    const std::size_t len = meta.at("length").get<std::size_t>();
    e.frames.resize(len + 1);
    for (Frame& f : e.frames) {
      f.side = g;
      f.pixels.resize(g * g);
      io::read_f64s(in, f.pixels);
    }
    e.tokens.resize(len + 1);
    for (diff::Tensor& t : e.tokens) {
      t = diff::Tensor({n, d});
      io::read_f64s(in, t.values());
    }
    buf.resize(len * 2);
    io::read_f64s(in, buf);
    for (std::size_t i = 0; i < len; ++i) e.actions.push_back({buf[2 * i], buf[2 * i + 1]});
    buf.resize((len + 1) * 2);
    io::read_f64s(in, buf);
    for (std::size_t i = 0; i <= len; ++i) e.states.push_back(make_state(ds.env, {buf[2 * i], buf[2 * i + 1]}));
    ds.episodes.push_back(std::move(e));
  }
  return ds;
}

std::pair<std::vector<const Episode*>, std::vector<const Episode*>> split_episodes(const Dataset& ds,
                                                                                  double validation_fraction) {
  const std::size_t total = ds.episodes.size();
  if (total < 2) throw DegenerateInputError("need at least two episodes to split");
  auto n_val = static_cast<std::size_t>(static_cast<double>(total) * validation_fraction);
  n_val = std::clamp<std::size_t>(n_val, 1, total - 1);
  std::pair<std::vector<const Episode*>, std::vector<const Episode*>> out;
  for (std::size_t i = 0; i < total; ++i) (i < total - n_val ? out.first : out.second).push_back(&ds.episodes[i]);
  return out;
}

}  // namespace spimag::env
