// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/wm/model_io.hpp"

#include <fstream>

#include "spimag/diff/checkpoint.hpp"
#include "spimag/env/dataset.hpp"
#include "spimag/errors.hpp"

namespace spimag::wm {

nlohmann::json to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},       {"n_heads", c.n_heads},       {"embed_dim", c.embed_dim},
          {"mlp_hidden", c.mlp_hidden},   {"grid_h", c.grid_h},         {"grid_w", c.grid_w},
          {"token_dim", c.token_dim},     {"action_dim", c.action_dim}, {"action_proj_dim", c.action_proj_dim},
          {"history_len", c.history_len}, {"dropout", c.dropout}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.grid_h = j.value("grid_h", c.grid_h);
    c.grid_w = j.value("grid_w", c.grid_w);
    c.token_dim = j.value("token_dim", c.token_dim);
    c.action_dim = j.value("action_dim", c.action_dim);
    c.action_proj_dim = j.value("action_proj_dim", c.action_proj_dim);
    c.history_len = j.value("history_len", c.history_len);
    c.dropout = j.value("dropout", c.dropout);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json side;
  side["format"] = "spimag.world_model";
  side["version"] = 1;
  side["model"] = to_json(ckpt.config);
  side["mask_policy"] = std::string(to_string(ckpt.policy));
  if (ckpt.env) side["env"] = env::to_json(*ckpt.env);
  diff::save_tensors(path, ckpt.params, {{"model", side["model"]}, {"mask_policy", side["mask_policy"]}});
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  if (!out) throw IoError("cannot write '" + sidecar_path(path).string() + "'");
  out << side.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + sidecar_path(path).string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("checkpoint '" + path.string() + "' does not exist");
  const auto side_path = sidecar_path(path);
  std::ifstream in(side_path);
  if (!in) throw ConfigError("checkpoint sidecar '" + side_path.string() + "' does not exist");
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed sidecar '" + side_path.string() + "': " + e.what());
  }
  Checkpoint ck;
  ck.config = model_config_from_json(side.at("model"));
  ck.policy = parse_mask_policy(side.value("mask_policy", std::string("grouped")));
  if (side.contains("env")) ck.env = env::env_config_from_json(side["env"]);
  ck.params = diff::load_tensors(path);
  // Validates names and shapes against the config.
  ck.params = WorldModel(ck.config, std::move(ck.params)).params();
  return ck;
}

}  // namespace spimag::wm
