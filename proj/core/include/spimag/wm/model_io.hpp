// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "spimag/env/wall_env.hpp"
#include "spimag/wm/trainer.hpp"
#include "spimag/wm/world_model.hpp"

namespace spimag::wm {

nlohmann::json to_json(const ModelConfig& cfg);
// Missing keys keep their defaults; the result is validated.
ModelConfig model_config_from_json(const nlohmann::json& j);

struct Checkpoint {
  ModelConfig config;
  diff::ParamSet params;
  MaskPolicy policy = MaskPolicy::kGrouped;
  std::optional<env::EnvConfig> env;
};

// Sidecar path used next to a tensor file: "<path>.json".
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

// Writes the tensor container at `path` and the sidecar holding the model
// config, mask policy and (optionally) the environment the model was
// trained on.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spimag::wm
