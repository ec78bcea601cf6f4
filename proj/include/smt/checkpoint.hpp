// Copyright 2026 The SMT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint container:
//
//   bytes 0..7   magic "SMTCKPT1"
//   bytes 8..15  header length N, uint64 little-endian
//   next N bytes UTF-8 JSON header
//   remainder    tensors as little-endian IEEE-754 float64, in the order of
//                header["tensors"], each flattened row-major
//
// The header carries "config" (model), "seed", "step", "tensors" (name and
// [rows, cols] per tensor) and an optional free-form "extra" object.

#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "smt/model.hpp"

namespace smt::model {

inline constexpr char kCheckpointMagic[9] = "SMTCKPT1";

struct CheckpointHeader {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  nlohmann::json extra = nlohmann::json::object();
};

struct Checkpoint {
  CheckpointHeader header;
  ModelParams params;
};

nlohmann::json to_json(const ModelConfig& cfg);
/// Rejects unknown keys; missing keys keep `base` values.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const CheckpointHeader& header);
Checkpoint load_checkpoint(const std::filesystem::path& path);
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace smt::model
