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

// Run configuration. On disk this is one JSON object with the sections
// "model", "train", "saliency", "selection" and "data"; unknown keys are
// rejected everywhere and missing keys take the defaults below.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "smt/model.hpp"
#include "smt/patching.hpp"
#include "smt/saliency.hpp"

namespace smt {

struct TrainConfig {
  int epochs = 40;
  double base_lr = 1e-3;
  int warmup_steps = 20;
  double weight_decay = 0.05;
  /// Global-norm clipping threshold; 0 disables clipping.
  double clip_norm = 1.0;
  int batch_size = 32;
  /// Micro-batches per optimizer step; effective batch is
  /// batch_size * grad_accum_steps.
  int grad_accum_steps = 1;
  std::uint64_t seed = 0;
  double dropout = 0.0;
  /// Std of the truncated-normal weight init.
  double init_std = 0.02;

  void validate() const;
  /// 300 epochs, lr 0.003, 20 warmup steps, weight decay 0.3, 4096
  /// accumulation steps, clipping on, dropout 0.1.
  static TrainConfig paper_scale();
};

struct SaliencyConfig {
  saliency::RogParams rog;
  saliency::CurvatureParams curvature;
  Boundary boundary = Boundary::kReflect;
};

struct SelectionConfig {
  /// Share of the patch grid to keep; ignored when m > 0.
  double fraction = 1.0;
  int m = 0;
  patching::FeedOrder order = patching::FeedOrder::kScoreDescending;
};

struct DataConfig {
  /// Folder dataset roots; empty means "generate a synthetic set".
  std::string train_dir;
  std::string eval_dir;
  int synthetic_per_class = 200;
  int synthetic_eval_per_class = 100;
  std::uint64_t synthetic_seed = 1;
  /// Where saliency maps are cached; empty keeps them in memory only.
  std::string cache_dir;
};

struct Config {
  model::ModelConfig model = model::ModelConfig::desk();
  TrainConfig train;
  SaliencyConfig saliency;
  SelectionConfig selection;
  DataConfig data;

  void validate() const;
};

nlohmann::json to_json(const Config& cfg);
nlohmann::json to_json(const SaliencyConfig& cfg);
Config config_from_json(const nlohmann::json& j);
Config load_config(const std::filesystem::path& path);

/// Applies "section.key=value". The value is parsed as JSON when possible
/// and taken as a string otherwise. Unknown keys throw ParameterError.
void apply_override(Config& cfg, const std::string& assignment);

}  // namespace smt
