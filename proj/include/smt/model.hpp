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

// Transformer encoder that classifies an image from a subset of its patches.
//
// Each selected patch is embedded linearly and receives a positional term
// from a second linear layer applied to its normalized grid coordinate, so
// the model never depends on the order in which patches arrive. A learned
// class token is prepended; pre-norm blocks follow; the head reads the class
// token after a final LayerNorm.
//
// Linear weights are stored (in x out) and applied as y = x W + b. All
// arithmetic is in double precision; gradients are hand-derived reverse-mode.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "smt/patching.hpp"

namespace smt::model {

using Matrix = Eigen::MatrixXd;

struct ModelConfig {
  int input_size = 32;
  int patch_size = 4;
  int embed_dim = 64;
  int num_heads = 4;
  int depth = 4;
  int mlp_dim = 128;
  int num_classes = 3;
  double dropout_rate = 0.0;

  void validate() const;
  int grid_side() const { return input_size / patch_size; }
  int num_patches() const { return grid_side() * grid_side(); }
  int patch_dim() const { return patch_size * patch_size * 3; }
  int head_dim() const { return embed_dim / num_heads; }

  /// 224 px input, 16 px patches, D 768, 12 heads, depth 12, MLP 3072.
  static ModelConfig vit_base(int num_classes = 1000);
  /// 32 px input, 4 px patches, D 64, 4 heads, depth 4, MLP 128.
  static ModelConfig desk(int num_classes = 3);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct BlockParams {
  Matrix norm1_scale, norm1_shift;
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix norm2_scale, norm2_shift;
  Matrix w1, b1, w2, b2;
};

struct ModelParams {
  Matrix patch_embed_w, patch_embed_b;  // patch_dim x D, 1 x D
  Matrix pos_w, pos_b;                  // 2 x D, 1 x D
  Matrix class_token;                   // 1 x D
  std::vector<BlockParams> blocks;
  Matrix norm_scale, norm_shift;        // 1 x D
  Matrix head_w, head_b;                // D x classes, 1 x classes
};

enum class TensorKind {
  kWeight,
  kBias,
  kNorm,
};

/// Visits every tensor in a fixed order (the checkpoint order).
void for_each_tensor(ModelParams& p,
                     const std::function<void(const std::string&, Matrix&, TensorKind)>& f);
void for_each_tensor(const ModelParams& p,
                     const std::function<void(const std::string&, const Matrix&, TensorKind)>& f);

/// Same shapes, all zeros.
ModelParams zeros_like(const ModelParams& p);
std::size_t parameter_count(const ModelParams& p);
std::size_t parameter_count(const ModelConfig& cfg);
void require_finite(const ModelParams& p);
/// a += scale * b, tensor by tensor.
void axpy(ModelParams& a, double scale, const ModelParams& b);
double global_norm(const ModelParams& p);

/// Truncated-normal (std 0.02 by default, cut at +-2 std) weights, zero
/// biases and norm shifts, unit norm scales. The classifier head starts at
/// zero so initial predictions are uniform.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, double init_std = 0.02);

/// Patches of one image as model input.
struct PatchSequence {
  Matrix patches;  // s x patch_dim
  Matrix coords;   // s x 2, (row, col) normalized to [0,1]
};

PatchSequence make_sequence(const std::vector<patching::Patch>& patches, const ModelConfig& cfg);

struct TokenSequence {
  Matrix tokens;  // (s+1) x D, class token first
};

TokenSequence encode_input(const PatchSequence& seq, const ModelParams& params,
                           const ModelConfig& cfg);

/// Attention probabilities of one head, for inspection.
std::vector<Matrix> attention_probabilities(const Matrix& x, const BlockParams& bp, int num_heads);

/// Scaled dot-product attention over `x` (no normalization inside).
Matrix multi_head_attention(const Matrix& x, const BlockParams& bp, int num_heads);

/// Deterministic source of dropout masks.
struct DropoutSource {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// x + MHA(LN(x)), then + MLP(LN(.)). Dropout follows the attention and MLP
/// outputs only when `training` is set and the rate is positive.
Matrix transformer_block(const Matrix& x, const BlockParams& bp, const ModelConfig& cfg,
                         bool training, const DropoutSource& dropout = {});

Matrix layer_norm(const Matrix& x, const Matrix& scale, const Matrix& shift);
double gelu(double x);

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  int threads = 1;
};

/// Logits, batch x num_classes.
Matrix forward(const std::vector<PatchSequence>& batch, const ModelParams& params,
               const ModelConfig& cfg, const ForwardOptions& opts = {});

struct LossAndGrad {
  double loss = 0.0;
  ModelParams grad;
  Matrix logits;
};

/// Mean softmax cross-entropy and its exact gradient. Per-example gradients
/// are reduced in example order, so the result does not depend on `threads`.
LossAndGrad loss_and_grad(const std::vector<PatchSequence>& batch, const std::vector<int>& labels,
                          const ModelParams& params, const ModelConfig& cfg,
                          const ForwardOptions& opts = {});

/// Mean cross-entropy only.
double loss(const std::vector<PatchSequence>& batch, const std::vector<int>& labels,
            const ModelParams& params, const ModelConfig& cfg, const ForwardOptions& opts = {});

}  // namespace smt::model
