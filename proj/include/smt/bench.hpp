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

// Analytic cost model of the patch transformer as a function of the number
// of patch tokens s, and a wall-clock harness for the same workload.
//
// Compute is counted in multiply-accumulates (MACs); FLOPs = 2 * MACs for
// the matrix stages. Elementwise work (softmax, LayerNorm, GELU, residual
// adds) is counted directly in FLOPs with the per-element constants below.
//
// Memory covers activations kept for the backward pass plus one constant
// term for parameters, gradients, Adam moments and the input image batch.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "smt/model.hpp"

namespace smt::bench {

inline constexpr int kSoftmaxFlops = 5;    // max, subtract, exp, sum, divide
inline constexpr int kLayerNormFlops = 8;  // mean, var (2), normalize (3), affine (2)
inline constexpr int kGeluFlops = 8;
inline constexpr int kElementBytes = 4;    // float32 training
inline constexpr int kParamCopies = 4;     // weights, grads, two Adam moments

struct Stage {
  std::string name;
  std::uint64_t value = 0;
};

struct CostReport {
  model::ModelConfig cfg;
  std::string cfg_name;
  int s = 0;
  int batch = 1;

  // Matrix stages in MACs: embed, attention_linear, attention_quadratic,
  // mlp, head. "pointwise" is already in FLOPs.
  std::vector<Stage> macs;
  std::uint64_t pointwise_flops = 0;
  std::uint64_t flops_total = 0;  // 2 * sum(macs) + pointwise_flops

  // Activation stages: embed, tokens, attention_probs, mlp_hidden,
  // class_token, constant.
  std::vector<Stage> memory;
  std::uint64_t memory_total = 0;

  std::uint64_t mac(const std::string& stage) const;
  std::uint64_t bytes(const std::string& stage) const;
};

/// Both estimates live in one report; the two entry points differ only in
/// name. Throws ParameterError for s < 1 or batch < 1.
CostReport flops_estimate(const model::ModelConfig& cfg, int s, int batch,
                          const std::string& cfg_name = "custom");
CostReport memory_estimate(const model::ModelConfig& cfg, int s, int batch,
                           const std::string& cfg_name = "custom");

nlohmann::json to_json(const CostReport& r);

struct TimingStats {
  std::vector<double> samples_ms;
  double median_ms = 0.0;
  double iqr_ms = 0.0;
};

struct RuntimeReport {
  int s = 0;
  int batch = 0;
  int threads = 1;
  int warmup = 1;
  TimingStats forward;
  TimingStats forward_backward;
};

/// Times forward and forward+backward on a random batch drawn from `seed`.
/// Requires repeats >= 5 and s <= cfg.num_patches().
RuntimeReport measure_runtime(const model::ModelConfig& cfg, int s, int batch, int repeats,
                              int threads = 1, std::uint64_t seed = 0);

nlohmann::json to_json(const RuntimeReport& r);

/// Median and interquartile range (linear interpolation between order
/// statistics).
TimingStats summarize(std::vector<double> samples_ms);

/// Coefficient of determination of the least-squares line through (x, y).
double affine_fit_r2(const std::vector<double>& x, const std::vector<double>& y);

struct CsvRow {
  int s = 0;
  std::uint64_t flops = 0;
  std::uint64_t mem_estimate = 0;
  double runtime_ms = 0.0;  // NaN when not measured
};

/// "s,flops,mem_estimate,runtime_ms".
void write_csv(std::ostream& os, const std::vector<CsvRow>& rows);

/// Desk-scale dimensions on a 56 px input, giving a 14 x 14 grid so s can
/// run up to 196.
model::ModelConfig desk_bench_config();

}  // namespace smt::bench
