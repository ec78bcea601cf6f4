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

#include "smt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>

#include "smt/checkpoint.hpp"
#include "smt/error.hpp"

namespace smt::bench {
namespace {

using u64 = std::uint64_t;

u64 lookup(const std::vector<Stage>& stages, const std::string& name) {
  for (const Stage& st : stages)
    if (st.name == name) return st.value;
  throw ParameterError("no cost stage named '" + name + "'");
}

nlohmann::json stages_json(const std::vector<Stage>& stages) {
  nlohmann::json j = nlohmann::json::object();
  for (const Stage& st : stages) j[st.name] = st.value;
  return j;
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<model::PatchSequence> random_batch(const model::ModelConfig& cfg, int s, int batch,
                                               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pix(-1.0, 1.0);
  const int g = cfg.grid_side();
  std::vector<int> cells(cfg.num_patches());
  std::vector<model::PatchSequence> out;
  for (int b = 0; b < batch; ++b) {
    std::iota(cells.begin(), cells.end(), 0);
    std::shuffle(cells.begin(), cells.end(), rng);
    std::vector<patching::Patch> patches;
    for (int i = 0; i < s; ++i) {
      patching::Patch p;
      p.coord = {cells[i] / g, cells[i] % g};
      p.pixels.resize(cfg.patch_dim());
      for (double& v : p.pixels) v = pix(rng);
      patches.push_back(std::move(p));
    }
    out.push_back(model::make_sequence(patches, cfg));
  }
  return out;
}

template <class Fn>
double time_ms(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

u64 CostReport::mac(const std::string& stage) const { return lookup(macs, stage); }
u64 CostReport::bytes(const std::string& stage) const { return lookup(memory, stage); }

CostReport flops_estimate(const model::ModelConfig& cfg, int s, int batch, const std::string& cfg_name) {
  cfg.validate();
  if (s < 1 || batch < 1) throw ParameterError("cost estimate: s and batch must be >= 1");
  const u64 S = static_cast<u64>(s), Sp = S + 1, B = static_cast<u64>(batch);
  const u64 D = cfg.embed_dim, L = cfg.depth, H = cfg.num_heads, M = cfg.mlp_dim;
  const u64 P = cfg.patch_dim(), C = cfg.num_classes;

  CostReport r;
  r.cfg = cfg;
  r.cfg_name = cfg_name;
  r.s = s;
  r.batch = batch;
  r.macs = {
      {"embed", B * S * (P * D + 2 * D)},
      {"attention_linear", B * L * Sp * 4 * D * D},
      {"attention_quadratic", B * L * 2 * Sp * Sp * D},
      {"mlp", B * L * Sp * 2 * D * M},
      {"head", B * D * C},
  };
  // Per block: softmax over H s'^2 scores, two LayerNorms and two residual
  // adds over s' x D, GELU over s' x M. Plus the final LayerNorm on the class
  // token and the softmax over classes.
  r.pointwise_flops = B * (L * (kSoftmaxFlops * H * Sp * Sp + 2 * kLayerNormFlops * Sp * D +
                                2 * Sp * D + kGeluFlops * Sp * M) +
                           kLayerNormFlops * D + kSoftmaxFlops * C);
  u64 mac_sum = 0;
  for (const Stage& st : r.macs) mac_sum += st.value;
  r.flops_total = 2 * mac_sum + r.pointwise_flops;

  // Per patch token and block: block input, LN1 output, q, k, v, attention
  // context, projected output and LN2 input (8 x D), plus the MLP pre- and
  // post-activation hiddens (2 x M). The class token's share is kept apart
  // so the token stages scale exactly with s.
  const u64 E = kElementBytes;
  const u64 image_elems = static_cast<u64>(cfg.input_size) * cfg.input_size * 3;
  const u64 params = model::parameter_count(cfg);
  r.memory = {
      {"embed", B * S * (P + 2 + D) * E},
      {"tokens", B * L * S * 8 * D * E},
      {"attention_probs", B * L * H * Sp * Sp * E},
      {"mlp_hidden", B * L * S * 2 * M * E},
      {"class_token", B * (L * (8 * D + 2 * M) + 2 * D + C) * E},
      {"constant", (kParamCopies * params + B * image_elems) * E},
  };
  r.memory_total = 0;
  for (const Stage& st : r.memory) r.memory_total += st.value;
  return r;
}

CostReport memory_estimate(const model::ModelConfig& cfg, int s, int batch, const std::string& cfg_name) {
  return flops_estimate(cfg, s, batch, cfg_name);
}

nlohmann::json to_json(const CostReport& r) {
  return nlohmann::json{
      {"config_name", r.cfg_name},
      {"config", model::to_json(r.cfg)},
      {"s", r.s},
      {"batch", r.batch},
      {"macs", stages_json(r.macs)},
      {"pointwise_flops", r.pointwise_flops},
      {"flops_total", r.flops_total},
      {"memory_bytes", stages_json(r.memory)},
      {"memory_total", r.memory_total},
      {"conventions",
       {{"flops_per_mac", 2},
        {"softmax_flops_per_element", kSoftmaxFlops},
        {"layernorm_flops_per_element", kLayerNormFlops},
        {"gelu_flops_per_element", kGeluFlops},
        {"residual_flops_per_element", 1},
        {"element_bytes", kElementBytes},
        {"parameter_copies", kParamCopies}}},
  };
}

TimingStats summarize(std::vector<double> samples_ms) {
  if (samples_ms.empty()) throw ParameterError("summarize: no samples");
  TimingStats t;
  t.samples_ms = samples_ms;
  std::sort(samples_ms.begin(), samples_ms.end());
  t.median_ms = quantile(samples_ms, 0.5);
  t.iqr_ms = quantile(samples_ms, 0.75) - quantile(samples_ms, 0.25);
  return t;
}

RuntimeReport measure_runtime(const model::ModelConfig& cfg, int s, int batch, int repeats,
                              int threads, std::uint64_t seed) {
  cfg.validate();
  if (repeats < 5) throw ParameterError("measure_runtime: repeats must be >= 5");
  if (s < 1 || s > cfg.num_patches() || batch < 1) {
    throw ParameterError("measure_runtime: need 1 <= s <= " + std::to_string(cfg.num_patches()) +
                         " and batch >= 1");
  }
  std::mt19937_64 rng(seed);
  const auto inputs = random_batch(cfg, s, batch, rng);
  std::vector<int> labels(batch);
  for (int& l : labels) l = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.num_classes));
  const model::ModelParams params = model::init_params(cfg, seed);
  model::ForwardOptions opts;
  opts.threads = threads;

  RuntimeReport r;
  r.s = s;
  r.batch = batch;
  r.threads = threads;
  r.warmup = 1;
  double sink = 0.0;
  auto fwd = [&] { sink += model::forward(inputs, params, cfg, opts)(0, 0); };
  auto fwd_bwd = [&] { sink += model::loss_and_grad(inputs, labels, params, cfg, opts).loss; };
  fwd();
  fwd_bwd();
  std::vector<double> f, fb;
  for (int i = 0; i < repeats; ++i) f.push_back(time_ms(fwd));
  for (int i = 0; i < repeats; ++i) fb.push_back(time_ms(fwd_bwd));
  if (!std::isfinite(sink)) throw NumericalError("measure_runtime: non-finite model output");
  r.forward = summarize(std::move(f));
  r.forward_backward = summarize(std::move(fb));
  return r;
}

nlohmann::json to_json(const RuntimeReport& r) {
  auto stats = [](const TimingStats& t) {
    return nlohmann::json{{"median_ms", t.median_ms}, {"iqr_ms", t.iqr_ms}, {"samples_ms", t.samples_ms}};
  };
  return nlohmann::json{{"s", r.s},
                        {"batch", r.batch},
                        {"threads", r.threads},
                        {"warmup", r.warmup},
                        {"forward", stats(r.forward)},
                        {"forward_backward", stats(r.forward_backward)}};
}

double affine_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ParameterError("affine_fit_r2: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw ParameterError("affine_fit_r2: x values are all equal");
  if (syy == 0) return 1.0;
  const double slope = sxy / sxx;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (my + slope * (x[i] - mx));
    ss_res += e * e;
  }
  return 1.0 - ss_res / syy;
}

void write_csv(std::ostream& os, const std::vector<CsvRow>& rows) {
  os << "s,flops,mem_estimate,runtime_ms\n" << std::setprecision(10);
  for (const CsvRow& r : rows) {
    os << r.s << ',' << r.flops << ',' << r.mem_estimate << ',';
    if (std::isnan(r.runtime_ms)) os << "nan"; else os << r.runtime_ms;
    os << '\n';
  }
}

model::ModelConfig desk_bench_config() {
  model::ModelConfig c = model::ModelConfig::desk();
  c.input_size = 56;
  return c;
}

}  // namespace smt::bench
