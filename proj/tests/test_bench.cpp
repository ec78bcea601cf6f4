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

#include <cmath>
#include <sstream>

#include <doctest.h>

#include "smt/bench.hpp"
#include "smt/error.hpp"

using namespace smt;
using namespace smt::bench;

namespace {

std::uint64_t sum(const std::vector<Stage>& stages) {
  std::uint64_t s = 0;
  for (const Stage& st : stages) s += st.value;
  return s;
}

}  // namespace

TEST_CASE("hand-counted MACs for a single token") {
  // D 4, one block, 2 heads, M 8, 2 classes, 2 x 2 patches of 3 channels.
  const model::ModelConfig cfg{4, 2, 4, 2, 1, 8, 2, 0.0};
  const CostReport r = flops_estimate(cfg, 1, 1);
  CHECK(r.mac("embed") == 12 * 4 + 2 * 4);
  CHECK(r.mac("attention_linear") == 2 * 4 * 4 * 4);   // s' = 2 tokens, 4 D x D maps
  CHECK(r.mac("attention_quadratic") == 2 * 2 * 2 * 4);
  CHECK(r.mac("mlp") == 2 * 2 * 4 * 8);
  CHECK(r.mac("head") == 4 * 2);
  CHECK(r.flops_total == 2 * sum(r.macs) + r.pointwise_flops);
  CHECK(r.memory_total == sum(r.memory));
  CHECK_THROWS_AS(r.mac("nothing"), ParameterError);
}

TEST_CASE("batch scales every activation stage") {
  const model::ModelConfig cfg = model::ModelConfig::desk();
  const CostReport one = flops_estimate(cfg, 20, 1), four = flops_estimate(cfg, 20, 4);
  CHECK(four.flops_total == 4 * one.flops_total);
  for (const char* st : {"embed", "tokens", "attention_probs", "mlp_hidden", "class_token"})
    CHECK(four.bytes(st) == 4 * one.bytes(st));
  // Parameters are counted once, images once per example.
  const std::uint64_t img = 32 * 32 * 3 * 4;
  CHECK(four.bytes("constant") - one.bytes("constant") == 3 * img);
}

TEST_CASE("stage formulas") {
  const model::ModelConfig base = model::ModelConfig::vit_base();
  const CostReport r = memory_estimate(base, 49, 1, "base");
  CHECK(r.bytes("attention_probs") == 12ull * 12 * 50 * 50 * 4);
  CHECK(r.bytes("tokens") == 12ull * 49 * 8 * 768 * 4);
  CHECK(r.bytes("mlp_hidden") == 12ull * 49 * 2 * 3072 * 4);
  CHECK(r.bytes("constant") == (4 * model::parameter_count(base) + 224ull * 224 * 3) * 4);
  // Token stages are exactly linear in s.
  const CostReport d = memory_estimate(base, 98, 1);
  CHECK(d.bytes("tokens") == 2 * r.bytes("tokens"));
  CHECK(d.bytes("mlp_hidden") == 2 * r.bytes("mlp_hidden"));
  CHECK(d.bytes("embed") == 2 * r.bytes("embed"));
  CHECK(d.bytes("class_token") == r.bytes("class_token"));
  CHECK(d.cfg_name == "custom");
  CHECK(r.cfg_name == "base");
}

TEST_CASE("base-scale memory and compute trends") {
  const model::ModelConfig base = model::ModelConfig::vit_base();
  std::vector<double> s, mem;
  std::uint64_t prev_mem = 0, prev_flops = 0;
  for (int k : {49, 98, 147, 196}) {
    const CostReport r = flops_estimate(base, k, 256);
    CHECK(r.memory_total > prev_mem);
    CHECK(r.flops_total > prev_flops);
    prev_mem = r.memory_total;
    prev_flops = r.flops_total;
    s.push_back(k);
    mem.push_back(static_cast<double>(r.memory_total));
  }
  CHECK(affine_fit_r2(s, mem) >= 0.99);
  const double ratio = mem.front() / mem.back();
  CHECK(ratio == doctest::Approx(0.2555).epsilon(0.01));
  // At 49 tokens the quadratic attention term is a small part of compute.
  const CostReport r = flops_estimate(base, 49, 1);
  const double quad = static_cast<double>(r.mac("attention_quadratic"));
  const double D = 768, M = 3072, S = 49, Sp = 50, L = 12;
  const double total = S * (768 * D + 2 * D) + L * (Sp * 4 * D * D + 2 * Sp * Sp * D + Sp * 2 * D * M) + D * 1000;
  CHECK(quad / sum(r.macs) == doctest::Approx(L * 2 * Sp * Sp * D / total).epsilon(1e-12));
  CHECK(quad / sum(r.macs) < 0.02);
}

TEST_CASE("cost report json") {
  const CostReport r = flops_estimate(model::ModelConfig::desk(), 16, 2, "desk");
  const nlohmann::json j = to_json(r);
  CHECK(j["config_name"] == "desk");
  CHECK(j["s"] == 16);
  CHECK(j["macs"]["mlp"] == r.mac("mlp"));
  CHECK(j["memory_total"] == r.memory_total);
  CHECK(j["conventions"]["flops_per_mac"] == 2);
  CHECK_THROWS_AS(flops_estimate(model::ModelConfig::desk(), 0, 1), ParameterError);
  CHECK_THROWS_AS(flops_estimate(model::ModelConfig::desk(), 4, 0), ParameterError);
}

TEST_CASE("summary statistics") {
  const TimingStats t = summarize({5, 1, 4, 2, 3});
  CHECK(t.median_ms == 3.0);
  CHECK(t.iqr_ms == 2.0);
  CHECK(t.samples_ms == std::vector<double>{5, 1, 4, 2, 3});
  CHECK(summarize({1, 2, 3, 4}).median_ms == 2.5);
  CHECK_THROWS_AS(summarize({}), ParameterError);
}

TEST_CASE("affine fit r2") {
  CHECK(affine_fit_r2({1, 2, 3}, {3, 5, 7}) == doctest::Approx(1.0));
  // y = x^2 on -1, 0, 1 has no linear component.
  CHECK(affine_fit_r2({-1, 0, 1}, {1, 0, 1}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(affine_fit_r2({1}, {1}), ParameterError);
  CHECK_THROWS_AS(affine_fit_r2({1, 1}, {1, 2}), ParameterError);
}

TEST_CASE("runtime harness shape") {
  const model::ModelConfig cfg = desk_bench_config();
  CHECK(cfg.num_patches() == 196);
  const RuntimeReport r = measure_runtime(cfg, 8, 2, 5, 1, 3);
  CHECK(r.forward.samples_ms.size() == 5);
  CHECK(r.forward_backward.samples_ms.size() == 5);
  CHECK(r.forward.median_ms > 0);
  CHECK(r.warmup == 1);
  CHECK(to_json(r)["forward"]["samples_ms"].size() == 5);
  CHECK_THROWS_AS(measure_runtime(cfg, 8, 2, 4), ParameterError);
  CHECK_THROWS_AS(measure_runtime(cfg, 197, 2, 5), ParameterError);
}

TEST_CASE("csv output") {
  std::ostringstream os;
  write_csv(os, {{49, 10, 20, 1.5}, {98, 30, 40, std::nan("")}});
  CHECK(os.str() == "s,flops,mem_estimate,runtime_ms\n49,10,20,1.5\n98,30,40,nan\n");
}

TEST_CASE("short sequences run faster than full ones") {
  const model::ModelConfig cfg = desk_bench_config();
  const RuntimeReport lo = measure_runtime(cfg, 49, 2, 5), hi = measure_runtime(cfg, 196, 2, 5);
  CHECK(lo.forward.median_ms < hi.forward.median_ms);
}
