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
#include <random>

#include <doctest.h>

#include "smt/error.hpp"
#include "smt/model.hpp"
#include "test_util.hpp"

using namespace smt;
using namespace smt::model;
using smt::testing::jittered_params;
using smt::testing::random_sequence;
using smt::testing::tiny_config;

namespace {

using Rows = std::vector<std::vector<double>>;

Rows to_rows(const Matrix& m) {
  Rows r(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

Rows matmul(const Rows& x, const Matrix& w, const Matrix& b) {
  Rows y(x.size(), std::vector<double>(w.cols(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double s = b(0, j);
      for (Eigen::Index k = 0; k < w.rows(); ++k) s += x[i][k] * w(k, j);
      y[i][j] = s;
    }
  return y;
}

Rows ref_ln(const Rows& x, const Matrix& scale, const Matrix& shift) {
  Rows y = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mean = 0, var = 0;
    for (double v : x[i]) mean += v / n;
    for (double v : x[i]) var += (v - mean) * (v - mean) / n;
    for (std::size_t j = 0; j < x[i].size(); ++j)
      y[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-6) * scale(0, j) + shift(0, j);
  }
  return y;
}

Rows ref_attention(const Rows& x, const BlockParams& bp, int heads) {
  const Rows q = matmul(x, bp.wq, bp.bq), k = matmul(x, bp.wk, bp.bk), v = matmul(x, bp.wv, bp.bv);
  const std::size_t n = x.size(), d = x[0].size(), dh = d / heads;
  Rows ctx(n, std::vector<double>(d, 0.0));
  for (int h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[i][h * dh + c] * k[j][h * dh + c];
        s[j] = dot / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (double& e : s) z += e = std::exp(e - mx);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < dh; ++c) ctx[i][h * dh + c] += s[j] / z * v[j][h * dh + c];
    }
  return matmul(ctx, bp.wo, bp.bo);
}

// Straight-line composition of the documented architecture.
std::vector<double> ref_logits(const PatchSequence& seq, const ModelParams& p, const ModelConfig& cfg) {
  Rows x(1, std::vector<double>(cfg.embed_dim));
  for (int j = 0; j < cfg.embed_dim; ++j) x[0][j] = p.class_token(0, j);
  const Rows emb = matmul(to_rows(seq.patches), p.patch_embed_w, p.patch_embed_b);
  const Rows pos = matmul(to_rows(seq.coords), p.pos_w, p.pos_b);
  for (std::size_t i = 0; i < emb.size(); ++i) {
    std::vector<double> t(cfg.embed_dim);
    for (int j = 0; j < cfg.embed_dim; ++j) t[j] = emb[i][j] + pos[i][j];
    x.push_back(t);
  }
  for (const BlockParams& bp : p.blocks) {
    const Rows a = ref_attention(ref_ln(x, bp.norm1_scale, bp.norm1_shift), bp, cfg.num_heads);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (int j = 0; j < cfg.embed_dim; ++j) x[i][j] += a[i][j];
    Rows h = matmul(ref_ln(x, bp.norm2_scale, bp.norm2_shift), bp.w1, bp.b1);
    for (auto& row : h)
      for (double& v : row) v = 0.5 * v * (1 + std::erf(v / std::sqrt(2.0)));
    const Rows m = matmul(h, bp.w2, bp.b2);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (int j = 0; j < cfg.embed_dim; ++j) x[i][j] += m[i][j];
  }
  const Rows cls = ref_ln(Rows{x[0]}, p.norm_scale, p.norm_shift);
  return matmul(cls, p.head_w, p.head_b)[0];
}

}  // namespace

TEST_CASE("preset shapes and parameter counts") {
  const ModelConfig base = ModelConfig::vit_base();
  CHECK(base.num_patches() == 196);
  CHECK(base.patch_dim() == 768);
  CHECK(base.head_dim() == 64);
  const ModelParams p = init_params(ModelConfig::desk(), 0);
  CHECK(p.blocks.size() == 4);
  CHECK(p.patch_embed_w.rows() == 48);
  CHECK(p.patch_embed_w.cols() == 64);
  CHECK(p.pos_w.rows() == 2);
  CHECK(p.head_w.cols() == 3);
  // Per block: 2 LN (2D each), 4 D x D + 4 D, D x M + M, M x D + D.
  const std::size_t D = 64, M = 128, P = 48, C = 3;
  const std::size_t block = 4 * D + 4 * D * D + 4 * D + D * M + M + M * D + D;
  CHECK(parameter_count(p) == P * D + D + 2 * D + D + D + 4 * block + 2 * D + D * C + C);
  CHECK(parameter_count(ModelConfig::desk()) == parameter_count(p));
}

TEST_CASE("config validation") {
  ModelConfig c = ModelConfig::desk();
  c.num_heads = 3;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = ModelConfig::desk();
  c.input_size = 30;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = ModelConfig::desk();
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("init statistics and determinism") {
  const ModelConfig cfg = ModelConfig::desk();
  const ModelParams a = init_params(cfg, 5), b = init_params(cfg, 5), c = init_params(cfg, 6);
  CHECK(a.blocks[2].w1 == b.blocks[2].w1);
  CHECK(a.blocks[2].w1 != c.blocks[2].w1);
  std::vector<double> w;
  for (const auto& blk : a.blocks)
    for (Eigen::Index i = 0; i < blk.w1.size(); ++i) w.push_back(blk.w1.data()[i]);
  double mean = 0, sq = 0, mx = 0;
  for (double v : w) {
    mean += v / w.size();
    sq += v * v / w.size();
    mx = std::max(mx, std::abs(v));
  }
  // A normal truncated at 2 std keeps about 0.88 of its standard deviation.
  CHECK(std::abs(mean) < 1e-3);
  CHECK(std::sqrt(sq) == doctest::Approx(0.02 * 0.8796).epsilon(0.03));
  CHECK(mx <= 0.04);
  CHECK(a.head_w.isZero());
  CHECK(a.blocks[0].bq.isZero());
  CHECK((a.norm_scale.array() == 1.0).all());

  // The std only scales the draws.
  const ModelParams wide = init_params(cfg, 5, 0.1);
  CHECK(wide.blocks[2].w1.isApprox(5.0 * a.blocks[2].w1, 1e-12));
  CHECK(wide.head_w.isZero());
  CHECK_THROWS_AS(init_params(cfg, 5, 0.0), ParameterError);
}

TEST_CASE("encode_input with zero weights leaves biases and class token") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = init_params(cfg, 1);
  p.patch_embed_w.setZero();
  p.pos_w.setZero();
  p.patch_embed_b.setConstant(0.5);
  p.pos_b.setConstant(0.25);
  p.class_token.setConstant(-1.0);
  std::mt19937_64 rng(1);
  const TokenSequence t = encode_input(random_sequence(cfg, 3, rng), p, cfg);
  REQUIRE(t.tokens.rows() == 4);
  CHECK((t.tokens.row(0).array() == -1.0).all());
  CHECK((t.tokens.bottomRows(3).array() == 0.75).all());
}

TEST_CASE("make_sequence normalizes grid coordinates") {
  const ModelConfig cfg = ModelConfig::desk();
  std::vector<patching::Patch> ps(2);
  ps[0].coord = {0, 7};
  ps[1].coord = {3, 0};
  for (auto& p : ps) p.pixels.assign(cfg.patch_dim(), 0.1);
  const PatchSequence s = make_sequence(ps, cfg);
  CHECK(s.coords(0, 0) == 0.0);
  CHECK(s.coords(0, 1) == 1.0);
  CHECK(s.coords(1, 0) == doctest::Approx(3.0 / 7.0));
  CHECK_THROWS_AS(make_sequence({}, cfg), ParameterError);
  ps[0].pixels.pop_back();
  CHECK_THROWS_AS(make_sequence(ps, cfg), ParameterError);
}

TEST_CASE("two-token attention by hand") {
  // One head, D = 2, identity projections: q = k = v = x.
  BlockParams bp;
  bp.wq = bp.wk = bp.wv = bp.wo = Matrix::Identity(2, 2);
  bp.bq = bp.bk = bp.bv = bp.bo = Matrix::Zero(1, 2);
  Matrix x(2, 2);
  x << 1, 0, 0, 1;
  const Matrix out = multi_head_attention(x, bp, 1);
  const double e = std::exp(1 / std::sqrt(2.0));
  const double p_self = e / (e + 1), p_other = 1 / (e + 1);
  CHECK(out(0, 0) == doctest::Approx(p_self).epsilon(1e-14));
  CHECK(out(0, 1) == doctest::Approx(p_other).epsilon(1e-14));
  CHECK(out(1, 0) == doctest::Approx(p_other).epsilon(1e-14));
  CHECK(out(1, 1) == doctest::Approx(p_self).epsilon(1e-14));
  const auto probs = attention_probabilities(x, bp, 1);
  CHECK(probs[0].rowwise().sum().isApproxToConstant(1.0, 1e-15));
}

TEST_CASE("a block with zero output projections is the identity") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = jittered_params(cfg, 2);
  BlockParams bp = p.blocks[0];
  bp.wo.setZero();
  bp.bo.setZero();
  bp.w2.setZero();
  bp.b2.setZero();
  std::mt19937_64 rng(3);
  const Matrix x = encode_input(random_sequence(cfg, 4, rng), p, cfg).tokens;
  CHECK(transformer_block(x, bp, cfg, false) == x);
}

TEST_CASE("layer norm and gelu values") {
  Matrix x(1, 4);
  x << 1, 2, 3, 4;
  const Matrix y = layer_norm(x, Matrix::Ones(1, 4), Matrix::Zero(1, 4));
  const double sd = std::sqrt(1.25 + 1e-6);
  CHECK(y(0, 0) == doctest::Approx(-1.5 / sd).epsilon(1e-14));
  CHECK(y(0, 3) == doctest::Approx(1.5 / sd).epsilon(1e-14));
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(gelu(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
}

TEST_CASE("forward matches a loop-level reference") {
  const ModelConfig cfg{16, 4, 12, 3, 2, 20, 4, 0.0};
  const ModelParams p = jittered_params(cfg, 7, 0.2);
  std::mt19937_64 rng(4);
  for (int s : {1, 5, 16}) {
    const std::vector<PatchSequence> batch{random_sequence(cfg, s, rng), random_sequence(cfg, s, rng)};
    const Matrix logits = forward(batch, p, cfg);
    for (int b = 0; b < 2; ++b) {
      const auto want = ref_logits(batch[b], p, cfg);
      for (int c = 0; c < 4; ++c) CHECK(logits(b, c) == doctest::Approx(want[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("logits do not depend on patch order") {
  const ModelConfig cfg = ModelConfig::desk();
  const ModelParams p = jittered_params(cfg, 8, 0.05);
  std::mt19937_64 rng(5);
  const PatchSequence seq = random_sequence(cfg, 20, rng);
  const Matrix base = forward({seq}, p, cfg);
  std::vector<int> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(perm.begin(), perm.end(), rng);
    PatchSequence q{Matrix(20, seq.patches.cols()), Matrix(20, 2)};
    for (int i = 0; i < 20; ++i) {
      q.patches.row(i) = seq.patches.row(perm[i]);
      q.coords.row(i) = seq.coords.row(perm[i]);
    }
    CHECK((forward({q}, p, cfg) - base).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("initial loss is log(num_classes)") {
  const ModelConfig cfg = ModelConfig::desk();
  const ModelParams p = init_params(cfg, 0);
  std::mt19937_64 rng(6);
  std::vector<PatchSequence> batch{random_sequence(cfg, 16, rng), random_sequence(cfg, 16, rng)};
  CHECK(loss(batch, {0, 2}, p, cfg) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("gradient matches central differences") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = jittered_params(cfg, 11);
  std::mt19937_64 rng(7);
  std::vector<PatchSequence> batch{random_sequence(cfg, 4, rng), random_sequence(cfg, 4, rng),
                                   random_sequence(cfg, 4, rng)};
  for (const auto& [name, err] : smt::testing::gradient_check(batch, {0, 1, 2}, p, cfg)) {
    INFO(name);
    CHECK(err < 1e-4);
  }
  // Adding a constant to every key leaves each softmax row unchanged.
  const LossAndGrad lg = loss_and_grad(batch, {0, 1, 2}, p, cfg);
  CHECK(lg.grad.blocks[0].bk.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("loss_and_grad is identical for any thread count") {
  const ModelConfig cfg = ModelConfig::desk();
  const ModelParams p = jittered_params(cfg, 12, 0.05);
  std::mt19937_64 rng(8);
  std::vector<PatchSequence> batch;
  std::vector<int> labels;
  for (int i = 0; i < 7; ++i) {
    batch.push_back(random_sequence(cfg, 12, rng));
    labels.push_back(i % 3);
  }
  const LossAndGrad one = loss_and_grad(batch, labels, p, cfg);
  for (int threads : {2, 4}) {
    ForwardOptions o;
    o.threads = threads;
    const LossAndGrad many = loss_and_grad(batch, labels, p, cfg, o);
    CHECK(many.loss == one.loss);
    CHECK(many.logits == one.logits);
    CHECK(many.grad.blocks[1].wq == one.grad.blocks[1].wq);
    CHECK(many.grad.patch_embed_w == one.grad.patch_embed_w);
    CHECK(many.grad.head_w == one.grad.head_w);
  }
  CHECK(loss(batch, labels, p, cfg) == doctest::Approx(one.loss).epsilon(1e-14));
}

TEST_CASE("dropout only acts in training mode and is reproducible") {
  ModelConfig cfg = tiny_config();
  cfg.dropout_rate = 0.5;
  const ModelParams p = jittered_params(cfg, 13);
  std::mt19937_64 rng(9);
  const std::vector<PatchSequence> batch{random_sequence(cfg, 4, rng)};
  ModelConfig off = cfg;
  off.dropout_rate = 0.0;
  CHECK(forward(batch, p, cfg) == forward(batch, p, off));
  ForwardOptions train;
  train.training = true;
  train.dropout_seed = 1;
  const Matrix a = forward(batch, p, cfg, train), b = forward(batch, p, cfg, train);
  CHECK(a == b);
  CHECK(a != forward(batch, p, off));
  train.dropout_seed = 2;
  CHECK(forward(batch, p, cfg, train) != a);
}

TEST_CASE("batch and label errors") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = init_params(cfg, 0);
  std::mt19937_64 rng(10);
  const std::vector<PatchSequence> batch{random_sequence(cfg, 2, rng)};
  CHECK_THROWS_AS(loss(batch, {3}, p, cfg), ParameterError);
  CHECK_THROWS_AS(loss(batch, {-1}, p, cfg), ParameterError);
  CHECK_THROWS_AS(loss_and_grad(batch, {0, 1}, p, cfg), ParameterError);
  CHECK_THROWS_AS(forward({batch[0], random_sequence(cfg, 3, rng)}, p, cfg), ParameterError);
  PatchSequence bad = batch[0];
  bad.patches.conservativeResize(2, 5);
  CHECK_THROWS(forward({bad}, p, cfg));
}

TEST_CASE("parameter arithmetic helpers") {
  const ModelConfig cfg = tiny_config();
  ModelParams a = jittered_params(cfg, 1);
  const ModelParams z = zeros_like(a);
  CHECK(global_norm(z) == 0.0);
  ModelParams b = a;
  axpy(b, -1.0, a);
  CHECK(global_norm(b) == 0.0);
  double sq = 0;
  for_each_tensor(a, [&](const std::string&, const Matrix& m, TensorKind) { sq += m.squaredNorm(); });
  CHECK(global_norm(a) == doctest::Approx(std::sqrt(sq)));
  a.blocks[0].b1(0, 0) = std::nan("");
  CHECK_THROWS(require_finite(a));
}
