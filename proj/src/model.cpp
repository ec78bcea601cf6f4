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

#include "smt/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "smt/error.hpp"

namespace smt::model {
namespace {

constexpr double kLnEps = 1e-6;

using Vector = Eigen::VectorXd;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 make_rng(const DropoutSource& src, std::uint64_t site) {
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(src.seed) ^ src.stream) ^ site));
}

Matrix dropout_mask(int rows, int cols, double rate, std::mt19937_64& rng) {
  Matrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask.data()[i] = u < rate ? 0.0 : keep;
  }
  return mask;
}

void add_bias(Matrix& y, const Matrix& b) { y.rowwise() += b.row(0); }

// --- LayerNorm ---------------------------------------------------------------

struct LnCache {
  Matrix xhat;
  Vector rstd;
};

Matrix ln_forward(const Matrix& x, const Matrix& scale, const Matrix& shift, LnCache* cache) {
  const Vector mean = x.rowwise().mean();
  Matrix xc = x.colwise() - mean;
  const Vector var = xc.array().square().rowwise().mean();
  const Vector rstd = (var.array() + kLnEps).rsqrt();
  Matrix xhat = xc.array().colwise() * rstd.array();
  Matrix y = xhat.array().rowwise() * scale.row(0).array();
  add_bias(y, shift);
  if (cache != nullptr) *cache = LnCache{std::move(xhat), rstd};
  return y;
}

Matrix ln_backward(const Matrix& dy, const LnCache& c, const Matrix& scale, Matrix& dscale,
                   Matrix& dshift) {
  dscale += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dshift += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * scale.row(0).array();
  const Vector m1 = dxhat.rowwise().mean();
  const Vector m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
  Matrix dx = (dxhat.colwise() - m1).array() - c.xhat.array().colwise() * m2.array();
  return dx.array().colwise() * c.rstd.array();
}

// --- Attention ---------------------------------------------------------------

struct AttnCache {
  Matrix x, q, k, v, ctx;
  std::vector<Matrix> probs;
};

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

Matrix attn_forward(const Matrix& x, const BlockParams& bp, int heads, AttnCache* cache,
                    std::vector<Matrix>* probs_out) {
  const int d = static_cast<int>(x.cols());
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix q = x * bp.wq;
  add_bias(q, bp.bq);
  Matrix k = x * bp.wk;
  add_bias(k, bp.bk);
  Matrix v = x * bp.wv;
  add_bias(v, bp.bv);
  Matrix ctx(x.rows(), d);
  std::vector<Matrix> probs;
  probs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Matrix p = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * scale;
    softmax_rows(p);
    ctx.middleCols(h * dh, dh) = p * v.middleCols(h * dh, dh);
    probs.push_back(std::move(p));
  }
  Matrix out = ctx * bp.wo;
  add_bias(out, bp.bo);
  if (probs_out != nullptr) *probs_out = probs;
  if (cache != nullptr) {
    *cache = AttnCache{x, std::move(q), std::move(k), std::move(v), std::move(ctx), std::move(probs)};
  }
  return out;
}

Matrix attn_backward(const Matrix& dout, const AttnCache& c, const BlockParams& bp,
                     BlockParams& g, int heads) {
  const int d = static_cast<int>(c.x.cols());
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  g.wo += c.ctx.transpose() * dout;
  g.bo += dout.colwise().sum();
  const Matrix dctx = dout * bp.wo.transpose();
  Matrix dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Matrix& p = c.probs[h];
    const auto dctx_h = dctx.middleCols(h * dh, dh);
    const Matrix dp = dctx_h * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = p.transpose() * dctx_h;
    const Vector row_dot = (dp.array() * p.array()).rowwise().sum();
    const Matrix ds = p.array() * (dp.colwise() - row_dot).array();
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh) * scale;
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh) * scale;
  }
  g.wq += c.x.transpose() * dq;
  g.bq += dq.colwise().sum();
  g.wk += c.x.transpose() * dk;
  g.bk += dk.colwise().sum();
  g.wv += c.x.transpose() * dv;
  g.bv += dv.colwise().sum();
  return dq * bp.wq.transpose() + dk * bp.wk.transpose() + dv * bp.wv.transpose();
}

// --- Block -------------------------------------------------------------------

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

struct BlockCache {
  LnCache ln1;
  AttnCache attn;
  Matrix drop1;  // empty when dropout is off
  LnCache ln2;
  Matrix ln2_out, hpre, hact;
  Matrix drop2;
};

Matrix block_forward(const Matrix& x, const BlockParams& bp, const ModelConfig& cfg, bool training,
                     const DropoutSource& dropout, BlockCache* cache) {
  const bool drop = training && cfg.dropout_rate > 0.0;
  LnCache ln1;
  const Matrix n1 = ln_forward(x, bp.norm1_scale, bp.norm1_shift, cache ? &ln1 : nullptr);
  AttnCache attn;
  Matrix a = attn_forward(n1, bp, cfg.num_heads, cache ? &attn : nullptr, nullptr);
  Matrix drop1, drop2;
  std::mt19937_64 rng;
  if (drop) {
    rng = make_rng(dropout, 0);
    drop1 = dropout_mask(static_cast<int>(a.rows()), static_cast<int>(a.cols()), cfg.dropout_rate, rng);
    a.array() *= drop1.array();
  }
  const Matrix x1 = x + a;
  LnCache ln2;
  Matrix n2 = ln_forward(x1, bp.norm2_scale, bp.norm2_shift, cache ? &ln2 : nullptr);
  Matrix hpre = n2 * bp.w1;
  add_bias(hpre, bp.b1);
  Matrix hact = hpre.unaryExpr([](double v) { return gelu(v); });
  Matrix m = hact * bp.w2;
  add_bias(m, bp.b2);
  if (drop) {
    drop2 = dropout_mask(static_cast<int>(m.rows()), static_cast<int>(m.cols()), cfg.dropout_rate, rng);
    m.array() *= drop2.array();
  }
  if (cache != nullptr) {
    *cache = BlockCache{std::move(ln1), std::move(attn), std::move(drop1), std::move(ln2),
                        std::move(n2), std::move(hpre), std::move(hact), std::move(drop2)};
  }
  return x1 + m;
}

Matrix block_backward(const Matrix& dout, const BlockCache& c, const BlockParams& bp,
                      BlockParams& g, int heads) {
  Matrix dm = dout;
  if (c.drop2.size() > 0) dm.array() *= c.drop2.array();
  g.w2 += c.hact.transpose() * dm;
  g.b2 += dm.colwise().sum();
  Matrix dh = dm * bp.w2.transpose();
  dh.array() *= c.hpre.unaryExpr([](double v) { return gelu_grad(v); }).array();
  g.w1 += c.ln2_out.transpose() * dh;
  g.b1 += dh.colwise().sum();
  const Matrix dn2 = dh * bp.w1.transpose();
  Matrix dx1 = dout + ln_backward(dn2, c.ln2, bp.norm2_scale, g.norm2_scale, g.norm2_shift);

  Matrix da = dx1;
  if (c.drop1.size() > 0) da.array() *= c.drop1.array();
  const Matrix dn1 = attn_backward(da, c.attn, bp, g, heads);
  return dx1 + ln_backward(dn1, c.ln1, bp.norm1_scale, g.norm1_scale, g.norm1_shift);
}

// --- Whole model -------------------------------------------------------------

struct ExampleCache {
  const PatchSequence* input = nullptr;
  std::vector<BlockCache> blocks;
  LnCache final_ln;
  Matrix cls_norm;  // 1 x D
};

Matrix example_forward(const PatchSequence& seq, const ModelParams& params, const ModelConfig& cfg,
                       bool training, const DropoutSource& dropout, ExampleCache* cache) {
  Matrix x = encode_input(seq, params, cfg).tokens;
  if (cache != nullptr) {
    cache->input = &seq;
    cache->blocks.resize(params.blocks.size());
  }
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    DropoutSource src{dropout.seed, splitmix64(dropout.stream) ^ (l + 1)};
    x = block_forward(x, params.blocks[l], cfg, training, src, cache ? &cache->blocks[l] : nullptr);
  }
  LnCache fln;
  Matrix cls = ln_forward(x.topRows(1), params.norm_scale, params.norm_shift, cache ? &fln : nullptr);
  Matrix logits = cls * params.head_w;
  add_bias(logits, params.head_b);
  if (cache != nullptr) {
    cache->final_ln = std::move(fln);
    cache->cls_norm = std::move(cls);
  }
  return logits;
}

void example_backward(const Matrix& dlogits, const ExampleCache& c, const ModelParams& params,
                      const ModelConfig& cfg, ModelParams& g) {
  g.head_w += c.cls_norm.transpose() * dlogits;
  g.head_b += dlogits;
  const Matrix dcls = dlogits * params.head_w.transpose();
  const Matrix dcls_in = ln_backward(dcls, c.final_ln, params.norm_scale, g.norm_scale, g.norm_shift);
  const Eigen::Index rows = c.input->patches.rows() + 1;
  Matrix dx = Matrix::Zero(rows, cfg.embed_dim);
  dx.topRows(1) = dcls_in;
  for (std::size_t l = params.blocks.size(); l-- > 0;) {
    dx = block_backward(dx, c.blocks[l], params.blocks[l], g.blocks[l], cfg.num_heads);
  }
  g.class_token += dx.topRows(1);
  const auto dpatch = dx.bottomRows(rows - 1);
  g.patch_embed_w += c.input->patches.transpose() * dpatch;
  g.patch_embed_b += dpatch.colwise().sum();
  g.pos_w += c.input->coords.transpose() * dpatch;
  g.pos_b += dpatch.colwise().sum();
}

void check_batch(const std::vector<PatchSequence>& batch, const ModelConfig& cfg) {
  if (batch.empty()) throw ParameterError("forward: empty batch");
  const auto s = batch.front().patches.rows();
  for (const auto& seq : batch) {
    if (seq.patches.rows() != s) throw ParameterError("forward: mixed sequence lengths in batch");
    if (seq.patches.cols() != cfg.patch_dim() || seq.coords.rows() != s || seq.coords.cols() != 2) {
      throw ParameterError("forward: patch sequence shape does not match the model");
    }
  }
}

template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(n, 1));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <class P, class F>
void visit(P& p, F&& f) {
  f("patch_embed.weight", p.patch_embed_w, TensorKind::kWeight);
  f("patch_embed.bias", p.patch_embed_b, TensorKind::kBias);
  f("pos_encode.weight", p.pos_w, TensorKind::kWeight);
  f("pos_encode.bias", p.pos_b, TensorKind::kBias);
  f("class_token", p.class_token, TensorKind::kWeight);
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    auto& b = p.blocks[l];
    const std::string pre = "blocks." + std::to_string(l) + ".";
    f(pre + "norm1.scale", b.norm1_scale, TensorKind::kNorm);
    f(pre + "norm1.shift", b.norm1_shift, TensorKind::kNorm);
    f(pre + "attn.q.weight", b.wq, TensorKind::kWeight);
    f(pre + "attn.q.bias", b.bq, TensorKind::kBias);
    f(pre + "attn.k.weight", b.wk, TensorKind::kWeight);
    f(pre + "attn.k.bias", b.bk, TensorKind::kBias);
    f(pre + "attn.v.weight", b.wv, TensorKind::kWeight);
    f(pre + "attn.v.bias", b.bv, TensorKind::kBias);
    f(pre + "attn.out.weight", b.wo, TensorKind::kWeight);
    f(pre + "attn.out.bias", b.bo, TensorKind::kBias);
    f(pre + "norm2.scale", b.norm2_scale, TensorKind::kNorm);
    f(pre + "norm2.shift", b.norm2_shift, TensorKind::kNorm);
    f(pre + "mlp.fc1.weight", b.w1, TensorKind::kWeight);
    f(pre + "mlp.fc1.bias", b.b1, TensorKind::kBias);
    f(pre + "mlp.fc2.weight", b.w2, TensorKind::kWeight);
    f(pre + "mlp.fc2.bias", b.b2, TensorKind::kBias);
  }
  f("norm.scale", p.norm_scale, TensorKind::kNorm);
  f("norm.shift", p.norm_shift, TensorKind::kNorm);
  f("head.weight", p.head_w, TensorKind::kWeight);
  f("head.bias", p.head_b, TensorKind::kBias);
}

ModelParams shaped(const ModelConfig& cfg) {
  const int d = cfg.embed_dim;
  ModelParams p;
  p.patch_embed_w = Matrix::Zero(cfg.patch_dim(), d);
  p.patch_embed_b = Matrix::Zero(1, d);
  p.pos_w = Matrix::Zero(2, d);
  p.pos_b = Matrix::Zero(1, d);
  p.class_token = Matrix::Zero(1, d);
  p.blocks.resize(cfg.depth);
  for (auto& b : p.blocks) {
    b.norm1_scale = Matrix::Ones(1, d);
    b.norm1_shift = Matrix::Zero(1, d);
    for (Matrix* w : {&b.wq, &b.wk, &b.wv, &b.wo}) *w = Matrix::Zero(d, d);
    for (Matrix* bias : {&b.bq, &b.bk, &b.bv, &b.bo}) *bias = Matrix::Zero(1, d);
    b.norm2_scale = Matrix::Ones(1, d);
    b.norm2_shift = Matrix::Zero(1, d);
    b.w1 = Matrix::Zero(d, cfg.mlp_dim);
    b.b1 = Matrix::Zero(1, cfg.mlp_dim);
    b.w2 = Matrix::Zero(cfg.mlp_dim, d);
    b.b2 = Matrix::Zero(1, d);
  }
  p.norm_scale = Matrix::Ones(1, d);
  p.norm_shift = Matrix::Zero(1, d);
  p.head_w = Matrix::Zero(d, cfg.num_classes);
  p.head_b = Matrix::Zero(1, cfg.num_classes);
  return p;
}

}  // namespace

void ModelConfig::validate() const {
  if (input_size <= 0 || patch_size <= 0 || embed_dim <= 0 || num_heads <= 0 || depth <= 0 ||
      mlp_dim <= 0 || num_classes <= 0) {
    throw ParameterError("model config: all sizes must be positive");
  }
  if (embed_dim % num_heads != 0) throw ParameterError("model config: embed_dim % num_heads != 0");
  if (input_size % patch_size != 0) {
    throw ParameterError("model config: input_size must be divisible by patch_size");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ParameterError("model config: dropout_rate must be in [0, 1)");
  }
}

ModelConfig ModelConfig::vit_base(int num_classes) {
  return ModelConfig{224, 16, 768, 12, 12, 3072, num_classes, 0.0};
}

ModelConfig ModelConfig::desk(int num_classes) {
  return ModelConfig{32, 4, 64, 4, 4, 128, num_classes, 0.0};
}

void for_each_tensor(ModelParams& p,
                     const std::function<void(const std::string&, Matrix&, TensorKind)>& f) {
  visit(p, f);
}

void for_each_tensor(const ModelParams& p,
                     const std::function<void(const std::string&, const Matrix&, TensorKind)>& f) {
  visit(p, f);
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for_each_tensor(z, [](const std::string&, Matrix& m, TensorKind) { m.setZero(); });
  return z;
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const Matrix& m, TensorKind) { n += m.size(); });
  return n;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  const std::size_t d = cfg.embed_dim;
  const std::size_t per_block = 4 * d + 4 * (d * d + d) + 2 * d * cfg.mlp_dim + cfg.mlp_dim + d;
  return cfg.patch_dim() * d + d + 2 * d + d + d + cfg.depth * per_block + 2 * d +
         d * cfg.num_classes + cfg.num_classes;
}

void require_finite(const ModelParams& p) {
  for_each_tensor(p, [](const std::string& name, const Matrix& m, TensorKind) {
    if (!m.allFinite()) throw NumericalError("parameter tensor '" + name + "' is not finite");
  });
}

void axpy(ModelParams& a, double scale, const ModelParams& b) {
  std::vector<const Matrix*> src;
  for_each_tensor(b, [&](const std::string&, const Matrix& m, TensorKind) { src.push_back(&m); });
  std::size_t i = 0;
  for_each_tensor(a, [&](const std::string&, Matrix& m, TensorKind) { m += scale * *src[i++]; });
}

double global_norm(const ModelParams& p) {
  double sq = 0.0;
  for_each_tensor(p, [&](const std::string&, const Matrix& m, TensorKind) { sq += m.squaredNorm(); });
  return std::sqrt(sq);
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, double init_std) {
  cfg.validate();
  if (!(init_std > 0) || !std::isfinite(init_std)) throw ParameterError("init_params: init_std must be positive");
  ModelParams p = shaped(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto trunc_normal = [&] {
    for (;;) {
      const double z = normal(rng);
      if (std::abs(z) <= 2.0) return init_std * z;
    }
  };
  for_each_tensor(p, [&](const std::string& name, Matrix& m, TensorKind kind) {
    if (kind != TensorKind::kWeight || name == "head.weight") return;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = trunc_normal();
  });
  return p;
}

PatchSequence make_sequence(const std::vector<patching::Patch>& patches, const ModelConfig& cfg) {
  const int s = static_cast<int>(patches.size());
  if (s < 1) throw ParameterError("make_sequence: need at least one patch");
  const int side = cfg.grid_side();
  const double denom = side > 1 ? side - 1.0 : 1.0;
  PatchSequence seq{Matrix(s, cfg.patch_dim()), Matrix(s, 2)};
  for (int i = 0; i < s; ++i) {
    if (static_cast<int>(patches[i].pixels.size()) != cfg.patch_dim()) {
      throw ParameterError("make_sequence: patch length does not match patch_size^2 * 3");
    }
    for (int j = 0; j < cfg.patch_dim(); ++j) seq.patches(i, j) = patches[i].pixels[j];
    seq.coords(i, 0) = patches[i].coord.row / denom;
    seq.coords(i, 1) = patches[i].coord.col / denom;
  }
  return seq;
}

TokenSequence encode_input(const PatchSequence& seq, const ModelParams& params,
                           const ModelConfig& cfg) {
  if (seq.patches.cols() != cfg.patch_dim() || seq.coords.cols() != 2 ||
      seq.coords.rows() != seq.patches.rows() || seq.patches.rows() < 1) {
    throw ParameterError("encode_input: patch sequence shape does not match the model");
  }
  const auto s = seq.patches.rows();
  TokenSequence out{Matrix(s + 1, cfg.embed_dim)};
  out.tokens.topRows(1) = params.class_token;
  Matrix body = seq.patches * params.patch_embed_w + seq.coords * params.pos_w;
  body.rowwise() += params.patch_embed_b.row(0) + params.pos_b.row(0);
  out.tokens.bottomRows(s) = body;
  return out;
}

std::vector<Matrix> attention_probabilities(const Matrix& x, const BlockParams& bp, int num_heads) {
  std::vector<Matrix> probs;
  attn_forward(x, bp, num_heads, nullptr, &probs);
  return probs;
}

Matrix multi_head_attention(const Matrix& x, const BlockParams& bp, int num_heads) {
  return attn_forward(x, bp, num_heads, nullptr, nullptr);
}

Matrix transformer_block(const Matrix& x, const BlockParams& bp, const ModelConfig& cfg,
                         bool training, const DropoutSource& dropout) {
  return block_forward(x, bp, cfg, training, dropout, nullptr);
}

Matrix layer_norm(const Matrix& x, const Matrix& scale, const Matrix& shift) {
  return ln_forward(x, scale, shift, nullptr);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Matrix forward(const std::vector<PatchSequence>& batch, const ModelParams& params,
               const ModelConfig& cfg, const ForwardOptions& opts) {
  check_batch(batch, cfg);
  Matrix logits(static_cast<Eigen::Index>(batch.size()), cfg.num_classes);
  parallel_for(static_cast<int>(batch.size()), opts.threads, [&](int i) {
    logits.row(i) = example_forward(batch[i], params, cfg, opts.training,
                                    DropoutSource{opts.dropout_seed, static_cast<std::uint64_t>(i)},
                                    nullptr);
  });
  return logits;
}

namespace {

// Softmax cross-entropy of one row; writes (p - onehot) * weight into dlogits.
double cross_entropy(const Matrix& logits_row, int label, double weight, Matrix* dlogits) {
  const double mx = logits_row.maxCoeff();
  Matrix e = (logits_row.array() - mx).exp();
  const double z = e.sum();
  const double l = std::log(z) - (logits_row(0, label) - mx);
  if (dlogits != nullptr) {
    *dlogits = e / z;
    (*dlogits)(0, label) -= 1.0;
    *dlogits *= weight;
  }
  return l;
}

void check_labels(const std::vector<int>& labels, std::size_t n, const ModelConfig& cfg) {
  if (labels.size() != n) throw ParameterError("loss: label count does not match batch size");
  for (int y : labels) {
    if (y < 0 || y >= cfg.num_classes) {
      throw ParameterError("loss: label " + std::to_string(y) + " outside [0, " +
                           std::to_string(cfg.num_classes) + ")");
    }
  }
}

}  // namespace

LossAndGrad loss_and_grad(const std::vector<PatchSequence>& batch, const std::vector<int>& labels,
                          const ModelParams& params, const ModelConfig& cfg,
                          const ForwardOptions& opts) {
  check_batch(batch, cfg);
  check_labels(labels, batch.size(), cfg);
  const int n = static_cast<int>(batch.size());
  const double weight = 1.0 / n;
  LossAndGrad out{0.0, zeros_like(params), Matrix(n, cfg.num_classes)};
  std::vector<double> losses(n);

  auto run = [&](int i, ModelParams& g) {
    ExampleCache cache;
    const Matrix logits = example_forward(batch[i], params, cfg, opts.training,
                                          DropoutSource{opts.dropout_seed, static_cast<std::uint64_t>(i)},
                                          &cache);
    Matrix dlogits;
    losses[i] = cross_entropy(logits, labels[i], weight, &dlogits);
    out.logits.row(i) = logits;
    example_backward(dlogits, cache, params, cfg, g);
  };

  // Each example's gradient is formed on its own and then added in example
  // order, whatever the thread count.
  if (opts.threads <= 1 || n == 1) {
    ModelParams g = zeros_like(params);
    for (int i = 0; i < n; ++i) {
      if (i > 0) for_each_tensor(g, [](const std::string&, Matrix& m, TensorKind) { m.setZero(); });
      run(i, g);
      axpy(out.grad, 1.0, g);
    }
  } else {
    std::vector<ModelParams> per_example(n);
    parallel_for(n, opts.threads, [&](int i) {
      per_example[i] = zeros_like(params);
      run(i, per_example[i]);
    });
    for (int i = 0; i < n; ++i) axpy(out.grad, 1.0, per_example[i]);
  }
  for (double l : losses) out.loss += l * weight;
  return out;
}

double loss(const std::vector<PatchSequence>& batch, const std::vector<int>& labels,
            const ModelParams& params, const ModelConfig& cfg, const ForwardOptions& opts) {
  check_labels(labels, batch.size(), cfg);
  const Matrix logits = forward(batch, params, cfg, opts);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    total += cross_entropy(logits.row(i), labels[i], 0.0, nullptr) / static_cast<double>(logits.rows());
  }
  return total;
}

}  // namespace smt::model
