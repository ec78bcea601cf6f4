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
#include <numbers>

#include "smt/error.hpp"
#include "smt/training.hpp"

namespace smt::training {

using model::Matrix;
using model::ModelParams;
using model::TensorKind;

double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  if (step < 0 || step > total_steps) throw ParameterError("lr_schedule: step outside [0, total]");
  const std::int64_t warmup = std::min<std::int64_t>(cfg.warmup_steps, total_steps);
  if (step < warmup) return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const std::int64_t decay = total_steps - warmup;
  if (decay == 0) return cfg.base_lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(decay);
  return 0.5 * cfg.base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
                  Eigen::MatrixXd& m, Eigen::MatrixXd& v, std::int64_t t, double lr,
                  double weight_decay, const AdamWHyper& h) {
  if (t < 1) throw ParameterError("adamw: step counter must start at 1");
  if (weight_decay != 0.0) param *= 1.0 - lr * weight_decay;
  m = h.beta1 * m + (1.0 - h.beta1) * grad;
  v = h.beta2 * v + (1.0 - h.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + h.eps);
}

AdamWState AdamWState::for_params(const ModelParams& p) {
  return AdamWState{model::zeros_like(p), model::zeros_like(p), 0};
}

void adamw_step(ModelParams& params, const ModelParams& grads, AdamWState& state, double lr,
                double weight_decay, const AdamWHyper& hyper) {
  std::vector<const Matrix*> g;
  std::vector<Matrix*> m, v;
  model::for_each_tensor(grads, [&](const std::string&, const Matrix& x, TensorKind) { g.push_back(&x); });
  model::for_each_tensor(state.m, [&](const std::string&, Matrix& x, TensorKind) { m.push_back(&x); });
  model::for_each_tensor(state.v, [&](const std::string&, Matrix& x, TensorKind) { v.push_back(&x); });
  ++state.t;
  std::size_t i = 0;
  model::for_each_tensor(params, [&](const std::string& name, Matrix& p, TensorKind kind) {
    if (g[i]->rows() != p.rows() || g[i]->cols() != p.cols()) {
      throw ShapeError("adamw: gradient shape mismatch at '" + name + "'");
    }
    const double wd = kind == TensorKind::kWeight ? weight_decay : 0.0;
    adamw_update(p, *g[i], *m[i], *v[i], state.t, lr, wd, hyper);
    ++i;
  });
}

double clip_global_norm(ModelParams& grads, double max_norm) {
  const double norm = model::global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    model::for_each_tensor(grads, [s](const std::string&, Matrix& x, TensorKind) { x *= s; });
  }
  return norm;
}

model::LossAndGrad accumulate_gradients(const std::vector<std::vector<model::PatchSequence>>& micro,
                                        const std::vector<std::vector<int>>& labels,
                                        const ModelParams& params, const model::ModelConfig& cfg,
                                        const model::ForwardOptions& opts) {
  if (micro.empty() || micro.size() != labels.size()) {
    throw ParameterError("accumulate_gradients: need matching, nonempty micro-batch lists");
  }
  std::size_t total = 0;
  for (const auto& mb : micro) total += mb.size();
  model::LossAndGrad out{0.0, model::zeros_like(params), Matrix(static_cast<Eigen::Index>(total), cfg.num_classes)};
  Eigen::Index row = 0;
  for (std::size_t j = 0; j < micro.size(); ++j) {
    model::ForwardOptions o = opts;
    o.dropout_seed = opts.dropout_seed ^ (0x51ed2701ULL * (j + 1));
    const model::LossAndGrad part = model::loss_and_grad(micro[j], labels[j], params, cfg, o);
    const double w = static_cast<double>(micro[j].size()) / static_cast<double>(total);
    out.loss += w * part.loss;
    model::axpy(out.grad, w, part.grad);
    out.logits.middleRows(row, part.logits.rows()) = part.logits;
    row += part.logits.rows();
  }
  return out;
}

}  // namespace smt::training
