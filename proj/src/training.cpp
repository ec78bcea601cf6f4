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

#include "smt/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "smt/checkpoint.hpp"
#include "smt/error.hpp"

namespace smt::training {
namespace {

namespace fs = std::filesystem;
using model::Matrix;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string cache_key(const LuminanceImage& lum, const SaliencyConfig& cfg) {
  std::string bytes = to_json(cfg).dump();
  const std::int32_t dims[2] = {lum.height(), lum.width()};
  bytes.append(reinterpret_cast<const char*>(dims), sizeof(dims));
  bytes.append(reinterpret_cast<const char*>(lum.pixels.data()),
               static_cast<std::size_t>(lum.pixels.size()) * sizeof(double));
  return sha256_hex(bytes);
}

bool read_plane(const fs::path& path, Plane& out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  std::int32_t dims[2];
  if (!is.read(reinterpret_cast<char*>(dims), sizeof(dims)) || dims[0] <= 0 || dims[1] <= 0) return false;
  Plane p(dims[0], dims[1]);
  if (!is.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)))) {
    return false;
  }
  out = std::move(p);
  return true;
}

void write_plane(const fs::path& path, const Plane& p) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write saliency cache '" + tmp.string() + "'");
    const std::int32_t dims[2] = {static_cast<std::int32_t>(p.rows()), static_cast<std::int32_t>(p.cols())};
    os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    os.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  fs::rename(tmp, path);
}

template <class Fn>
void parallel_items(int n, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
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

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void write_metrics(const fs::path& dir, const MetricsLog& log) {
  std::ofstream steps(dir / "metrics.csv", std::ios::trunc);
  log.write_steps_csv(steps);
  std::ofstream epochs(dir / "metrics_epochs.csv", std::ios::trunc);
  log.write_epochs_csv(epochs);
  if (!steps || !epochs) throw IoError("cannot write metrics in '" + dir.string() + "'");
}

}  // namespace

RgbImage normalize_inception(const RgbImage& img) {
  RgbImage out = img;
  for (double& v : out.data) v = (v - 0.5) / 0.5;
  return out;
}

RgbImage denormalize_inception(const RgbImage& img) {
  RgbImage out = img;
  for (double& v : out.data) v = v * 0.5 + 0.5;
  return out;
}

SaliencyCache::SaliencyCache(fs::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) fs::create_directories(dir_);
}

saliency::SaliencyMap SaliencyCache::get(const LuminanceImage& lum, const SaliencyConfig& cfg) {
  const std::string key = cache_key(lum, cfg);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (auto it = memory_.find(key); it != memory_.end()) {
      ++hits_;
      return saliency::SaliencyMap{it->second, cfg.rog, cfg.curvature};
    }
  }
  Plane values;
  bool from_disk = false;
  if (!dir_.empty() && read_plane(dir_ / (key + ".sal"), values) && values.rows() == lum.height() &&
      values.cols() == lum.width()) {
    from_disk = true;
  } else {
    values = saliency::saliency_map(lum, cfg.rog, cfg.curvature, cfg.boundary).values;
    if (!dir_.empty()) write_plane(dir_ / (key + ".sal"), values);
  }
  std::lock_guard<std::mutex> lock(mutex_);
  from_disk ? ++hits_ : ++misses_;
  memory_.emplace(key, values);
  return saliency::SaliencyMap{std::move(values), cfg.rog, cfg.curvature};
}

int selection_count(const SelectionConfig& sel, const model::ModelConfig& cfg) {
  const patching::PatchGridSpec spec{cfg.patch_size, cfg.grid_side(), cfg.grid_side()};
  if (sel.m > 0) {
    if (sel.m > spec.count()) throw ParameterError("selection.m exceeds the patch count");
    return sel.m;
  }
  return patching::count_for_fraction(spec, sel.fraction);
}

model::PatchSequence prepare_example(const RgbImage& img, const Config& cfg, SaliencyCache* cache) {
  const model::ModelConfig& mc = cfg.model;
  if (img.height != mc.input_size || img.width != mc.input_size) {
    throw ShapeError("prepare_example: image is " + std::to_string(img.height) + "x" +
                     std::to_string(img.width) + ", model expects " + std::to_string(mc.input_size));
  }
  const LuminanceImage lum = signal::to_luminance(img);
  const saliency::SaliencyMap map =
      cache != nullptr ? cache->get(lum, cfg.saliency)
                       : saliency::saliency_map(lum, cfg.saliency.rog, cfg.saliency.curvature,
                                                cfg.saliency.boundary);
  const auto grid = patching::patch_scores(map, mc.patch_size);
  auto sel = patching::select_top_m(grid, selection_count(cfg.selection, mc));
  if (cfg.selection.order == patching::FeedOrder::kRaster) sel = patching::to_raster_order(std::move(sel));
  const auto patches = patching::extract_patches(normalize_inception(img), sel, mc.patch_size);
  return model::make_sequence(patches, mc);
}

PreparedSet prepare_dataset(const Dataset& ds, const Config& cfg, SaliencyCache* cache, int threads) {
  ds.validate();
  PreparedSet out;
  out.inputs.resize(ds.size());
  out.labels.resize(ds.size());
  parallel_items(static_cast<int>(ds.size()), threads, [&](int i) {
    const Item& it = ds.items[i];
    out.inputs[i] = prepare_example(load_item(it, cfg.model.input_size), cfg, cache);
    out.labels[i] = it.label;
  });
  return out;
}

void MetricsLog::write_steps_csv(std::ostream& os) const {
  os << "step,lr,loss\n" << std::setprecision(17);
  for (const StepRecord& r : steps) os << r.step << ',' << r.lr << ',' << r.loss << '\n';
}

void MetricsLog::write_epochs_csv(std::ostream& os) const {
  os << "epoch,train_acc,eval_acc\n" << std::setprecision(17);
  for (const EpochRecord& r : epochs) {
    os << r.epoch << ',' << r.train_acc << ',';
    if (std::isnan(r.eval_acc)) os << "nan"; else os << r.eval_acc;
    os << '\n';
  }
}

double top1_accuracy(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size() || labels.empty()) {
    throw ParameterError("top1_accuracy: logits and labels disagree in length");
  }
  int correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    correct += static_cast<int>(arg) == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate(const model::ModelParams& params, const model::ModelConfig& cfg,
                const PreparedSet& data, int threads) {
  model::ForwardOptions opts;
  opts.threads = threads;
  return top1_accuracy(model::forward(data.inputs, params, cfg, opts), data.labels);
}

double evaluate(const model::Checkpoint& ck, const Config& cfg, const Dataset& ds,
                SaliencyCache* cache, int threads) {
  if (ck.header.config.num_classes != ds.num_classes()) {
    throw ParameterError("evaluate: checkpoint has " + std::to_string(ck.header.config.num_classes) +
                         " classes, dataset has " + std::to_string(ds.num_classes()));
  }
  Config run = cfg;
  run.model = ck.header.config;
  return evaluate(ck.params, ck.header.config, prepare_dataset(ds, run, cache, threads), threads);
}

TrainResult train(const Config& cfg, const PreparedSet& train_set, const PreparedSet* eval_set,
                  const RunOptions& opts) {
  cfg.validate();
  if (train_set.inputs.empty() || train_set.inputs.size() != train_set.labels.size()) {
    throw ParameterError("train: empty or inconsistent training set");
  }
  model::ModelConfig mc = cfg.model;
  mc.dropout_rate = cfg.train.dropout;
  const TrainConfig& tc = cfg.train;

  TrainResult result;
  model::ModelParams params = model::init_params(mc, tc.seed, tc.init_std);
  AdamWState state = AdamWState::for_params(params);
  result.best_params = params;
  result.best_eval_acc = -1.0;

  const int n = static_cast<int>(train_set.inputs.size());
  const int micro_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  const int steps_per_epoch = (micro_per_epoch + tc.grad_accum_steps - 1) / tc.grad_accum_steps;
  const std::int64_t total_steps = static_cast<std::int64_t>(steps_per_epoch) * tc.epochs;

  std::vector<int> order(n);
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix(tc.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    int correct = 0;
    int cursor = 0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      std::vector<std::vector<model::PatchSequence>> micro;
      std::vector<std::vector<int>> labels;
      for (int k = 0; k < tc.grad_accum_steps && cursor < n; ++k) {
        const int end = std::min(n, cursor + tc.batch_size);
        micro.emplace_back();
        labels.emplace_back();
        for (int i = cursor; i < end; ++i) {
          micro.back().push_back(train_set.inputs[order[i]]);
          labels.back().push_back(train_set.labels[order[i]]);
        }
        cursor = end;
      }
      model::ForwardOptions fo;
      fo.training = true;
      fo.dropout_seed = mix(tc.seed ^ 0xd50ull, static_cast<std::uint64_t>(step));
      fo.threads = opts.threads;
      model::LossAndGrad lg = accumulate_gradients(micro, labels, params, mc, fo);
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("training diverged at step " + std::to_string(step) + " (epoch " +
                              std::to_string(epoch) + "): loss = " + std::to_string(lg.loss) +
                              ", grad norm = " + std::to_string(model::global_norm(lg.grad)));
      }
      std::vector<int> flat;
      for (const auto& l : labels) flat.insert(flat.end(), l.begin(), l.end());
      correct += static_cast<int>(std::lround(top1_accuracy(lg.logits, flat) * flat.size()));

      clip_global_norm(lg.grad, tc.clip_norm);
      const double lr = lr_schedule(step + 1, total_steps, tc);
      adamw_step(params, lg.grad, state, lr, tc.weight_decay);
      result.metrics.steps.push_back({step, lr, lg.loss});
      ++step;
    }

    EpochRecord rec{epoch, static_cast<double>(correct) / n, std::numeric_limits<double>::quiet_NaN()};
    bool improved = true;
    if (eval_set != nullptr && !eval_set->inputs.empty()) {
      rec.eval_acc = evaluate(params, mc, *eval_set, opts.threads);
      improved = rec.eval_acc > result.best_eval_acc;
    }
    if (improved) {
      result.best_params = params;
      result.best_epoch = epoch;
      result.best_eval_acc = std::isnan(rec.eval_acc) ? rec.train_acc : rec.eval_acc;
    }
    result.metrics.epochs.push_back(rec);
    if (opts.log != nullptr) {
      *opts.log << "epoch " << epoch << "/" << tc.epochs << "  loss "
                << result.metrics.steps.back().loss << "  train_acc " << rec.train_acc
                << "  eval_acc " << rec.eval_acc << std::endl;
    }
    if (!opts.out_dir.empty()) {
      model::CheckpointHeader header{cfg.model, tc.seed, step, {}};
      header.extra = {{"epoch", epoch},
                      {"train_acc", rec.train_acc},
                      {"class_names", train_set.class_names},
                      {"run_config", to_json(cfg)}};
      if (!std::isnan(rec.eval_acc)) header.extra["eval_acc"] = rec.eval_acc;
      model::save_checkpoint(opts.out_dir / "last.ckpt", params, header);
      if (improved) model::save_checkpoint(opts.out_dir / "best.ckpt", params, header);
      write_metrics(opts.out_dir, result.metrics);
    }
  }
  result.final_params = std::move(params);
  result.steps = step;
  return result;
}

TrainResult train(const Config& cfg, const Dataset& train_set, const Dataset* eval_set,
                  SaliencyCache* cache, const RunOptions& opts) {
  if (train_set.num_classes() != cfg.model.num_classes) {
    throw ParameterError("train: dataset has " + std::to_string(train_set.num_classes()) +
                         " classes, model config expects " + std::to_string(cfg.model.num_classes));
  }
  PreparedSet tr = prepare_dataset(train_set, cfg, cache, opts.threads);
  tr.class_names = train_set.class_names;
  std::optional<PreparedSet> ev;
  if (eval_set != nullptr) ev = prepare_dataset(*eval_set, cfg, cache, opts.threads);
  return train(cfg, tr, ev ? &*ev : nullptr, opts);
}

}  // namespace smt::training
