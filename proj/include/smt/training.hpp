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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "smt/checkpoint.hpp"
#include "smt/config.hpp"
#include "smt/model.hpp"
#include "smt/patching.hpp"
#include "smt/saliency.hpp"

namespace smt::training {

// --- Data --------------------------------------------------------------------

struct Item {
  std::filesystem::path path;        // empty for in-memory items
  std::optional<RgbImage> image;     // set for in-memory items
  int label = 0;
  /// Shape vertices (x, y) in pixels, for generated images.
  std::vector<std::array<double, 2>> corners;
};

struct Dataset {
  std::vector<Item> items;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::size_t size() const { return items.size(); }
  /// Throws ParameterError unless nonempty with labels dense in [0, classes).
  void validate() const;
};

/// One subdirectory per class (sorted by name), PNG files sorted by name.
Dataset load_folder_dataset(const std::filesystem::path& root);

/// Class names of the generated set, in label order.
inline const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> names = {"rectangle", "triangle", "disc"};
  return names;
}

/// Filled axis-aligned rectangles, triangles and discs at random positions
/// and scales over smooth textured backgrounds. Pixel values are quantized
/// to multiples of 1/255 so a dataset written to disk reads back unchanged.
Dataset make_synthetic_dataset(int num_per_class, int image_size, std::uint64_t seed);

/// Writes root/<class>/<class>_<index>.png for every item.
void write_dataset(const Dataset& ds, const std::filesystem::path& root);

/// Loads (or copies) the item's image and resizes it to image_size.
RgbImage load_item(const Item& item, int image_size);

// --- Preprocessing -------------------------------------------------------------

/// (x - 0.5) / 0.5 per channel.
RgbImage normalize_inception(const RgbImage& img);
RgbImage denormalize_inception(const RgbImage& img);

/// Saliency maps keyed by SHA-256 of the luminance pixels and parameters.
/// Held in memory and, when a directory is given, mirrored to disk.
class SaliencyCache {
 public:
  explicit SaliencyCache(std::filesystem::path dir = {});
  saliency::SaliencyMap get(const LuminanceImage& lum, const SaliencyConfig& cfg);
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::filesystem::path dir_;
  std::map<std::string, Plane> memory_;
  std::mutex mutex_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Number of patches kept per image under `sel` for the model grid.
int selection_count(const SelectionConfig& sel, const model::ModelConfig& cfg);

/// saliency -> top-m -> Inception normalization -> patch extraction.
model::PatchSequence prepare_example(const RgbImage& img, const Config& cfg, SaliencyCache* cache);

struct PreparedSet {
  std::vector<model::PatchSequence> inputs;
  std::vector<int> labels;
  /// Stored in checkpoint headers when set.
  std::vector<std::string> class_names;
};

PreparedSet prepare_dataset(const Dataset& ds, const Config& cfg, SaliencyCache* cache,
                            int threads = 1);

// --- Optimization --------------------------------------------------------------

/// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0
/// at total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One decoupled-weight-decay Adam update of a single tensor at step t >= 1.
void adamw_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
                  Eigen::MatrixXd& m, Eigen::MatrixXd& v, std::int64_t t, double lr,
                  double weight_decay, const AdamWHyper& hyper = {});

struct AdamWState {
  model::ModelParams m;
  model::ModelParams v;
  std::int64_t t = 0;

  static AdamWState for_params(const model::ModelParams& p);
};

/// Weight decay applies to weight tensors only, never to biases or norms.
void adamw_step(model::ModelParams& params, const model::ModelParams& grads, AdamWState& state,
                double lr, double weight_decay, const AdamWHyper& hyper = {});

/// Scales `grads` so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_global_norm(model::ModelParams& grads, double max_norm);

/// Mean-reduced gradient over micro-batches, weighted by their sizes.
model::LossAndGrad accumulate_gradients(const std::vector<std::vector<model::PatchSequence>>& micro,
                                        const std::vector<std::vector<int>>& labels,
                                        const model::ModelParams& params,
                                        const model::ModelConfig& cfg,
                                        const model::ForwardOptions& opts);

// --- Metrics -----------------------------------------------------------------

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_acc = 0.0;
  double eval_acc = 0.0;  // NaN without an eval set
};

struct MetricsLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  /// "step,lr,loss" rows.
  void write_steps_csv(std::ostream& os) const;
  /// "epoch,train_acc,eval_acc" rows.
  void write_epochs_csv(std::ostream& os) const;
};

// --- Training ----------------------------------------------------------------

struct RunOptions {
  int threads = 1;
  /// Checkpoints (last.ckpt, best.ckpt) and metrics are written here if set.
  std::filesystem::path out_dir;
  std::ostream* log = nullptr;
};

struct TrainResult {
  model::ModelParams final_params;
  model::ModelParams best_params;
  MetricsLog metrics;
  int best_epoch = 0;
  double best_eval_acc = 0.0;
  std::int64_t steps = 0;
};

/// Trains on prepared inputs. Deterministic for a fixed seed.
TrainResult train(const Config& cfg, const PreparedSet& train_set, const PreparedSet* eval_set,
                  const RunOptions& opts = {});

/// Convenience: prepares the datasets (with the cache) and trains.
TrainResult train(const Config& cfg, const Dataset& train_set, const Dataset* eval_set,
                  SaliencyCache* cache, const RunOptions& opts = {});

/// Top-1 accuracy of argmax(logits) against labels.
double top1_accuracy(const model::Matrix& logits, const std::vector<int>& labels);

double evaluate(const model::ModelParams& params, const model::ModelConfig& cfg,
                const PreparedSet& data, int threads = 1);

/// Throws ParameterError when the checkpoint's class count differs from the
/// dataset's.
double evaluate(const model::Checkpoint& ck, const Config& cfg, const Dataset& ds,
                SaliencyCache* cache, int threads = 1);

}  // namespace smt::training
