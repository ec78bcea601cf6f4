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

#include "smt/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "smt/checkpoint.hpp"
#include "smt/error.hpp"

namespace smt {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw ParameterError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ParameterError("unknown config key '" + section + "." + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

const char* boundary_name(Boundary b) { return b == Boundary::kReflect ? "reflect" : "periodic"; }

Boundary parse_boundary(const std::string& s) {
  if (s == "reflect") return Boundary::kReflect;
  if (s == "periodic") return Boundary::kPeriodic;
  throw ParameterError("saliency.boundary must be 'reflect' or 'periodic', got '" + s + "'");
}

const char* order_name(patching::FeedOrder o) {
  return o == patching::FeedOrder::kRaster ? "raster" : "score";
}

patching::FeedOrder parse_order(const std::string& s) {
  if (s == "score") return patching::FeedOrder::kScoreDescending;
  if (s == "raster") return patching::FeedOrder::kRaster;
  throw ParameterError("selection.order must be 'score' or 'raster', got '" + s + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0 || grad_accum_steps <= 0) {
    throw ParameterError("train: epochs, batch_size and grad_accum_steps must be positive");
  }
  if (!(base_lr > 0) || warmup_steps < 0 || !(weight_decay >= 0) || !(clip_norm >= 0)) {
    throw ParameterError("train: invalid learning rate, warmup, weight decay or clip norm");
  }
  if (!(dropout >= 0 && dropout < 1)) throw ParameterError("train: dropout must be in [0, 1)");
  if (!(init_std > 0) || !std::isfinite(init_std)) throw ParameterError("train: init_std must be positive");
}

TrainConfig TrainConfig::paper_scale() {
  TrainConfig t;
  t.epochs = 300;
  t.base_lr = 0.003;
  t.warmup_steps = 20;
  t.weight_decay = 0.3;
  t.clip_norm = 1.0;
  t.grad_accum_steps = 4096;
  t.dropout = 0.1;
  return t;
}

void Config::validate() const {
  model.validate();
  train.validate();
  saliency.rog.validate();
  saliency.curvature.validate();
  if (selection.m < 0 || selection.m > model.num_patches()) {
    throw ParameterError("selection.m must be in [0, " + std::to_string(model.num_patches()) + "]");
  }
  if (selection.m == 0 && !(selection.fraction > 0 && selection.fraction <= 1)) {
    throw ParameterError("selection.fraction must be in (0, 1]");
  }
  if (data.synthetic_per_class <= 0 || data.synthetic_eval_per_class < 0) {
    throw ParameterError("data: synthetic set sizes must be positive");
  }
}

json to_json(const SaliencyConfig& s) {
  return json{{"sigma_center", s.rog.sigma_center},
              {"sigma_surround", s.rog.sigma_surround},
              {"tau", s.rog.tau},
              {"n", s.curvature.n},
              {"sigma_r", s.curvature.sigma_r},
              {"boundary", boundary_name(s.boundary)}};
}

json to_json(const Config& c) {
  const TrainConfig& t = c.train;
  return json{
      {"model", model::to_json(c.model)},
      {"train",
       {{"epochs", t.epochs},
        {"base_lr", t.base_lr},
        {"warmup_steps", t.warmup_steps},
        {"weight_decay", t.weight_decay},
        {"clip_norm", t.clip_norm},
        {"batch_size", t.batch_size},
        {"grad_accum_steps", t.grad_accum_steps},
        {"seed", t.seed},
        {"dropout", t.dropout},
        {"init_std", t.init_std}}},
      {"saliency", to_json(c.saliency)},
      {"selection",
       {{"fraction", c.selection.fraction},
        {"m", c.selection.m},
        {"order", order_name(c.selection.order)}}},
      {"data",
       {{"train_dir", c.data.train_dir},
        {"eval_dir", c.data.eval_dir},
        {"synthetic_per_class", c.data.synthetic_per_class},
        {"synthetic_eval_per_class", c.data.synthetic_eval_per_class},
        {"synthetic_seed", c.data.synthetic_seed},
        {"cache_dir", c.data.cache_dir}}},
  };
}

Config config_from_json(const json& j) {
  reject_unknown(j, {"model", "train", "saliency", "selection", "data"}, "<root>");
  Config c;
  try {
    if (j.contains("model")) c.model = model::model_config_from_json(j.at("model"), c.model);
    if (j.contains("train")) {
      const json& t = j.at("train");
      reject_unknown(t,
                     {"epochs", "base_lr", "warmup_steps", "weight_decay", "clip_norm",
                      "batch_size", "grad_accum_steps", "seed", "dropout", "init_std"},
                     "train");
      read(t, "epochs", c.train.epochs);
      read(t, "base_lr", c.train.base_lr);
      read(t, "warmup_steps", c.train.warmup_steps);
      read(t, "weight_decay", c.train.weight_decay);
      read(t, "clip_norm", c.train.clip_norm);
      read(t, "batch_size", c.train.batch_size);
      read(t, "grad_accum_steps", c.train.grad_accum_steps);
      read(t, "seed", c.train.seed);
      read(t, "dropout", c.train.dropout);
      read(t, "init_std", c.train.init_std);
    }
    if (j.contains("saliency")) {
      const json& s = j.at("saliency");
      reject_unknown(s, {"sigma_center", "sigma_surround", "tau", "n", "sigma_r", "boundary"},
                     "saliency");
      read(s, "sigma_center", c.saliency.rog.sigma_center);
      read(s, "sigma_surround", c.saliency.rog.sigma_surround);
      read(s, "tau", c.saliency.rog.tau);
      read(s, "n", c.saliency.curvature.n);
      read(s, "sigma_r", c.saliency.curvature.sigma_r);
      if (s.contains("boundary")) c.saliency.boundary = parse_boundary(s.at("boundary").get<std::string>());
    }
    if (j.contains("selection")) {
      const json& s = j.at("selection");
      reject_unknown(s, {"fraction", "m", "order"}, "selection");
      read(s, "fraction", c.selection.fraction);
      read(s, "m", c.selection.m);
      if (s.contains("order")) c.selection.order = parse_order(s.at("order").get<std::string>());
    }
    if (j.contains("data")) {
      const json& d = j.at("data");
      reject_unknown(d,
                     {"train_dir", "eval_dir", "synthetic_per_class", "synthetic_eval_per_class",
                      "synthetic_seed", "cache_dir"},
                     "data");
      read(d, "train_dir", c.data.train_dir);
      read(d, "eval_dir", c.data.eval_dir);
      read(d, "synthetic_per_class", c.data.synthetic_per_class);
      read(d, "synthetic_eval_per_class", c.data.synthetic_eval_per_class);
      read(d, "synthetic_seed", c.data.synthetic_seed);
      read(d, "cache_dir", c.data.cache_dir);
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ParameterError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json j = to_json(cfg);
  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->is_object() || !node->contains(part)) {
      throw ParameterError("unknown config key '" + key + "'");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ParameterError("override '" + key + "' names a section, not a key");
  *node = value;
  cfg = config_from_json(j);
}

}  // namespace smt
