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

#include "smt/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smt/bench.hpp"
#include "smt/checkpoint.hpp"
#include "smt/config.hpp"
#include "smt/error.hpp"
#include "smt/patching.hpp"
#include "smt/saliency.hpp"
#include "smt/signal.hpp"
#include "smt/training.hpp"

namespace smt::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  int threads = 1;
};

void add_common(CLI::App* app, Common& c, bool out_required) {
  app->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--override", c.overrides, "section.key=value, repeatable")->take_all();
  auto* out = app->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
  app->add_option("--seed", c.seed, "Random seed");
  app->add_flag("--deterministic", c.deterministic, "Single-threaded, no timing-dependent output");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::Range(1, 1024));
}

Config resolve_config(const Common& c, std::optional<json> base = std::nullopt) {
  Config cfg;
  if (!c.config_path.empty()) {
    cfg = load_config(c.config_path);
  } else if (base) {
    cfg = config_from_json(*base);
  }
  for (const std::string& o : c.overrides) apply_override(cfg, o);
  return cfg;
}

int threads_of(const Common& c) { return c.deterministic ? 1 : c.threads; }

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  os << j.dump(2) << '\n';
  if (!os) throw IoError("cannot write '" + path.string() + "'");
}

void write_snapshot(const fs::path& dir, const std::string& command, const Config& cfg,
                    const Common& c, json args) {
  fs::create_directories(dir);
  args["threads"] = threads_of(c);
  args["deterministic"] = c.deterministic;
  if (c.seed) args["seed"] = *c.seed;
  write_json(dir / kResolvedConfigFile,
             json{{"command", command}, {"config", to_json(cfg)}, {"args", std::move(args)}});
}

std::string stem_of(const std::string& input) { return fs::path(input).stem().string(); }

// --- subcommands ---------------------------------------------------------------

struct SaliencyArgs {
  Common common;
  std::string input;
};

int cmd_saliency(const SaliencyArgs& a, std::ostream& err) {
  const Config cfg = resolve_config(a.common);
  const fs::path dir = a.common.out.empty() ? fs::path(".") : fs::path(a.common.out);
  write_snapshot(dir, "saliency", cfg, a.common, {{"input", a.input}});

  const RgbImage img = signal::load_image(a.input);
  const auto map = saliency::saliency_map(signal::to_luminance(img), cfg.saliency.rog,
                                          cfg.saliency.curvature, cfg.saliency.boundary);
  const double lo = map.values.minCoeff();
  const double hi = map.values.maxCoeff();
  Plane norm = Plane::Zero(map.values.rows(), map.values.cols());
  if (hi > lo) norm = (map.values - lo) / (hi - lo);
  const std::string stem = stem_of(a.input);
  signal::save_gray16(dir / (stem + ".saliency.png"), norm);
  write_json(dir / (stem + ".saliency.json"),
             json{{"input", a.input},
                  {"height", img.height},
                  {"width", img.width},
                  {"params", to_json(cfg.saliency)},
                  {"normalization", {{"min", lo}, {"max", hi}}},
                  {"encoding", "16-bit gray, value = (saliency - min) / (max - min) * 65535"}});
  err << "saliency: wrote " << (dir / (stem + ".saliency.png")).string() << '\n';
  return kExitOk;
}

struct SelectArgs {
  Common common;
  std::string input;
  std::optional<int> m;
  std::optional<int> patch_size;
  std::string overlay;
  std::string order = "score";
};

int cmd_select(const SelectArgs& a, std::ostream& err) {
  const Config cfg = resolve_config(a.common);
  const fs::path dir = a.common.out.empty() ? fs::path(".") : fs::path(a.common.out);
  const int p = a.patch_size.value_or(cfg.model.patch_size);
  json args{{"input", a.input}, {"patch_size", p}, {"order", a.order}};
  if (a.m) args["m"] = *a.m;
  if (!a.overlay.empty()) args["overlay"] = a.overlay;
  write_snapshot(dir, "select", cfg, a.common, args);

  const RgbImage img = signal::load_image(a.input);
  const auto map = saliency::saliency_map(signal::to_luminance(img), cfg.saliency.rog,
                                          cfg.saliency.curvature, cfg.saliency.boundary);
  const auto grid = patching::patch_scores(map, p);
  const int m = a.m ? *a.m : patching::count_for_fraction(grid.spec, cfg.selection.fraction);
  auto sel = patching::select_top_m(grid, m);
  if (a.order == "raster") sel = patching::to_raster_order(std::move(sel));

  json entries = json::array();
  for (const auto& e : sel.entries) {
    entries.push_back({{"index", e.index}, {"row", e.coord.row}, {"col", e.coord.col}, {"score", e.score}});
  }
  const fs::path out_json = dir / (stem_of(a.input) + ".selection.json");
  write_json(out_json, json{{"input", a.input},
                            {"patch_size", p},
                            {"grid_rows", sel.spec.grid_rows},
                            {"grid_cols", sel.spec.grid_cols},
                            {"m", sel.m()},
                            {"order", a.order},
                            {"entries", std::move(entries)}});

  if (!a.overlay.empty()) {
    std::vector<bool> keep(sel.spec.count(), false);
    for (const auto& e : sel.entries) keep[e.index] = true;
    RgbImage ov = img;
    for (int y = 0; y < ov.height; ++y) {
      for (int x = 0; x < ov.width; ++x) {
        if (keep[(y / p) * sel.spec.grid_cols + x / p]) continue;
        for (int c = 0; c < 3; ++c) ov.at(y, x, c) *= 0.3;
      }
    }
    signal::save_rgb8(a.overlay, ov);
  }
  err << "select: kept " << sel.m() << " of " << sel.spec.count() << " patches -> "
      << out_json.string() << '\n';
  return kExitOk;
}

// Folder dataset when a directory is configured, generated set otherwise.
training::Dataset dataset_for(const Config& cfg, bool eval) {
  const std::string& dir = eval ? cfg.data.eval_dir : cfg.data.train_dir;
  if (!dir.empty()) return training::load_folder_dataset(dir);
  const int n = eval ? cfg.data.synthetic_eval_per_class : cfg.data.synthetic_per_class;
  const std::uint64_t seed = cfg.data.synthetic_seed + (eval ? 1000003ULL : 0ULL);
  return training::make_synthetic_dataset(n, cfg.model.input_size, seed);
}

struct TrainArgs {
  Common common;
};

int cmd_train(const TrainArgs& a, std::ostream& err) {
  Config cfg = resolve_config(a.common);
  if (a.common.seed) cfg.train.seed = *a.common.seed;
  const fs::path dir = a.common.out;
  write_snapshot(dir, "train", cfg, a.common, json::object());

  const training::Dataset train_set = dataset_for(cfg, false);
  std::optional<training::Dataset> eval_set;
  if (!cfg.data.eval_dir.empty() || cfg.data.synthetic_eval_per_class > 0) eval_set = dataset_for(cfg, true);
  if (train_set.num_classes() != cfg.model.num_classes) {
    throw ParameterError("training data has " + std::to_string(train_set.num_classes()) +
                         " classes but model.num_classes is " + std::to_string(cfg.model.num_classes));
  }
  training::SaliencyCache cache(cfg.data.cache_dir);
  training::RunOptions opts;
  opts.threads = threads_of(a.common);
  opts.out_dir = dir;
  opts.log = &err;
  const auto result = training::train(cfg, train_set, eval_set ? &*eval_set : nullptr, &cache, opts);
  json summary{{"steps", result.steps},
               {"best_epoch", result.best_epoch},
               {"final_train_acc", result.metrics.epochs.back().train_acc},
               {"final_loss", result.metrics.steps.back().loss}};
  if (eval_set) {
    summary["best_eval_acc"] = result.best_eval_acc;
    summary["final_eval_acc"] = result.metrics.epochs.back().eval_acc;
  }
  write_json(dir / "summary.json", summary);
  err << "train: " << result.steps << " steps, checkpoints in " << dir.string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string data;
};

int cmd_eval(const EvalArgs& a, std::ostream& err) {
  const model::Checkpoint ck = model::load_checkpoint(a.checkpoint);
  std::optional<json> base;
  if (ck.header.extra.contains("run_config")) base = ck.header.extra.at("run_config");
  Config cfg = resolve_config(a.common, base);
  cfg.model = ck.header.config;
  if (!a.data.empty()) cfg.data.eval_dir = a.data;
  const fs::path dir = a.common.out.empty() ? fs::path(".") : fs::path(a.common.out);
  write_snapshot(dir, "eval", cfg, a.common, {{"checkpoint", a.checkpoint}, {"data", a.data}});

  if (cfg.data.eval_dir.empty() && cfg.data.synthetic_eval_per_class == 0) {
    throw ParameterError("eval: no evaluation data (pass --data or configure data.eval_dir)");
  }
  const training::Dataset ds = dataset_for(cfg, true);
  training::SaliencyCache cache(cfg.data.cache_dir);
  const double acc = training::evaluate(ck, cfg, ds, &cache, threads_of(a.common));
  write_json(dir / "eval.json", json{{"checkpoint", a.checkpoint},
                                     {"examples", ds.size()},
                                     {"classes", ds.class_names},
                                     {"top1_accuracy", acc}});
  err << "eval: top-1 " << acc << " on " << ds.size() << " images\n";
  return kExitOk;
}

struct BenchArgs {
  Common common;
  std::string preset = "desk";
  std::vector<int> s = {49, 98, 147, 196};
  int batch = 0;
  int repeats = 5;
  std::string csv;
};

int cmd_bench(const BenchArgs& a, std::ostream& err) {
  const Config cfg = resolve_config(a.common);
  model::ModelConfig mc;
  if (a.preset == "desk") {
    mc = bench::desk_bench_config();
  } else if (a.preset == "base") {
    mc = model::ModelConfig::vit_base();
  } else {
    mc = cfg.model;
  }
  const int batch = a.batch > 0 ? a.batch : (a.preset == "base" ? 256 : 8);
  const bool timed = a.repeats > 0 && !a.common.deterministic;
  const fs::path dir = a.common.out.empty() ? fs::path(".") : fs::path(a.common.out);
  write_snapshot(dir, "bench", cfg, a.common,
                 {{"preset", a.preset}, {"s", a.s}, {"batch", batch}, {"repeats", a.repeats},
                  {"model", model::to_json(mc)}});

  json reports = json::array();
  std::vector<bench::CsvRow> rows;
  std::vector<double> xs, mem;
  for (int s : a.s) {
    const bench::CostReport r = bench::flops_estimate(mc, s, batch, a.preset);
    json j = bench::to_json(r);
    bench::CsvRow row{s, r.flops_total, r.memory_total, std::numeric_limits<double>::quiet_NaN()};
    if (timed) {
      if (s > mc.num_patches()) {
        throw ParameterError("bench: s = " + std::to_string(s) + " exceeds the " +
                             std::to_string(mc.num_patches()) + "-patch grid; use --repeats 0");
      }
      const auto rt = bench::measure_runtime(mc, s, batch, a.repeats, threads_of(a.common),
                                             a.common.seed.value_or(0));
      j["runtime"] = bench::to_json(rt);
      row.runtime_ms = rt.forward.median_ms;
    }
    reports.push_back(std::move(j));
    rows.push_back(row);
    xs.push_back(s);
    mem.push_back(static_cast<double>(r.memory_total));
  }
  json out{{"reports", std::move(reports)}};
  if (xs.size() >= 2) out["memory_affine_r2"] = bench::affine_fit_r2(xs, mem);
  write_json(dir / "cost_report.json", out);
  if (!a.csv.empty()) {
    std::ofstream os(a.csv, std::ios::trunc);
    bench::write_csv(os, rows);
    if (!os) throw IoError("cannot write '" + a.csv + "'");
  }
  err << "bench: " << rows.size() << " sequence lengths -> " << (dir / "cost_report.json").string() << '\n';
  return kExitOk;
}

struct DescribeArgs {
  Common common;
  std::string checkpoint;
};

int cmd_describe(const DescribeArgs& a, std::ostream& out) {
  const json header = model::read_checkpoint_header(a.checkpoint);
  if (!a.common.out.empty()) {
    Config cfg;
    if (header.contains("extra") && header.at("extra").contains("run_config")) {
      cfg = config_from_json(header.at("extra").at("run_config"));
    }
    write_snapshot(a.common.out, "describe", cfg, a.common, {{"checkpoint", a.checkpoint}});
  }
  out << header.dump(2) << '\n';
  return kExitOk;
}

struct MakeDatasetArgs {
  Common common;
  std::optional<int> per_class;
  std::optional<int> size;
};

int cmd_make_dataset(const MakeDatasetArgs& a, std::ostream& err) {
  Config cfg = resolve_config(a.common);
  if (a.common.seed) cfg.data.synthetic_seed = *a.common.seed;
  const int n = a.per_class.value_or(cfg.data.synthetic_per_class);
  const int size = a.size.value_or(cfg.model.input_size);
  const fs::path dir = a.common.out;
  write_snapshot(dir, "make-dataset", cfg, a.common, {{"per_class", n}, {"size", size}});
  const training::Dataset ds = training::make_synthetic_dataset(n, size, cfg.data.synthetic_seed);
  training::write_dataset(ds, dir);
  err << "make-dataset: wrote " << ds.size() << " images to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Saliency-selected patch transformer toolkit", "smt"};
  app.require_subcommand(1);

  SaliencyArgs sal;
  auto* c_sal = app.add_subcommand("saliency", "Write a saliency map as 16-bit PNG plus JSON");
  add_common(c_sal, sal.common, false);
  c_sal->add_option("--input", sal.input, "Input PNG")->required()->check(CLI::ExistingFile);

  SelectArgs sel;
  auto* c_sel = app.add_subcommand("select", "Select the top-m patches of an image");
  add_common(c_sel, sel.common, false);
  c_sel->add_option("--input", sel.input, "Input PNG")->required()->check(CLI::ExistingFile);
  c_sel->add_option("--m", sel.m, "Patches to keep (default: selection.fraction)")->check(CLI::PositiveNumber);
  c_sel->add_option("--patch-size", sel.patch_size, "Patch side in pixels")->check(CLI::PositiveNumber);
  c_sel->add_option("--overlay", sel.overlay, "Optional PNG with unselected patches dimmed");
  c_sel->add_option("--order", sel.order, "score or raster")->check(CLI::IsMember({"score", "raster"}));

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a classifier; writes checkpoints and metrics");
  add_common(c_tr, tr.common, true);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint");
  add_common(c_ev, ev.common, false);
  c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--data", ev.data, "Folder dataset (default: from the run config)")->check(CLI::ExistingDirectory);

  BenchArgs be;
  auto* c_be = app.add_subcommand("bench", "Cost model and runtime versus sequence length");
  add_common(c_be, be.common, false);
  c_be->add_option("--preset", be.preset, "desk, base or config")->check(CLI::IsMember({"desk", "base", "config"}));
  c_be->add_option("--s", be.s, "Sequence lengths")->delimiter(',');
  c_be->add_option("--batch", be.batch, "Batch size (default 8 for desk, 256 for base)")->check(CLI::NonNegativeNumber);
  c_be->add_option("--repeats", be.repeats, "Timed repeats per length; 0 skips timing")->check(CLI::NonNegativeNumber);
  c_be->add_option("--csv", be.csv, "Optional CSV of s, flops, mem_estimate, runtime_ms");

  DescribeArgs de;
  auto* c_de = app.add_subcommand("describe", "Print a checkpoint header");
  add_common(c_de, de.common, false);
  c_de->add_option("--checkpoint", de.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);

  MakeDatasetArgs md;
  auto* c_md = app.add_subcommand("make-dataset", "Write the generated shape dataset as PNG folders");
  add_common(c_md, md.common, true);
  c_md->add_option("--per-class", md.per_class, "Images per class")->check(CLI::PositiveNumber);
  c_md->add_option("--size", md.size, "Image side in pixels")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUserError;
  }

  try {
    if (*c_sal) return cmd_saliency(sal, err);
    if (*c_sel) return cmd_select(sel, err);
    if (*c_tr) return cmd_train(tr, err);
    if (*c_ev) return cmd_eval(ev, err);
    if (*c_be) return cmd_bench(be, err);
    if (*c_de) return cmd_describe(de, out);
    if (*c_md) return cmd_make_dataset(md, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_user_error() ? kExitUserError : kExitInternalError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternalError;
  }
  err << app.help();
  return kExitUserError;
}

}  // namespace smt::cli
