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

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "smt/cli.hpp"
#include "smt/signal.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smt;

namespace {

fs::path tmp_dir(const std::string& name) {
  fs::path d = fs::path(SMT_TEST_TMP) / "cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result smt_run(std::vector<std::string> args) {
  args.insert(args.begin(), "smt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  return json::parse(is);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// 32 x 32 gray image with a bright square.
fs::path square_png(const fs::path& dir) {
  RgbImage img(32, 32, 0.2);
  for (int y = 8; y < 20; ++y)
    for (int x = 12; x < 24; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.8;
  const fs::path p = dir / "square.png";
  signal::save_rgb8(p, img);
  return p;
}

// A short training run on a small generated set.
const std::vector<std::string> kQuickTrain = {
    "--override", "train.epochs=1",   "--override", "data.synthetic_per_class=4",
    "--override", "data.synthetic_eval_per_class=2", "--override", "selection.m=8",
    "--override", "train.batch_size=6"};

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(smt_run({}).code == cli::kExitUserError);
  CHECK(smt_run({"frobnicate"}).code == cli::kExitUserError);
  const Result missing = smt_run({"saliency", "--input", "/no/such/file.png"});
  CHECK(missing.code == cli::kExitUserError);
  CHECK_FALSE(missing.err.empty());
  CHECK(smt_run({"train"}).code == cli::kExitUserError);  // --out is required
  CHECK(smt_run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("saliency writes a 16-bit map, metadata and a snapshot") {
  const fs::path dir = tmp_dir("saliency");
  const fs::path png = square_png(dir);
  const Result r = smt_run({"saliency", "--input", png.string(), "--out", dir.string()});
  REQUIRE(r.code == cli::kExitOk);
  int h = 0, w = 0;
  const auto counts = signal::load_gray16(dir / "square.saliency.png", h, w);
  CHECK(h == 32);
  CHECK(w == 32);
  CHECK(*std::max_element(counts.begin(), counts.end()) == 65535);
  const json meta = read_json(dir / "square.saliency.json");
  CHECK(meta["normalization"]["max"].get<double>() > 0);
  const json snap = read_json(dir / cli::kResolvedConfigFile);
  CHECK(snap["command"] == "saliency");
  CHECK(snap["config"]["saliency"]["tau"] == 0.01);
}

TEST_CASE("overrides reach the snapshot; bad overrides are user errors") {
  const fs::path dir = tmp_dir("override");
  const fs::path png = square_png(dir);
  REQUIRE(smt_run({"saliency", "--input", png.string(), "--out", dir.string(), "--override",
                   "saliency.tau=0.05"}).code == cli::kExitOk);
  CHECK(read_json(dir / cli::kResolvedConfigFile)["config"]["saliency"]["tau"] == 0.05);
  CHECK(smt_run({"saliency", "--input", png.string(), "--out", dir.string(), "--override",
                 "saliency.nope=1"}).code == cli::kExitUserError);
  CHECK(smt_run({"saliency", "--input", png.string(), "--out", dir.string(), "--override",
                 "saliency.sigma_center=5"}).code == cli::kExitUserError);

  std::ofstream(dir / "cfg.json") << R"({"saliency": {"tau": 0.2}})";
  REQUIRE(smt_run({"saliency", "--input", png.string(), "--out", dir.string(), "--config",
                   (dir / "cfg.json").string()}).code == cli::kExitOk);
  CHECK(read_json(dir / cli::kResolvedConfigFile)["config"]["saliency"]["tau"] == 0.2);
}

TEST_CASE("select lists the top patches") {
  const fs::path dir = tmp_dir("select");
  const fs::path png = square_png(dir);
  const Result r = smt_run({"select", "--input", png.string(), "--out", dir.string(), "--m", "5",
                            "--patch-size", "4", "--overlay", (dir / "overlay.png").string()});
  REQUIRE(r.code == cli::kExitOk);
  const json sel = read_json(dir / "square.selection.json");
  CHECK(sel["m"] == 5);
  CHECK(sel["grid_rows"] == 8);
  REQUIRE(sel["entries"].size() == 5);
  for (std::size_t i = 1; i < 5; ++i)
    CHECK(sel["entries"][i - 1]["score"].get<double>() >= sel["entries"][i]["score"].get<double>());
  CHECK(fs::exists(dir / "overlay.png"));
  CHECK(smt_run({"select", "--input", png.string(), "--out", dir.string(), "--m", "65", "--patch-size",
                 "4"}).code == cli::kExitUserError);
  CHECK(smt_run({"select", "--input", png.string(), "--out", dir.string(), "--patch-size", "5"}).code ==
        cli::kExitUserError);
}

TEST_CASE("train, describe and eval") {
  const fs::path dir = tmp_dir("train");
  std::vector<std::string> args = {"train", "--out", dir.string(), "--seed", "3"};
  args.insert(args.end(), kQuickTrain.begin(), kQuickTrain.end());
  REQUIRE(smt_run(args).code == cli::kExitOk);
  for (const char* f : {"best.ckpt", "last.ckpt", "metrics.csv", "metrics_epochs.csv", "summary.json",
                        cli::kResolvedConfigFile})
    CHECK(fs::exists(dir / f));
  CHECK(read_json(dir / cli::kResolvedConfigFile)["config"]["train"]["seed"] == 3);
  CHECK(slurp(dir / "metrics.csv").rfind("step,lr,loss\n", 0) == 0);

  const Result d = smt_run({"describe", "--checkpoint", (dir / "best.ckpt").string()});
  REQUIRE(d.code == cli::kExitOk);
  const json header = json::parse(d.out);
  CHECK(header["config"]["embed_dim"] == 64);
  CHECK(header["seed"] == 3);

  const fs::path ev = dir / "eval";
  REQUIRE(smt_run({"eval", "--checkpoint", (dir / "best.ckpt").string(), "--out", ev.string()}).code ==
          cli::kExitOk);
  const double acc = read_json(ev / "eval.json")["top1_accuracy"];
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(fs::exists(ev / cli::kResolvedConfigFile));

  CHECK(smt_run({"describe", "--checkpoint", (dir / "metrics.csv").string()}).code == cli::kExitUserError);
}

TEST_CASE("deterministic runs reproduce their checkpoints byte for byte") {
  const fs::path a = tmp_dir("det_a"), b = tmp_dir("det_b");
  for (const fs::path& d : {a, b}) {
    std::vector<std::string> args = {"train", "--out", d.string(), "--deterministic"};
    args.insert(args.end(), kQuickTrain.begin(), kQuickTrain.end());
    REQUIRE(smt_run(args).code == cli::kExitOk);
  }
  CHECK(slurp(a / "last.ckpt") == slurp(b / "last.ckpt"));
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
}

TEST_CASE("divergence is an internal error") {
  const fs::path dir = tmp_dir("diverge");
  std::vector<std::string> args = {"train", "--out", dir.string(), "--override", "train.base_lr=1e300",
                                   "--override", "train.clip_norm=0"};
  args.insert(args.end(), kQuickTrain.begin(), kQuickTrain.end());
  for (const char* o : {"train.epochs=4", "train.warmup_steps=1"}) {
    args.push_back("--override");
    args.push_back(o);
  }
  const Result r = smt_run(args);
  CHECK(r.code == cli::kExitInternalError);
  CHECK(r.err.find("error") != std::string::npos);
}

TEST_CASE("bench writes the cost report and csv") {
  const fs::path dir = tmp_dir("bench");
  const Result r = smt_run({"bench", "--preset", "base", "--out", dir.string(), "--csv",
                            (dir / "cost.csv").string(), "--repeats", "0"});
  REQUIRE(r.code == cli::kExitOk);
  const json rep = read_json(dir / "cost_report.json");
  CHECK(rep["memory_affine_r2"].get<double>() >= 0.99);
  std::istringstream csv(slurp(dir / "cost.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 5);

  const Result t = smt_run({"bench", "--preset", "desk", "--out", dir.string(), "--s", "4,8", "--batch",
                            "1", "--repeats", "5"});
  REQUIRE(t.code == cli::kExitOk);
  CHECK(smt_run({"bench", "--preset", "desk", "--out", dir.string(), "--s", "0"}).code ==
        cli::kExitUserError);
}

TEST_CASE("make-dataset writes class folders") {
  const fs::path dir = tmp_dir("dataset");
  REQUIRE(smt_run({"make-dataset", "--out", dir.string(), "--per-class", "2", "--size", "16", "--seed",
                   "4"}).code == cli::kExitOk);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) files += e.path().extension() == ".png";
  CHECK(files == 6);
  CHECK(fs::is_directory(dir / "disc"));
  CHECK(read_json(dir / cli::kResolvedConfigFile)["config"]["data"]["synthetic_seed"] == 4);
}
