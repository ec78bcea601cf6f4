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

#include "smt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "smt/error.hpp"

namespace smt::model {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

struct RawHeader {
  json header;
  std::streamoff data_offset = 0;
};

RawHeader read_raw_header(std::ifstream& is, const std::filesystem::path& path) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  std::uint64_t len = 0;
  if (!is.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1u << 30)) {
    throw FormatError("'" + path.string() + "': truncated checkpoint header");
  }
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) {
    throw FormatError("'" + path.string() + "': truncated checkpoint header");
  }
  RawHeader raw;
  try {
    raw.header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "': header is not valid JSON: " + e.what());
  }
  raw.data_offset = static_cast<std::streamoff>(16 + len);
  return raw;
}

}  // namespace

json to_json(const ModelConfig& cfg) {
  return json{{"input_size", cfg.input_size}, {"patch_size", cfg.patch_size},
              {"embed_dim", cfg.embed_dim},   {"num_heads", cfg.num_heads},
              {"depth", cfg.depth},           {"mlp_dim", cfg.mlp_dim},
              {"num_classes", cfg.num_classes}, {"dropout_rate", cfg.dropout_rate}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig base) {
  if (!j.is_object()) throw ParameterError("model config must be a JSON object");
  static const std::set<std::string> known = {"input_size", "patch_size", "embed_dim",
                                              "num_heads",  "depth",      "mlp_dim",
                                              "num_classes", "dropout_rate"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ParameterError("unknown model config key '" + key + "'");
  }
  try {
    base.input_size = j.value("input_size", base.input_size);
    base.patch_size = j.value("patch_size", base.patch_size);
    base.embed_dim = j.value("embed_dim", base.embed_dim);
    base.num_heads = j.value("num_heads", base.num_heads);
    base.depth = j.value("depth", base.depth);
    base.mlp_dim = j.value("mlp_dim", base.mlp_dim);
    base.num_classes = j.value("num_classes", base.num_classes);
    base.dropout_rate = j.value("dropout_rate", base.dropout_rate);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("model config: ") + e.what());
  }
  return base;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const CheckpointHeader& header) {
  json tensors = json::array();
  for_each_tensor(params, [&](const std::string& name, const Matrix& m, TensorKind) {
    tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
  });
  const json h{{"format", "smt-checkpoint"}, {"version", 1},
               {"config", to_json(header.config)}, {"seed", header.seed},
               {"step", header.step}, {"dtype", "float64-le"},
               {"tensors", tensors}, {"extra", header.extra}};
  const std::string text = h.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint '" + path.string() + "'");
  os.write(kCheckpointMagic, 8);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for_each_tensor(params, [&](const std::string&, const Matrix& m, TensorKind) {
    // Row-major on disk; Eigen stores column-major.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    os.write(reinterpret_cast<const char*>(rm.data()),
             static_cast<std::streamsize>(rm.size() * sizeof(double)));
  });
  if (!os) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint '" + path.string() + "'");
  return read_raw_header(is, path).header;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint '" + path.string() + "'");
  const RawHeader raw = read_raw_header(is, path);
  const json& h = raw.header;
  Checkpoint ck;
  try {
    ck.header.config = model_config_from_json(h.at("config"));
    ck.header.seed = h.at("seed").get<std::uint64_t>();
    ck.header.step = h.at("step").get<std::int64_t>();
    ck.header.extra = h.value("extra", json::object());
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "': malformed header: " + e.what());
  }
  ck.header.config.validate();
  ck.params = init_params(ck.header.config, 0);
  const json& tensors = h.at("tensors");
  std::size_t i = 0;
  for_each_tensor(ck.params, [&](const std::string& name, Matrix& m, TensorKind) {
    if (i >= tensors.size() || tensors[i].at("name") != name ||
        tensors[i].at("shape")[0] != m.rows() || tensors[i].at("shape")[1] != m.cols()) {
      throw FormatError("'" + path.string() + "': tensor table does not match config at '" +
                        name + "'");
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m.rows(), m.cols());
    if (!is.read(reinterpret_cast<char*>(rm.data()),
                 static_cast<std::streamsize>(rm.size() * sizeof(double)))) {
      throw FormatError("'" + path.string() + "': truncated tensor data at '" + name + "'");
    }
    m = rm;
    ++i;
  });
  if (i != tensors.size()) throw FormatError("'" + path.string() + "': extra tensors in table");
  return ck;
}

}  // namespace smt::model
