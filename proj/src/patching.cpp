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

#include "smt/patching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "smt/error.hpp"

namespace smt::patching {

PatchGridSpec PatchGridSpec::for_image(int height, int width, int patch_size) {
  if (patch_size <= 0) throw ParameterError("patch size must be positive");
  if (height % patch_size != 0 || width % patch_size != 0) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by patch size " + std::to_string(patch_size));
  }
  return PatchGridSpec{patch_size, height / patch_size, width / patch_size};
}

PatchScoreGrid patch_scores(const Plane& map, int patch_size) {
  const auto spec = PatchGridSpec::for_image(static_cast<int>(map.rows()),
                                             static_cast<int>(map.cols()), patch_size);
  PatchScoreGrid grid{spec, Plane(spec.grid_rows, spec.grid_cols)};
  for (int r = 0; r < spec.grid_rows; ++r)
    for (int c = 0; c < spec.grid_cols; ++c)
      grid.scores(r, c) = map.block(r * patch_size, c * patch_size, patch_size, patch_size).sum();
  return grid;
}

PatchSelection select_top_m(const PatchScoreGrid& grid, int m) {
  const int total = grid.spec.count();
  if (m < 1 || m > total) {
    throw ParameterError("select_top_m: m = " + std::to_string(m) + " outside [1, " +
                         std::to_string(total) + "]");
  }
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  const double* s = grid.scores.data();
  auto before = [s](int a, int b) { return s[a] > s[b] || (s[a] == s[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + m, order.end(), before);

  PatchSelection sel{grid.spec, {}};
  sel.entries.reserve(m);
  for (int k = 0; k < m; ++k) {
    const int idx = order[k];
    sel.entries.push_back(
        {idx, {idx / grid.spec.grid_cols, idx % grid.spec.grid_cols}, s[idx]});
  }
  return sel;
}

PatchSelection to_raster_order(PatchSelection sel) {
  std::sort(sel.entries.begin(), sel.entries.end(),
            [](const PatchEntry& a, const PatchEntry& b) { return a.index < b.index; });
  return sel;
}

std::vector<Patch> extract_patches(const RgbImage& img, const PatchSelection& sel, int patch_size) {
  const auto spec = PatchGridSpec::for_image(img.height, img.width, patch_size);
  std::vector<Patch> out;
  out.reserve(sel.entries.size());
  for (const PatchEntry& e : sel.entries) {
    if (e.coord.row < 0 || e.coord.row >= spec.grid_rows || e.coord.col < 0 ||
        e.coord.col >= spec.grid_cols) {
      throw ParameterError("extract_patches: patch (" + std::to_string(e.coord.row) + ", " +
                           std::to_string(e.coord.col) + ") outside the grid");
    }
    Patch patch{std::vector<double>(static_cast<std::size_t>(patch_size) * patch_size * 3),
                e.coord};
    auto dst = patch.pixels.begin();
    for (int y = 0; y < patch_size; ++y) {
      const auto row_begin =
          img.data.begin() + static_cast<std::ptrdiff_t>(
                                 img.index(e.coord.row * patch_size + y, e.coord.col * patch_size, 0));
      dst = std::copy(row_begin, row_begin + patch_size * 3, dst);
    }
    out.push_back(std::move(patch));
  }
  return out;
}

int count_for_fraction(const PatchGridSpec& spec, double fraction) {
  if (!(fraction > 0) || fraction > 1) throw ParameterError("selection fraction must be in (0, 1]");
  const int m = static_cast<int>(std::lround(fraction * spec.count()));
  return std::clamp(m, 1, spec.count());
}

}  // namespace smt::patching
