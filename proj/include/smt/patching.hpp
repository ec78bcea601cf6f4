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

#include <vector>

#include "smt/saliency.hpp"
#include "smt/signal.hpp"

namespace smt::patching {

struct GridCoord {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

struct PatchGridSpec {
  int patch_size = 16;
  int grid_rows = 0;
  int grid_cols = 0;

  int count() const { return grid_rows * grid_cols; }
  /// Throws ShapeError unless both dimensions are multiples of `patch_size`.
  static PatchGridSpec for_image(int height, int width, int patch_size);
};

struct PatchScoreGrid {
  PatchGridSpec spec;
  Plane scores;  // grid_rows x grid_cols
};

struct PatchEntry {
  int index = 0;  // row-major
  GridCoord coord;
  double score = 0.0;
  friend bool operator==(const PatchEntry&, const PatchEntry&) = default;
};

enum class FeedOrder {
  kScoreDescending,
  kRaster,
};

/// Ordered top-m patches. Scores are non-increasing; equal scores keep
/// ascending row-major index.
struct PatchSelection {
  PatchGridSpec spec;
  std::vector<PatchEntry> entries;

  int m() const { return static_cast<int>(entries.size()); }
};

struct Patch {
  std::vector<double> pixels;  // p*p*3, row-major, channel-interleaved
  GridCoord coord;
};

PatchScoreGrid patch_scores(const Plane& map, int patch_size);
inline PatchScoreGrid patch_scores(const saliency::SaliencyMap& map, int patch_size) {
  return patch_scores(map.values, patch_size);
}

PatchSelection select_top_m(const PatchScoreGrid& grid, int m);

/// Same entries reordered by ascending row-major index.
PatchSelection to_raster_order(PatchSelection sel);

std::vector<Patch> extract_patches(const RgbImage& img, const PatchSelection& sel, int patch_size);

/// m for a fraction of the grid, rounded to nearest and clamped to [1, count].
int count_for_fraction(const PatchGridSpec& spec, double fraction);

}  // namespace smt::patching
