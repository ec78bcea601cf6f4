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

#include <algorithm>
#include <random>
#include <set>

#include <doctest.h>

#include "smt/error.hpp"
#include "smt/patching.hpp"

using namespace smt;
using namespace smt::patching;

namespace {

// Brute force: stable sort of (score desc, index asc), then take the prefix.
std::vector<int> oracle_top(const Plane& scores, int m) {
  std::vector<std::pair<double, int>> v;
  for (int i = 0; i < scores.size(); ++i) v.push_back({-scores.data()[i], i});
  std::sort(v.begin(), v.end());
  std::vector<int> out;
  for (int k = 0; k < m; ++k) out.push_back(v[k].second);
  return out;
}

}  // namespace

TEST_CASE("uniform map gives equal patch sums") {
  const PatchScoreGrid g = patch_scores(Plane::Ones(224, 224), 16);
  CHECK(g.spec.grid_rows == 14);
  CHECK(g.spec.grid_cols == 14);
  CHECK((g.scores == 256.0).all());
}

TEST_CASE("a single bright pixel lands in its patch") {
  Plane m = Plane::Zero(12, 16);
  m(9, 5) = 2.5;
  const PatchScoreGrid g = patch_scores(m, 4);
  CHECK(g.scores(2, 1) == 2.5);
  CHECK(g.scores.sum() == 2.5);
  const PatchSelection s = select_top_m(g, 1);
  CHECK(s.entries[0].index == 2 * 4 + 1);
  CHECK(s.entries[0].coord == GridCoord{2, 1});
}

TEST_CASE("patch sums match a loop oracle") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  Plane m(15, 10);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  const PatchScoreGrid g = patch_scores(m, 5);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 2; ++c) {
      double s = 0;
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) s += m(r * 5 + y, c * 5 + x);
      CHECK(g.scores(r, c) == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("ties keep ascending index") {
  PatchScoreGrid g{PatchGridSpec{1, 2, 3}, Plane(2, 3)};
  g.scores << 1, 3, 1, 3, 0, 1;
  const PatchSelection s = select_top_m(g, 6);
  std::vector<int> idx;
  for (const auto& e : s.entries) idx.push_back(e.index);
  CHECK(idx == std::vector<int>{1, 3, 0, 2, 5, 4});
  const PatchSelection r = to_raster_order(select_top_m(g, 3));
  CHECK(r.entries[0].index == 0);
  CHECK(r.entries[1].index == 1);
  CHECK(r.entries[2].index == 3);
}

TEST_CASE("selection equals the brute-force oracle with many ties") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> level(0, 4), side(1, 7);
  for (int t = 0; t < 200; ++t) {
    const int rows = side(rng), cols = side(rng);
    PatchScoreGrid g{PatchGridSpec{2, rows, cols}, Plane(rows, cols)};
    for (Eigen::Index i = 0; i < g.scores.size(); ++i) g.scores.data()[i] = level(rng) * 0.5;
    for (int m = 1; m <= rows * cols; ++m) {
      const PatchSelection s = select_top_m(g, m);
      const std::vector<int> want = oracle_top(g.scores, m);
      REQUIRE(s.m() == m);
      for (int k = 0; k < m; ++k) {
        CHECK(s.entries[k].index == want[k]);
        CHECK(s.entries[k].coord == GridCoord{want[k] / cols, want[k] % cols});
        CHECK(s.entries[k].score == g.scores.data()[want[k]]);
      }
    }
  }
}

TEST_CASE("selections are nested prefixes with non-increasing scores") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  PatchScoreGrid g{PatchGridSpec{4, 6, 6}, Plane(6, 6)};
  for (Eigen::Index i = 0; i < g.scores.size(); ++i) g.scores.data()[i] = u(rng);
  const PatchSelection all = select_top_m(g, 36);
  std::set<int> seen;
  for (int k = 0; k < 36; ++k) {
    if (k > 0) CHECK(all.entries[k - 1].score >= all.entries[k].score);
    seen.insert(all.entries[k].index);
    const PatchSelection part = select_top_m(g, k + 1);
    CHECK(std::equal(part.entries.begin(), part.entries.end(), all.entries.begin()));
  }
  CHECK(seen.size() == 36);
}

TEST_CASE("extract_patches copies the right pixels") {
  RgbImage img(8, 12);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 12; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = y * 100 + x + c * 0.1;
  PatchSelection sel{PatchGridSpec{4, 2, 3}, {{5, {1, 2}, 0.0}, {0, {0, 0}, 0.0}}};
  const auto patches = extract_patches(img, sel, 4);
  REQUIRE(patches.size() == 2);
  CHECK(patches[0].coord == GridCoord{1, 2});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) {
        CHECK(patches[0].pixels[(y * 4 + x) * 3 + c] == img.at(4 + y, 8 + x, c));
        CHECK(patches[1].pixels[(y * 4 + x) * 3 + c] == img.at(y, x, c));
      }
}

TEST_CASE("all patches partition the image") {
  RgbImage img(6, 9);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = double(i);
  Plane ones = Plane::Ones(6, 9);
  const auto sel = select_top_m(patch_scores(ones, 3), 6);
  const auto patches = extract_patches(img, sel, 3);
  std::multiset<double> got(img.data.begin(), img.data.begin());
  for (const auto& p : patches) got.insert(p.pixels.begin(), p.pixels.end());
  CHECK(got == std::multiset<double>(img.data.begin(), img.data.end()));
}

TEST_CASE("count_for_fraction") {
  const PatchGridSpec spec{16, 14, 14};
  CHECK(count_for_fraction(spec, 0.25) == 49);
  CHECK(count_for_fraction(spec, 0.5) == 98);
  CHECK(count_for_fraction(spec, 1.0) == 196);
  CHECK(count_for_fraction(spec, 1e-6) == 1);
  CHECK_THROWS_AS(count_for_fraction(spec, 0.0), ParameterError);
  CHECK_THROWS_AS(count_for_fraction(spec, 1.5), ParameterError);
}

TEST_CASE("patching errors") {
  CHECK_THROWS_AS(patch_scores(Plane::Zero(10, 12), 4), ShapeError);
  CHECK_THROWS_AS(PatchGridSpec::for_image(8, 8, 0), ParameterError);
  const PatchScoreGrid g = patch_scores(Plane::Zero(8, 8), 4);
  CHECK_THROWS_AS(select_top_m(g, 0), ParameterError);
  CHECK_THROWS_AS(select_top_m(g, 5), ParameterError);
  PatchSelection bad{g.spec, {{9, {3, 0}, 0.0}}};
  CHECK_THROWS_AS(extract_patches(RgbImage(8, 8), bad, 4), ParameterError);
  CHECK_THROWS_AS(extract_patches(RgbImage(9, 8), bad, 4), ShapeError);
}
