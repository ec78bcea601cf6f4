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
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>

#include "smt/error.hpp"
#include "smt/training.hpp"

namespace smt::training {
namespace {

namespace fs = std::filesystem;
using Point = std::array<double, 2>;

// Uniform in [lo, hi) from the raw generator, independent of the standard
// library's distribution implementations.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

double cross(const Point& o, const Point& a, const Point& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

bool inside_triangle(const Point& p, const std::vector<Point>& t) {
  const double d1 = cross(t[0], t[1], p);
  const double d2 = cross(t[1], t[2], p);
  const double d3 = cross(t[2], t[0], p);
  const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(neg && pos);
}

struct Shape {
  int label = 0;
  std::vector<Point> corners;  // rectangle / triangle vertices
  Point center{};
  double radius = 0.0;         // disc

  bool contains(const Point& p) const {
    switch (label) {
      case 0:
        return p[0] >= corners[0][0] && p[0] < corners[2][0] && p[1] >= corners[0][1] &&
               p[1] < corners[2][1];
      case 1:
        return inside_triangle(p, corners);
      default: {
        const double dx = p[0] - center[0];
        const double dy = p[1] - center[1];
        return dx * dx + dy * dy < radius * radius;
      }
    }
  }
};

Shape random_shape(int label, double size, std::mt19937_64& rng) {
  const double margin = 2.0;
  Shape s;
  s.label = label;
  if (label == 0) {
    const double w = uniform(rng, 0.3, 0.6) * size;
    const double h = uniform(rng, 0.3, 0.6) * size;
    const double x0 = uniform(rng, margin, size - margin - w);
    const double y0 = uniform(rng, margin, size - margin - h);
    // Pixel-aligned so the vertices are sharp.
    const double ax = std::round(x0), ay = std::round(y0);
    const double bx = std::round(x0 + w), by = std::round(y0 + h);
    s.corners = {{ax, ay}, {bx, ay}, {bx, by}, {ax, by}};
  } else if (label == 1) {
    const double r = uniform(rng, 0.22, 0.34) * size;
    const double cx = uniform(rng, margin + r, size - margin - r);
    const double cy = uniform(rng, margin + r, size - margin - r);
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (int k = 0; k < 3; ++k) {
      const double a = theta + k * 2.0 * std::numbers::pi / 3.0 + uniform(rng, -0.35, 0.35);
      s.corners.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
    }
  } else {
    s.radius = uniform(rng, 0.2, 0.34) * size;
    s.center = {uniform(rng, margin + s.radius, size - margin - s.radius),
                uniform(rng, margin + s.radius, size - margin - s.radius)};
  }
  return s;
}

RgbImage render(const Shape& shape, int size, std::mt19937_64& rng) {
  std::array<double, 3> base{}, fg{};
  for (double& c : base) c = uniform(rng, 0.3, 0.7);
  // Shapes are always lighter than the background.
  for (int c = 0; c < 3; ++c) fg[c] = std::clamp(base[c] + uniform(rng, 0.25, 0.4), 0.0, 1.0);

  // Smooth texture: two low-frequency plane waves with per-channel gains.
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::array<Wave, 2> waves{};
  for (Wave& w : waves) {
    const double period = uniform(rng, 12.0, 32.0);
    const double angle = uniform(rng, 0.0, std::numbers::pi);
    w = {2.0 * std::numbers::pi * std::cos(angle) / period,
         2.0 * std::numbers::pi * std::sin(angle) / period, uniform(rng, 0.0, 6.3),
         uniform(rng, 0.02, 0.05)};
  }
  std::array<double, 3> gain{};
  for (double& g : gain) g = uniform(rng, 0.5, 1.0);

  constexpr int kSuper = 4;
  RgbImage img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx)
          hits += shape.contains({x + (sx + 0.5) / kSuper, y + (sy + 0.5) / kSuper});
      const double cover = static_cast<double>(hits) / (kSuper * kSuper);
      double tex = 0.0;
      for (const Wave& w : waves) tex += w.amp * std::sin(w.kx * (x + 0.5) + w.ky * (y + 0.5) + w.phase);
      const double noise = uniform(rng, -0.015, 0.015);
      for (int c = 0; c < 3; ++c) {
        const double bg = base[c] + gain[c] * tex + noise;
        const double v = std::clamp((1.0 - cover) * bg + cover * fg[c], 0.0, 1.0);
        img.at(y, x, c) = std::round(v * 255.0) / 255.0;
      }
    }
  }
  return img;
}

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

}  // namespace

void Dataset::validate() const {
  if (items.empty()) throw ParameterError("dataset is empty");
  if (class_names.empty()) throw ParameterError("dataset has no classes");
  std::vector<bool> seen(class_names.size(), false);
  for (const Item& it : items) {
    if (it.label < 0 || it.label >= num_classes()) {
      throw ParameterError("dataset label " + std::to_string(it.label) + " out of range");
    }
    seen[it.label] = true;
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw ParameterError("dataset labels are not dense: some class has no items");
  }
}

Dataset load_folder_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("dataset root '" + root.string() + "' is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  Dataset ds;
  for (const fs::path& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && is_png(e.path())) files.push_back(e.path());
    if (files.empty()) continue;
    std::sort(files.begin(), files.end());
    const int label = ds.num_classes();
    ds.class_names.push_back(dir.filename().string());
    for (auto& f : files) ds.items.push_back(Item{std::move(f), std::nullopt, label, {}});
  }
  ds.validate();
  return ds;
}

Dataset make_synthetic_dataset(int num_per_class, int image_size, std::uint64_t seed) {
  if (num_per_class <= 0) throw ParameterError("synthetic dataset: num_per_class must be positive");
  if (image_size < 16) throw ParameterError("synthetic dataset: image_size must be at least 16");
  Dataset ds;
  ds.class_names = synthetic_class_names();
  const int classes = ds.num_classes();
  std::mt19937_64 rng(seed);
  for (int i = 0; i < num_per_class * classes; ++i) {
    const int label = i % classes;
    const Shape shape = random_shape(label, image_size, rng);
    Item item;
    item.label = label;
    item.image = render(shape, image_size, rng);
    item.corners = shape.corners;
    ds.items.push_back(std::move(item));
  }
  return ds;
}

void write_dataset(const Dataset& ds, const fs::path& root) {
  std::vector<int> counters(ds.class_names.size(), 0);
  for (const std::string& name : ds.class_names) fs::create_directories(root / name);
  for (const Item& it : ds.items) {
    const std::string& name = ds.class_names.at(it.label);
    char file[64];
    std::snprintf(file, sizeof(file), "%s_%05d.png", name.c_str(), counters[it.label]++);
    signal::save_rgb8(root / name / file, load_item(it, it.image ? it.image->height : 0));
  }
}

RgbImage load_item(const Item& item, int image_size) {
  RgbImage img = item.image ? *item.image : signal::load_image(item.path);
  if (image_size <= 0 || (img.height == image_size && img.width == image_size)) return img;
  return signal::resize_bilinear(img, image_size, image_size);
}

}  // namespace smt::training
