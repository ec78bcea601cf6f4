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
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>

#include <png.h>

#include "smt/error.hpp"
#include "smt/signal.hpp"

namespace smt::signal {
namespace {

// Owns a png_image and releases libpng's read state on every exit path.
struct PngImage {
  png_image image;
  PngImage() {
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
  std::string message() const { return image.message; }
};

void begin_read(PngImage& png, const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw IoError("cannot read '" + path.string() + "': not a readable file");
  }
  if (png_image_begin_read_from_file(&png.image, path.c_str()) == 0) {
    throw IoError("cannot read '" + path.string() + "': " + png.message());
  }
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write(const std::filesystem::path& path, PngImage& png, const void* buffer) {
  if (png_image_write_to_file(&png.image, path.c_str(), 0, buffer, 0, nullptr) == 0) {
    throw IoError("cannot write '" + path.string() + "': " + png.message());
  }
}

}  // namespace

RgbImage load_image(const std::filesystem::path& path) {
  PngImage png;
  begin_read(png, path);
  if (png.image.format & PNG_FORMAT_FLAG_LINEAR) {
    throw FormatError("'" + path.string() + "': 16-bit PNGs are not supported");
  }
  png.image.format = PNG_FORMAT_RGB;
  const int h = static_cast<int>(png.image.height);
  const int w = static_cast<int>(png.image.width);
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png.image));
  if (png_image_finish_read(&png.image, nullptr, buf.data(), 0, nullptr) == 0) {
    throw FormatError("cannot decode '" + path.string() + "': " + png.message());
  }
  RgbImage out(h, w);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = buf[i] / 255.0;
  return out;
}

void save_rgb8(const std::filesystem::path& path, const RgbImage& img) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(img.width);
  png.image.height = static_cast<png_uint_32>(img.height);
  png.image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(img.data.size());
  std::transform(img.data.begin(), img.data.end(), buf.begin(), to_byte);
  write(path, png, buf.data());
}

void save_gray8(const std::filesystem::path& path, const Plane& values01) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(values01.cols());
  png.image.height = static_cast<png_uint_32>(values01.rows());
  png.image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(values01.size());
  std::transform(values01.data(), values01.data() + values01.size(), buf.begin(), to_byte);
  write(path, png, buf.data());
}

void save_gray16(const std::filesystem::path& path, const Plane& values01) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(values01.cols());
  png.image.height = static_cast<png_uint_32>(values01.rows());
  // Linear 16-bit: samples are stored verbatim.
  png.image.format = PNG_FORMAT_LINEAR_Y;
  std::vector<std::uint16_t> buf(values01.size());
  std::transform(values01.data(), values01.data() + values01.size(), buf.begin(), [](double v) {
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
  });
  write(path, png, buf.data());
}

std::vector<std::uint16_t> load_gray16(const std::filesystem::path& path, int& height,
                                       int& width) {
  PngImage png;
  begin_read(png, path);
  if (!(png.image.format & PNG_FORMAT_FLAG_LINEAR) || (png.image.format & PNG_FORMAT_FLAG_COLOR)) {
    throw FormatError("'" + path.string() + "' is not a 16-bit grayscale PNG");
  }
  png.image.format = PNG_FORMAT_LINEAR_Y;
  height = static_cast<int>(png.image.height);
  width = static_cast<int>(png.image.width);
  std::vector<std::uint16_t> buf(PNG_IMAGE_SIZE(png.image) / sizeof(std::uint16_t));
  if (png_image_finish_read(&png.image, nullptr, buf.data(), 0, nullptr) == 0) {
    throw FormatError("cannot decode '" + path.string() + "': " + png.message());
  }
  return buf;
}

}  // namespace smt::signal
