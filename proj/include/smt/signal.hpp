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

#include <complex>
#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace smt {

/// Row-major real 2D array. Row index is y, column index is x.
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexPlane =
    Eigen::Array<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-channel image, nominally in [0,1].
struct LuminanceImage {
  Plane pixels;

  LuminanceImage() = default;
  explicit LuminanceImage(Plane p) : pixels(std::move(p)) {}
  LuminanceImage(int height, int width, double fill = 0.0)
      : pixels(Plane::Constant(height, width, fill)) {}

  int height() const { return static_cast<int>(pixels.rows()); }
  int width() const { return static_cast<int>(pixels.cols()); }
  double operator()(int y, int x) const { return pixels(y, x); }
  double& operator()(int y, int x) { return pixels(y, x); }
};

/// Three-channel image with interleaved (y, x, c) storage, values in [0,1].
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  RgbImage() = default;
  RgbImage(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

  double at(int y, int x, int c) const { return data[index(y, x, c)]; }
  double& at(int y, int x, int c) { return data[index(y, x, c)]; }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * 3 + c;
  }
};

/// Spectrum with the zero frequency at element (rows/2, cols/2).
struct Spectrum {
  ComplexPlane values;
};

/// Centered polar frequency coordinates in cycles/pixel.
struct PolarFreqGrid {
  Plane r;
  Plane phi;
  int height() const { return static_cast<int>(r.rows()); }
  int width() const { return static_cast<int>(r.cols()); }
};

/// Extra rows/columns added on each side before frequency-domain filtering.
struct Padding {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
};

enum class Boundary {
  /// Mirror the image into one full even-symmetric period (2h x 2w).
  kReflect,
  /// Filter on the image's own periodic domain.
  kPeriodic,
};

namespace signal {

// --- Image I/O -------------------------------------------------------------

/// Reads an 8-bit gray, gray+alpha, RGB, RGBA or palette PNG. Alpha is
/// dropped; gray is replicated to three channels. 16-bit files are rejected.
RgbImage load_image(const std::filesystem::path& path);

void save_rgb8(const std::filesystem::path& path, const RgbImage& img);
void save_gray8(const std::filesystem::path& path, const Plane& values01);

/// Writes a 16-bit grayscale PNG; `values01` is clamped to [0,1] and scaled
/// to 0..65535 with rounding.
void save_gray16(const std::filesystem::path& path, const Plane& values01);

/// Reads a 16-bit grayscale PNG written by save_gray16 back as raw counts.
std::vector<std::uint16_t> load_gray16(const std::filesystem::path& path,
                                       int& height, int& width);

// --- Pixel utilities -------------------------------------------------------

/// Rec.601 weights 0.299, 0.587, 0.114.
LuminanceImage to_luminance(const RgbImage& img);

/// Bilinear resampling with pixel-center alignment.
RgbImage resize_bilinear(const RgbImage& img, int height, int width);

/// Throws ParameterError on any non-finite pixel.
void require_finite(const Plane& p, const char* what);

// --- Fourier utilities -----------------------------------------------------

/// Forward 2D DFT, returned zero-frequency centered.
Spectrum fft2(const Plane& img);

/// Inverse of fft2 for spectra of real signals. Throws NumericalError when
/// the discarded imaginary part exceeds 1e-8 x max |real part|. Residues
/// below 1e-12 x `reference_scale` (the magnitude of the signal before
/// filtering) are always accepted.
Plane ifft2_real(const Spectrum& spec, double reference_scale = 0.0);

/// Frequency coordinates f = (k - n/2)/n on an n-point axis.
std::vector<double> centered_frequencies(int n);

PolarFreqGrid polar_grid(int height, int width);

/// Replaces T(f) by (T(f) + conj(T(-f)))/2 on a centered grid, where -f is
/// taken modulo the grid. Only Nyquist bins change for transfer functions
/// that are already Hermitian elsewhere.
ComplexPlane hermitian_symmetrize(const ComplexPlane& tf);

Padding padding_for(int height, int width, Boundary boundary);

/// Half-sample symmetric extension; works for any pad width.
Plane reflect_pad(const Plane& img, const Padding& pad);
Plane crop(const Plane& img, const Padding& pad);

/// Pads, multiplies the centered spectrum by `tf`, inverts and crops.
/// `tf` must have the padded shape.
Plane filter_frequency(const Plane& img, const ComplexPlane& tf, Boundary boundary);

/// Several transfer functions sharing one forward transform.
std::vector<Plane> filter_frequency(const Plane& img, const std::vector<const ComplexPlane*>& tfs,
                                    Boundary boundary);

// --- Smoothing -------------------------------------------------------------

/// Discrete-domain transfer function of the unit-sum sampled Gaussian on a
/// centered n-point frequency axis.
std::vector<double> gaussian_transfer_1d(int n, double sigma);

/// Unit-DC-gain Gaussian blur computed in the frequency domain.
LuminanceImage gaussian_blur(const LuminanceImage& img, double sigma,
                             Boundary boundary = Boundary::kReflect);

}  // namespace signal
}  // namespace smt
