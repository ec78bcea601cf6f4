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

#include "smt/signal.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

#include <fftw3.h>

#include "smt/error.hpp"

namespace smt::signal {
namespace {

// The FFTW planner is not reentrant; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void run_dft(const ComplexPlane& in, ComplexPlane& out, int sign) {
  const int rows = static_cast<int>(in.rows());
  const int cols = static_cast<int>(in.cols());
  out.resize(rows, cols);
  auto* src = reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data()));
  auto* dst = reinterpret_cast<fftw_complex*>(out.data());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_2d(rows, cols, src, dst, sign, FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw NumericalError("fftw: could not create plan");
  fftw_execute_dft(plan, src, dst);
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(plan);
}

int wrap(int i, int n) { return ((i % n) + n) % n; }

// raw (origin at 0) -> centered (origin at n/2)
ComplexPlane fftshift(const ComplexPlane& raw) {
  const int h = static_cast<int>(raw.rows());
  const int w = static_cast<int>(raw.cols());
  ComplexPlane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(wrap(y + h / 2, h), wrap(x + w / 2, w)) = raw(y, x);
  return out;
}

ComplexPlane ifftshift(const ComplexPlane& centered) {
  const int h = static_cast<int>(centered.rows());
  const int w = static_cast<int>(centered.cols());
  ComplexPlane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(wrap(y - h / 2, h), wrap(x - w / 2, w)) = centered(y, x);
  return out;
}

// Index into a half-sample symmetric extension of [0, n).
int mirror_index(int i, int n) {
  const int period = 2 * n;
  int k = wrap(i, period);
  return k < n ? k : period - 1 - k;
}

}  // namespace

LuminanceImage to_luminance(const RgbImage& img) {
  LuminanceImage out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
  return out;
}

RgbImage resize_bilinear(const RgbImage& img, int height, int width) {
  if (height <= 0 || width <= 0) throw ParameterError("resize: target size must be positive");
  if (img.height == height && img.width == width) return img;
  RgbImage out(height, width);
  const double sy = static_cast<double>(img.height) / height;
  const double sx = static_cast<double>(img.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bot = (1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = (1 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

void require_finite(const Plane& p, const char* what) {
  if (!p.allFinite()) throw ParameterError(std::string(what) + ": non-finite value");
}

Spectrum fft2(const Plane& img) {
  ComplexPlane in = img.cast<std::complex<double>>();
  ComplexPlane out;
  run_dft(in, out, FFTW_FORWARD);
  return Spectrum{fftshift(out)};
}

Plane ifft2_real(const Spectrum& spec, double reference_scale) {
  ComplexPlane raw = ifftshift(spec.values);
  ComplexPlane out;
  run_dft(raw, out, FFTW_BACKWARD);
  out /= static_cast<double>(out.size());
  Plane re = out.real();
  const double re_max = re.abs().maxCoeff();
  const double im_max = out.imag().abs().maxCoeff();
  // Outputs that cancel to roundoff level (e.g. a zero-DC filter on a
  // constant image) are judged against the scale of the filtered input.
  if (im_max > 1e-8 * re_max && im_max > 1e-12 * reference_scale) {
    throw NumericalError("ifft2_real: imaginary residue " + std::to_string(im_max) +
                         " exceeds tolerance (real max " + std::to_string(re_max) + ")");
  }
  return re;
}

std::vector<double> centered_frequencies(int n) {
  std::vector<double> f(n);
  for (int k = 0; k < n; ++k) f[k] = static_cast<double>(k - n / 2) / n;
  return f;
}

PolarFreqGrid polar_grid(int height, int width) {
  if (height < 2 || width < 2) throw ParameterError("polar_grid: size must be at least 2x2");
  const auto fy = centered_frequencies(height);
  const auto fx = centered_frequencies(width);
  PolarFreqGrid g{Plane(height, width), Plane(height, width)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      g.r(y, x) = std::hypot(fx[x], fy[y]);
      g.phi(y, x) = std::atan2(fy[y], fx[x]);
    }
  }
  return g;
}

ComplexPlane hermitian_symmetrize(const ComplexPlane& tf) {
  const int h = static_cast<int>(tf.rows());
  const int w = static_cast<int>(tf.cols());
  ComplexPlane out(h, w);
  for (int y = 0; y < h; ++y) {
    // Centered index y has offset y - h/2; its negation sits at h/2 - (y - h/2).
    const int ny = wrap(h / 2 - (y - h / 2), h);
    for (int x = 0; x < w; ++x) {
      const int nx = wrap(w / 2 - (x - w / 2), w);
      out(y, x) = 0.5 * (tf(y, x) + std::conj(tf(ny, nx)));
    }
  }
  return out;
}

Padding padding_for(int height, int width, Boundary boundary) {
  if (boundary == Boundary::kPeriodic) return {};
  return Padding{height / 2, height - height / 2, width / 2, width - width / 2};
}

Plane reflect_pad(const Plane& img, const Padding& pad) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  Plane out(h + pad.top + pad.bottom, w + pad.left + pad.right);
  for (int y = 0; y < out.rows(); ++y) {
    const int sy = mirror_index(y - pad.top, h);
    for (int x = 0; x < out.cols(); ++x) out(y, x) = img(sy, mirror_index(x - pad.left, w));
  }
  return out;
}

Plane crop(const Plane& img, const Padding& pad) {
  const auto h = img.rows() - pad.top - pad.bottom;
  const auto w = img.cols() - pad.left - pad.right;
  return img.block(pad.top, pad.left, h, w);
}

std::vector<Plane> filter_frequency(const Plane& img, const std::vector<const ComplexPlane*>& tfs,
                                    Boundary boundary) {
  const Padding pad = padding_for(static_cast<int>(img.rows()), static_cast<int>(img.cols()), boundary);
  const Plane padded = boundary == Boundary::kReflect ? reflect_pad(img, pad) : img;
  const Spectrum spec = fft2(padded);
  const double scale = padded.abs().maxCoeff();
  std::vector<Plane> out;
  out.reserve(tfs.size());
  for (const ComplexPlane* tf : tfs) {
    if (tf->rows() != spec.values.rows() || tf->cols() != spec.values.cols()) {
      throw ShapeError("filter_frequency: transfer function is " + std::to_string(tf->rows()) +
                       "x" + std::to_string(tf->cols()) + ", padded image is " +
                       std::to_string(spec.values.rows()) + "x" +
                       std::to_string(spec.values.cols()));
    }
    out.push_back(crop(ifft2_real(Spectrum{spec.values * *tf}, scale), pad));
  }
  return out;
}

Plane filter_frequency(const Plane& img, const ComplexPlane& tf, Boundary boundary) {
  return std::move(filter_frequency(img, {&tf}, boundary).front());
}

std::vector<double> gaussian_transfer_1d(int n, double sigma) {
  if (!(sigma > 0)) throw ParameterError("gaussian blur: sigma must be positive");
  // Periodic sum over aliases: the DTFT of the sampled kernel. Terms beyond
  // exp(-40) are dropped.
  const double a = 2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma;
  const int terms = static_cast<int>(std::ceil(std::sqrt(40.0 / a) + 1.0));
  auto periodic = [&](double f) {
    double s = 0.0;
    for (int j = -terms; j <= terms; ++j) s += std::exp(-a * (f + j) * (f + j));
    return s;
  };
  const double dc = periodic(0.0);
  std::vector<double> t(n);
  const auto f = centered_frequencies(n);
  for (int k = 0; k < n; ++k) t[k] = periodic(f[k]) / dc;
  return t;
}

LuminanceImage gaussian_blur(const LuminanceImage& img, double sigma, Boundary boundary) {
  if (!(sigma > 0)) throw ParameterError("gaussian blur: sigma must be positive");
  const Padding pad = padding_for(img.height(), img.width(), boundary);
  const int ph = img.height() + pad.top + pad.bottom;
  const int pw = img.width() + pad.left + pad.right;
  const auto ty = gaussian_transfer_1d(ph, sigma);
  const auto tx = gaussian_transfer_1d(pw, sigma);
  ComplexPlane tf(ph, pw);
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x) tf(y, x) = ty[y] * tx[x];
  return LuminanceImage(filter_frequency(img.pixels, tf, boundary));
}

}  // namespace smt::signal
