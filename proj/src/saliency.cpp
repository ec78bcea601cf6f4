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

#include "smt/saliency.hpp"

#include <complex>
#include <string>
#include <vector>

#include "smt/error.hpp"

namespace smt::saliency {
namespace {

using namespace std::complex_literals;

void require_same_shape(const LuminanceImage& a, const LuminanceImage& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(what) + ": operand shapes differ");
  }
}

std::complex<double> i_pow(int n) {
  switch (((n % 4) + 4) % 4) {
    case 0: return 1.0;
    case 1: return 1i;
    case 2: return -1.0;
    default: return -1i;
  }
}

int mirror(int i, int n) {
  const int period = 2 * n;
  int k = ((i % period) + period) % period;
  return k < n ? k : period - 1 - k;
}

// Separable direct convolution with the sampled, unit-sum Gaussian.
Plane spatial_gaussian(const Plane& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(8.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  Plane tmp(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img(y, mirror(x + i, w));
      tmp(y, x) = acc;
    }
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(mirror(y + i, h), x);
      out(y, x) = acc;
    }
  return out;
}

}  // namespace

void RogParams::validate() const {
  if (!(sigma_center > 0) || !(sigma_surround > sigma_center)) {
    throw ParameterError("rog: require 0 < sigma_center < sigma_surround");
  }
  if (!(tau >= 0)) throw ParameterError("rog: tau must be >= 0");
}

void CurvatureParams::validate() const {
  if (n < 1) throw ParameterError("curvature: n must be >= 1");
  if (!(sigma_r > 0)) throw ParameterError("curvature: sigma_r must be > 0");
}

double radial_gain(double r, double sigma_r) {
  const double w = 2.0 * std::numbers::pi * r;
  return w * w * std::exp(-std::numbers::pi * r * r / (sigma_r * sigma_r));
}

LuminanceImage rog_contrast(const LuminanceImage& img, const RogParams& p, Boundary boundary) {
  p.validate();
  signal::require_finite(img.pixels, "rog_contrast");
  if ((img.pixels < 0).any()) throw ParameterError("rog_contrast: negative luminance");
  const LuminanceImage center = signal::gaussian_blur(img, p.sigma_center, boundary);
  const LuminanceImage surround = signal::gaussian_blur(img, p.sigma_surround, boundary);
  const Plane denom = surround.pixels + p.tau;
  if (p.tau == 0.0 && (denom == 0.0).any()) {
    throw ParameterError("rog_contrast: zero denominator with tau = 0");
  }
  return LuminanceImage(center.pixels / denom);
}

FilterBank build_filter_bank(const PolarFreqGrid& grid, const CurvatureParams& cp) {
  cp.validate();
  const int h = grid.height();
  const int w = grid.width();
  FilterBank fb{ComplexPlane(h, w), ComplexPlane(h, w), ComplexPlane(h, w), cp};
  const std::complex<double> phase = i_pow(cp.n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = radial_gain(grid.r(y, x), cp.sigma_r);
      const double phi = grid.phi(y, x);
      fb.laplace_tf(y, x) = g;
      fb.cos_tf(y, x) = phase * (std::cos(cp.n * phi) * g);
      fb.sin_tf(y, x) = phase * (std::sin(cp.n * phi) * g);
    }
  }
  // Nyquist rows/columns have no negative-frequency partner on an even
  // grid; symmetrizing there keeps the spatial responses real.
  fb.cos_tf = signal::hermitian_symmetrize(fb.cos_tf);
  fb.sin_tf = signal::hermitian_symmetrize(fb.sin_tf);
  return fb;
}

FilterBank filter_bank_for(int height, int width, const CurvatureParams& cp, Boundary boundary) {
  const Padding pad = signal::padding_for(height, width, boundary);
  return build_filter_bank(
      signal::polar_grid(height + pad.top + pad.bottom, width + pad.left + pad.right), cp);
}

FilterResponses apply_filter_bank(const LuminanceImage& contrast, const FilterBank& fb,
                                  Boundary boundary) {
  signal::require_finite(contrast.pixels, "apply_filter_bank");
  const Padding pad = signal::padding_for(contrast.height(), contrast.width(), boundary);
  if (contrast.height() + pad.top + pad.bottom != fb.height() ||
      contrast.width() + pad.left + pad.right != fb.width()) {
    throw ShapeError("apply_filter_bank: filter bank does not match the image shape");
  }
  auto out = signal::filter_frequency(contrast.pixels, {&fb.laplace_tf, &fb.cos_tf, &fb.sin_tf},
                                      boundary);
  return FilterResponses{LuminanceImage(std::move(out[0])), LuminanceImage(std::move(out[1])),
                         LuminanceImage(std::move(out[2]))};
}

LuminanceImage eccentricity(const LuminanceImage& c_resp, const LuminanceImage& s_resp) {
  require_same_shape(c_resp, s_resp, "eccentricity");
  return LuminanceImage((c_resp.pixels.square() + s_resp.pixels.square()).sqrt());
}

LuminanceImage curvature(const LuminanceImage& laplace, const LuminanceImage& ecc) {
  require_same_shape(laplace, ecc, "curvature");
  return LuminanceImage(laplace.pixels.square() - ecc.pixels.square());
}

SaliencyMap curvature_abs(const LuminanceImage& d, const RogParams& rp, const CurvatureParams& cp) {
  return SaliencyMap{d.pixels.abs(), rp, cp};
}

SaliencyMap saliency_map(const LuminanceImage& img, const RogParams& rp, const CurvatureParams& cp,
                         Boundary boundary) {
  const LuminanceImage contrast = rog_contrast(img, rp, boundary);
  const FilterBank fb = filter_bank_for(img.height(), img.width(), cp, boundary);
  const FilterResponses resp = apply_filter_bank(contrast, fb, boundary);
  const LuminanceImage ecc = eccentricity(resp.c_resp, resp.s_resp);
  return curvature_abs(curvature(resp.laplace, ecc), rp, cp);
}

LuminanceImage hessian_curvature_oracle(const LuminanceImage& img, double pre_sigma) {
  if (!(pre_sigma >= 0)) throw ParameterError("hessian oracle: pre_sigma must be >= 0");
  const Plane l = pre_sigma > 0 ? spatial_gaussian(img.pixels, pre_sigma) : img.pixels;
  const int h = img.height();
  const int w = img.width();
  auto at = [&](int y, int x) { return l(mirror(y, h), mirror(x, w)); };
  LuminanceImage out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double lxx = at(y, x + 1) - 2.0 * at(y, x) + at(y, x - 1);
      const double lyy = at(y + 1, x) - 2.0 * at(y, x) + at(y - 1, x);
      const double lxy =
          0.25 * (at(y + 1, x + 1) - at(y + 1, x - 1) - at(y - 1, x + 1) + at(y - 1, x - 1));
      out(y, x) = lxx * lyy - lxy * lxy;
    }
  }
  return out;
}

}  // namespace smt::saliency
