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

// i2D saliency: ratio-of-Gaussians contrast followed by an isotropic
// curvature operator built from polar-separable frequency-domain filters.
//
//   contrast  = blur(l, sc) / (blur(l, ss) + tau)
//   g(r)      = (2 pi r)^2 exp(-pi r^2 / sr^2)
//   Laplace   = F^-1[ g(r) F[contrast] ]
//   C, S      = F^-1[ i^n cos(n phi) g(r) F[contrast] ],  ... sin(n phi) ...
//   D         = Laplace^2 - (C^2 + S^2),   saliency = |D|
//
// For n = 2 the three filters are the Laplacian, (dxx - dyy) and 2 dxy of a
// Gaussian-smoothed image, so D is four times the Hessian determinant.

#pragma once

#include <cmath>
#include <numbers>

#include "smt/signal.hpp"

namespace smt::saliency {

struct RogParams {
  double sigma_center = 1.0;
  double sigma_surround = 2.0;
  double tau = 0.01;

  void validate() const;
};

struct CurvatureParams {
  int n = 2;
  /// Radial bandwidth of g(r); the default puts the peak at 0.125 cycles/px.
  double sigma_r = 0.125 * std::sqrt(std::numbers::pi);

  void validate() const;
  /// Radius where g(r) attains its maximum: sigma_r / sqrt(pi).
  double peak_frequency() const { return sigma_r / std::sqrt(std::numbers::pi); }
};

/// Centered transfer functions on the (padded) filtering grid.
struct FilterBank {
  ComplexPlane laplace_tf;
  ComplexPlane cos_tf;
  ComplexPlane sin_tf;
  CurvatureParams params;

  int height() const { return static_cast<int>(laplace_tf.rows()); }
  int width() const { return static_cast<int>(laplace_tf.cols()); }
};

struct FilterResponses {
  LuminanceImage laplace;
  LuminanceImage c_resp;
  LuminanceImage s_resp;
};

/// Absolute curvature |D|; nonnegative everywhere.
struct SaliencyMap {
  Plane values;
  RogParams rog;
  CurvatureParams curvature;

  int height() const { return static_cast<int>(values.rows()); }
  int width() const { return static_cast<int>(values.cols()); }
};

/// Radial profile g(r).
double radial_gain(double r, double sigma_r);

LuminanceImage rog_contrast(const LuminanceImage& img, const RogParams& p,
                            Boundary boundary = Boundary::kReflect);

FilterBank build_filter_bank(const PolarFreqGrid& grid, const CurvatureParams& cp);

/// Filter bank sized for an image of the given shape under `boundary`.
FilterBank filter_bank_for(int height, int width, const CurvatureParams& cp,
                           Boundary boundary = Boundary::kReflect);

FilterResponses apply_filter_bank(const LuminanceImage& contrast, const FilterBank& fb,
                                  Boundary boundary = Boundary::kReflect);

LuminanceImage eccentricity(const LuminanceImage& c_resp, const LuminanceImage& s_resp);

/// Laplace^2 - Ecc^2.
LuminanceImage curvature(const LuminanceImage& laplace, const LuminanceImage& ecc);

SaliencyMap curvature_abs(const LuminanceImage& d, const RogParams& rp = {},
                          const CurvatureParams& cp = {});

SaliencyMap saliency_map(const LuminanceImage& img, const RogParams& rp = {},
                         const CurvatureParams& cp = {}, Boundary boundary = Boundary::kReflect);

/// Spatial-domain Hessian determinant l_xx l_yy - l_xy^2 from central
/// differences, after optional Gaussian pre-smoothing by direct convolution.
/// Borders use the same half-sample mirror as the frequency path. Meant only
/// as an independent cross-check of the frequency-domain operator.
LuminanceImage hessian_curvature_oracle(const LuminanceImage& img, double pre_sigma);

}  // namespace smt::saliency
