// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustkit/rng.hpp"
#include "robustkit/tensor.hpp"

namespace rk {

enum class OpKind {
  autocontrast,
  equalize,
  rotate,
  solarize,
  shear_x,
  shear_y,
  translate_x,
  translate_y,
  identity,  // not in the default set; used to pin chains for degenerate runs
};

std::string op_name(OpKind kind);
OpKind parse_op(const std::string& name);
const std::vector<OpKind>& default_ops();

struct AugmentConfig {
  double alpha = 1.0;
  int num_chains = 3;
  int depth_min = 1;
  int depth_max = 3;
  int severity = 3;
  float fill_value = 0.5f;
  std::vector<OpKind> ops = default_ops();

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

// Geometric primitives on a [C,H,W] image. The output pixel (r, c) samples
// the input bilinearly at the inverse-mapped location; taps that fall
// outside the image read `fill`.
Tensor rotate_image(const Tensor& img, double degrees, float fill);
Tensor shear_image(const Tensor& img, double shear_x, double shear_y, float fill);
Tensor translate_image(const Tensor& img, double dx, double dy, float fill);

Tensor autocontrast(const Tensor& img);
/// Per-channel histogram equalization over 256 bins.
Tensor equalize(const Tensor& img);
/// Pixels >= threshold become 1 - x; threshold >= 1 leaves the image untouched.
Tensor solarize(const Tensor& img, double threshold);

/// One base operation. magnitude in [0,1] maps to rotate <= 30 degrees,
/// shear <= 0.3, translate <= size/3 px, solarize threshold 1 - magnitude.
/// The sign of geometric ops is drawn from rng.
Tensor apply_base_op(const Tensor& img, OpKind kind, double magnitude, Rng& rng, float fill = 0.5f);

/// m * img + (1 - m) * sum_i weights[i] * chains[i]
Tensor mix_chains(const Tensor& img, std::span<const Tensor> chains, std::span<const double> weights, double m);

/// Random chains of base ops mixed with Dirichlet weights, then blended
/// with the original using a Beta(alpha, alpha) weight.
Tensor augment_and_mix(const Tensor& img, const AugmentConfig& cfg, Rng& rng);

}  // namespace rk
