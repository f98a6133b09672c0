// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "robustkit/rng.hpp"
#include "robustkit/tensor.hpp"

namespace rk {

enum class MixMethod { mixup, cutmix, resizemix, fmix };

std::string method_name(MixMethod m);
MixMethod parse_method(const std::string& name);
const std::vector<MixMethod>& all_mix_methods();

struct Rect {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  bool contains(std::size_t r, std::size_t c) const {
    return r >= top && r < top + height && c >= left && c < left + width;
  }
  bool operator==(const Rect&) const = default;
};

/// ResizeMix placement: the permuted image, resized by `src_scale`, is
/// pasted into `dst`.
struct PatchPlacement {
  double src_scale = 0.0;
  Rect dst;
};

/// One mixing decision shared by every view of a batch. For mask methods
/// mask(r, c) == 1 keeps source A (the unpermuted batch) and gamma is the
/// exact fraction of ones.
struct MixPlan {
  MixMethod method = MixMethod::mixup;
  double gamma = 1.0;
  std::vector<std::size_t> perm;
  std::size_t height = 0, width = 0;
  std::optional<Tensor> mask;            // [H, W], cutmix / fmix
  std::optional<PatchPlacement> patch;   // resizemix
};

struct MixConfig {
  std::vector<MixMethod> methods = all_mix_methods();
  /// Replaces the random draw of gamma (mixup), lambda (cutmix), the target
  /// fraction (fmix) or 1 - scale^2 (resizemix).
  std::optional<double> fixed_gamma;
  double fmix_decay = 3.0;

  void validate() const;
};

struct FMixMask {
  Tensor mask;   // [H, W] of {0, 1}
  double gamma;  // exact fraction of ones
};

/// Low-frequency random field thresholded so exactly round(gamma_target*H*W)
/// pixels are one.
FMixMask fmix_mask(std::size_t height, std::size_t width, double gamma_target, double decay, Rng& rng);

MixPlan sample_mix_plan(std::size_t batch, std::size_t height, std::size_t width, Rng& rng,
                        const MixConfig& cfg = {});

Tensor apply_mix_plan(const Tensor& batch, const MixPlan& plan);

/// gamma * Y + (1 - gamma) * Y[perm]; rows of Y must sum to 1.
Tensor mix_labels(const Tensor& labels, const MixPlan& plan);

/// Bilinear resize of a [C,H,W] image (half-pixel centers, edge clamped).
Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w);

struct RMixResult {
  Tensor clean, aug, adv, labels;
  MixPlan plan;
};

/// Samples one plan and applies it to all three views and to the labels.
RMixResult rmix(const Tensor& clean, const Tensor& aug, const Tensor& adv, const Tensor& labels, Rng& rng,
                const MixConfig& cfg = {});

}  // namespace rk
