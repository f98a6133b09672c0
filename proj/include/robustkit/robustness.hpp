// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustkit/rng.hpp"
#include "robustkit/tensor.hpp"

namespace rk {

enum class CorruptionKind {
  gaussian_noise,
  shot_noise,
  impulse_noise,
  speckle_noise,
  brightness,
  contrast,
  pixelate,
  defocus_blur,
};

std::string corruption_name(CorruptionKind k);
CorruptionKind parse_corruption(const std::string& name);
const std::vector<CorruptionKind>& all_corruptions();

/// Severity table for the generated suite, indexed by severity - 1.
double corruption_param(CorruptionKind kind, int severity);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 1;
  /// Overrides the table value when set (e.g. contrast factor 1).
  std::optional<double> param;

  double value() const;
};

/// Corrupts one [C,H,W] image in [0, 1]; output is clamped to [0, 1].
Tensor corrupt(const Tensor& img, const CorruptionSpec& spec, Rng& rng);

enum class OcclusionMode { untargeted, targeted };

std::string occlusion_name(OcclusionMode m);
OcclusionMode parse_occlusion(const std::string& name);

struct OcclusionSpec {
  OcclusionMode mode = OcclusionMode::untargeted;
  double block_frac = 0.4;

  void validate() const;
};

/// Donor images for targeted occlusion.
struct OcclusionPool {
  const Tensor* images = nullptr;  // [M, C, H, W]
  std::span<const int> labels;
};

/// Replaces a round(f*H) x round(f*W) block at a uniform position by zeros
/// (untargeted) or by the same-position crop of a random pool image whose
/// label differs from `label` (targeted).
Tensor occlude(const Tensor& img, int label, const std::optional<OcclusionPool>& pool, const OcclusionSpec& spec,
               Rng& rng);

/// Fraction of rows whose label is among the k largest logits. Ties rank
/// the lower class index first.
double top_k_accuracy(const Tensor& logits, std::span<const int> labels, int k);

/// Maps a batch [N,C,H,W] to logits [N,K].
using Classifier = std::function<Tensor(const Tensor&)>;

/// Mean Top1 error over severities 1..5. `errors_by_severity` must hold
/// exactly those five keys.
double corruption_error(const std::map<int, double>& errors_by_severity);

/// Evaluates `model` on every severity of `kind`. Images are corrupted
/// with per-image child generators of `rng`.
double corruption_error(const Classifier& model, const Tensor& images, std::span<const int> labels,
                        CorruptionKind kind, const Rng& rng, std::size_t threads = 1);

/// Unnormalized mean over corruption kinds.
double mce(std::span<const double> per_kind_errors);
inline double mca(std::span<const double> per_kind_errors) { return 1.0 - mce(per_kind_errors); }

/// Corrupts every image of a batch (per-image child generators).
Tensor corrupt_batch(const Tensor& images, const CorruptionSpec& spec, const Rng& rng, std::size_t threads = 1);

/// Occludes every image of a batch; targeted mode draws donors from the batch itself.
Tensor occlude_batch(const Tensor& images, std::span<const int> labels, const OcclusionSpec& spec, const Rng& rng);

}  // namespace rk
