// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "robustkit/tensor.hpp"

namespace rk {

/// Images [N,C,H,W] in [0, 1] with integer labels in [0, num_classes).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::string name;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  Shape item_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
  Dataset subset(std::span<const std::size_t> idx) const;
  /// Throws std::invalid_argument when counts, ranges or pixel values are off.
  void validate() const;
};

/// Shape brightness above the background is U[contrast_min, contrast_max];
/// pixels get additive N(0, noise_sigma^2) before clamping.
struct ShapesOptions {
  double contrast_min = 0.3;
  double contrast_max = 0.5;
  double noise_sigma = 0.04;
};

/// Noisy shapes on a jittered background, one class per shape (disc, bar,
/// cross, ring, square, diagonal). Classes are balanced within 1.
Dataset make_shapes_dataset(std::size_t n, std::size_t num_classes, std::size_t size, std::uint64_t seed,
                            const ShapesOptions& opts = {});

/// Writes images.at1, labels.at1 and meta.json into `dir` (created if needed).
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

/// FNV-1a 64 over images.at1 followed by labels.at1, as 16 hex digits.
std::string dataset_checksum(const std::filesystem::path& dir);

}  // namespace rk
