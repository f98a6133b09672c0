// SPDX-License-Identifier: Apache-2.0
#include "robustkit/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "robustkit/numerics.hpp"

namespace rk {

std::string corruption_name(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::shot_noise: return "shot_noise";
    case CorruptionKind::impulse_noise: return "impulse_noise";
    case CorruptionKind::speckle_noise: return "speckle_noise";
    case CorruptionKind::brightness: return "brightness";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::pixelate: return "pixelate";
    case CorruptionKind::defocus_blur: return "defocus_blur";
  }
  return "?";
}

const std::vector<CorruptionKind>& all_corruptions() {
  static const std::vector<CorruptionKind> all = {
      CorruptionKind::gaussian_noise, CorruptionKind::shot_noise, CorruptionKind::impulse_noise,
      CorruptionKind::speckle_noise,  CorruptionKind::brightness, CorruptionKind::contrast,
      CorruptionKind::pixelate,       CorruptionKind::defocus_blur};
  return all;
}

CorruptionKind parse_corruption(const std::string& name) {
  for (CorruptionKind k : all_corruptions())
    if (corruption_name(k) == name) return k;
  std::string valid;
  for (CorruptionKind k : all_corruptions()) valid += (valid.empty() ? "" : ", ") + corruption_name(k);
  throw std::invalid_argument("unknown corruption '" + name + "'; valid kinds: " + valid);
}

double corruption_param(CorruptionKind kind, int severity) {
  if (severity < 1 || severity > 5)
    throw std::invalid_argument("corruption severity " + std::to_string(severity) + " outside [1, 5]");
  static const std::array<std::array<double, 5>, 8> table = {{
      {0.04, 0.06, 0.08, 0.09, 0.10},  // gaussian sigma
      {500, 250, 100, 75, 50},         // shot photons per unit intensity
      {0.01, 0.02, 0.03, 0.05, 0.07},  // impulse rate
      {0.06, 0.10, 0.12, 0.16, 0.20},  // speckle sigma
      {0.05, 0.10, 0.15, 0.20, 0.30},  // brightness shift
      {0.75, 0.50, 0.40, 0.30, 0.15},  // contrast factor
      {2, 3, 4, 5, 6},                 // pixelate block size
      {1, 2, 3, 4, 6},                 // defocus disk radius
  }};
  return table[static_cast<std::size_t>(kind)][static_cast<std::size_t>(severity - 1)];
}

double CorruptionSpec::value() const { return param ? *param : corruption_param(kind, severity); }

namespace {

void require_image(const Tensor& img) {
  if (img.rank() != 3) throw std::invalid_argument("expected a [C,H,W] image, got " + shape_str(img.shape()));
}

Tensor pixelate(const Tensor& img, std::size_t d) {
  const std::size_t ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out(img.shape());
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t r0 = 0; r0 < h; r0 += d)
      for (std::size_t c0 = 0; c0 < w; c0 += d) {
        const std::size_t r1 = std::min(h, r0 + d), c1 = std::min(w, c0 + d);
        double sum = 0.0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t q = c0; q < c1; ++q) sum += img.at(c, r, q);
        const auto mean = static_cast<float>(sum / static_cast<double>((r1 - r0) * (c1 - c0)));
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t q = c0; q < c1; ++q) out.at(c, r, q) = mean;
      }
  return out;
}

Tensor defocus(const Tensor& img, int radius) {
  const std::size_t ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<std::pair<int, int>> taps;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dy * dy + dx * dx <= radius * radius) taps.emplace_back(dy, dx);
  const double norm = 1.0 / static_cast<double>(taps.size());
  Tensor out(img.shape());
  auto clampi = [](int v, std::size_t n) { return static_cast<std::size_t>(std::clamp(v, 0, static_cast<int>(n) - 1)); };
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t q = 0; q < w; ++q) {
        double acc = 0.0;
        for (auto [dy, dx] : taps)
          acc += img.at(c, clampi(static_cast<int>(r) + dy, h), clampi(static_cast<int>(q) + dx, w));
        out.at(c, r, q) = static_cast<float>(acc * norm);
      }
  return out;
}

}  // namespace

Tensor corrupt(const Tensor& img, const CorruptionSpec& spec, Rng& rng) {
  require_image(img);
  const double p = spec.value();
  Tensor out = img;
  auto px = out.data();
  switch (spec.kind) {
    case CorruptionKind::gaussian_noise:
      for (float& v : px) v = static_cast<float>(v + p * rng.normal());
      break;
    case CorruptionKind::shot_noise:
      for (float& v : px) {
        const double mean = std::max(0.0, static_cast<double>(v) * p);
        const double k = mean > 0.0 ? static_cast<double>(std::poisson_distribution<long>(mean)(rng.engine())) : 0.0;
        v = static_cast<float>(k / p);
      }
      break;
    case CorruptionKind::impulse_noise:
      for (float& v : px)
        if (rng.uniform() < p) v = rng.coin() ? 1.0f : 0.0f;
      break;
    case CorruptionKind::speckle_noise:
      for (float& v : px) v = static_cast<float>(v + v * p * rng.normal());
      break;
    case CorruptionKind::brightness:
      for (float& v : px) v = static_cast<float>(v + p);
      break;
    case CorruptionKind::contrast: {
      const std::size_t plane = img.dim(1) * img.dim(2);
      for (std::size_t c = 0; c < img.dim(0); ++c) {
        auto chan = px.subspan(c * plane, plane);
        double mean = 0.0;
        for (float v : chan) mean += v;
        mean /= static_cast<double>(plane);
        for (float& v : chan) v = static_cast<float>((v - mean) * p + mean);
      }
      break;
    }
    case CorruptionKind::pixelate:
      out = pixelate(img, static_cast<std::size_t>(std::max(1.0, p)));
      break;
    case CorruptionKind::defocus_blur:
      out = defocus(img, static_cast<int>(p));
      break;
  }
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::string occlusion_name(OcclusionMode m) { return m == OcclusionMode::untargeted ? "untargeted" : "targeted"; }

OcclusionMode parse_occlusion(const std::string& name) {
  if (name == "untargeted") return OcclusionMode::untargeted;
  if (name == "targeted") return OcclusionMode::targeted;
  throw std::invalid_argument("unknown occlusion mode '" + name + "'; valid: untargeted, targeted");
}

void OcclusionSpec::validate() const {
  if (!(block_frac > 0.0 && block_frac < 1.0)) throw std::invalid_argument("occlusion block_frac must lie in (0, 1)");
}

Tensor occlude(const Tensor& img, int label, const std::optional<OcclusionPool>& pool, const OcclusionSpec& spec,
               Rng& rng) {
  require_image(img);
  spec.validate();
  const std::size_t h = img.dim(1), w = img.dim(2);
  const auto bh = static_cast<std::size_t>(std::llround(spec.block_frac * static_cast<double>(h)));
  const auto bw = static_cast<std::size_t>(std::llround(spec.block_frac * static_cast<double>(w)));
  const Tensor* donor = nullptr;
  std::size_t donor_index = 0;
  if (spec.mode == OcclusionMode::targeted) {
    if (!pool || !pool->images) throw std::invalid_argument("targeted occlusion requires a donor pool");
    if (pool->images->rank() != 4 || pool->images->dim(0) != pool->labels.size() ||
        pool->images->dim(1) != img.dim(0) || pool->images->dim(2) != h || pool->images->dim(3) != w)
      throw std::invalid_argument("occlusion pool does not match the image shape");
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool->labels.size(); ++i)
      if (pool->labels[i] != label) candidates.push_back(i);
    if (candidates.empty()) throw std::invalid_argument("occlusion pool has no image of a different class");
    donor = pool->images;
    donor_index = candidates[rng.below(candidates.size())];
  }
  const std::size_t top = rng.below(h - bh + 1), left = rng.below(w - bw + 1);
  Tensor out = img;
  for (std::size_t c = 0; c < img.dim(0); ++c)
    for (std::size_t r = top; r < top + bh; ++r)
      for (std::size_t q = left; q < left + bw; ++q)
        out.at(c, r, q) = donor ? donor->at(donor_index, c, r, q) : 0.0f;
  return out;
}

double top_k_accuracy(const Tensor& logits, std::span<const int> labels, int k) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw std::invalid_argument("top_k_accuracy: logits " + shape_str(logits.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  if (k < 1) throw std::invalid_argument("top_k_accuracy: k must be >= 1");
  if (static_cast<std::size_t>(k) > logits.dim(1))
    throw std::invalid_argument("top_k_accuracy: k=" + std::to_string(k) + " exceeds class count " +
                                std::to_string(logits.dim(1)));
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto t = static_cast<std::size_t>(labels[i]);
    if (t >= logits.dim(1)) throw std::invalid_argument("top_k_accuracy: label out of range");
    std::size_t rank = 0;
    for (std::size_t c = 0; c < logits.dim(1); ++c)
      if (logits.at(i, c) > logits.at(i, t) || (logits.at(i, c) == logits.at(i, t) && c < t)) ++rank;
    hits += rank < static_cast<std::size_t>(k);
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double corruption_error(const std::map<int, double>& errors_by_severity) {
  double sum = 0.0;
  for (int s = 1; s <= 5; ++s) {
    auto it = errors_by_severity.find(s);
    if (it == errors_by_severity.end())
      throw std::invalid_argument("corruption_error: missing severity " + std::to_string(s));
    sum += it->second;
  }
  if (errors_by_severity.size() != 5) throw std::invalid_argument("corruption_error: severities must be exactly 1..5");
  return sum / 5.0;
}

Tensor corrupt_batch(const Tensor& images, const CorruptionSpec& spec, const Rng& rng, std::size_t threads) {
  Tensor out(images.shape());
  parallel_for(images.dim(0), threads, [&](std::size_t i) {
    Rng local = rng.child(i);
    out.set_slice(i, corrupt(images.slice(i), spec, local));
  });
  return out;
}

double corruption_error(const Classifier& model, const Tensor& images, std::span<const int> labels,
                        CorruptionKind kind, const Rng& rng, std::size_t threads) {
  std::map<int, double> errs;
  for (int s = 1; s <= 5; ++s) {
    const Tensor corrupted = corrupt_batch(images, CorruptionSpec{kind, s, std::nullopt},
                                           rng.child(static_cast<std::uint64_t>(kind) * 16 + static_cast<std::uint64_t>(s)),
                                           threads);
    errs[s] = 1.0 - top_k_accuracy(model(corrupted), labels, 1);
  }
  return corruption_error(errs);
}

double mce(std::span<const double> per_kind_errors) {
  if (per_kind_errors.empty()) throw std::invalid_argument("mce: no corruption errors given");
  double sum = 0.0;
  for (double e : per_kind_errors) sum += e;
  return sum / static_cast<double>(per_kind_errors.size());
}

Tensor occlude_batch(const Tensor& images, std::span<const int> labels, const OcclusionSpec& spec, const Rng& rng) {
  Tensor out(images.shape());
  std::optional<OcclusionPool> pool;
  if (spec.mode == OcclusionMode::targeted) pool = OcclusionPool{&images, labels};
  for (std::size_t i = 0; i < images.dim(0); ++i) {
    Rng local = rng.child(i);
    out.set_slice(i, occlude(images.slice(i), labels[i], pool, spec, local));
  }
  return out;
}

}  // namespace rk
