// SPDX-License-Identifier: Apache-2.0
#include "robustkit/mix.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "robustkit/numerics.hpp"

namespace rk {

std::string method_name(MixMethod m) {
  switch (m) {
    case MixMethod::mixup: return "mixup";
    case MixMethod::cutmix: return "cutmix";
    case MixMethod::resizemix: return "resizemix";
    case MixMethod::fmix: return "fmix";
  }
  return "?";
}

MixMethod parse_method(const std::string& name) {
  for (MixMethod m : all_mix_methods())
    if (method_name(m) == name) return m;
  throw std::invalid_argument("unknown mix method '" + name + "'");
}

const std::vector<MixMethod>& all_mix_methods() {
  static const std::vector<MixMethod> all = {MixMethod::mixup, MixMethod::cutmix, MixMethod::resizemix,
                                             MixMethod::fmix};
  return all;
}

void MixConfig::validate() const {
  if (methods.empty()) throw std::invalid_argument("mix.methods must not be empty");
  if (fixed_gamma && !(*fixed_gamma >= 0.0 && *fixed_gamma <= 1.0))
    throw std::invalid_argument("mix.fixed_gamma must lie in [0, 1]");
  if (!(fmix_decay > 0.0)) throw std::invalid_argument("mix.fmix_decay must be positive");
}

FMixMask fmix_mask(std::size_t height, std::size_t width, double gamma_target, double decay, Rng& rng) {
  if (height < 4 || width < 4) throw std::invalid_argument("fmix_mask needs H, W >= 4");
  gamma_target = std::clamp(gamma_target, 0.0, 1.0);
  const std::size_t total = height * width;
  const auto k = static_cast<std::size_t>(std::llround(gamma_target * static_cast<double>(total)));

  const auto fh = static_cast<std::ptrdiff_t>((height + 3) / 4);
  const auto fw = static_cast<std::ptrdiff_t>((width + 3) / 4);
  std::vector<double> field(total, 0.0);
  for (std::ptrdiff_t fy = 0; fy < fh; ++fy)
    for (std::ptrdiff_t fx = -fw + 1; fx < fw; ++fx) {
      if (fy == 0 && fx <= 0) continue;  // DC and mirrored duplicates
      const double amp = rng.normal() * std::pow(1.0 + std::hypot(double(fy), double(fx)), -decay);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
          field[y * width + x] +=
              amp * std::cos(2.0 * std::numbers::pi * (double(fy) * double(y) / double(height) +
                                                       double(fx) * double(x) / double(width)) +
                             phase);
    }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return field[a] > field[b]; });
  FMixMask out{Tensor({height, width}), static_cast<double>(k) / static_cast<double>(total)};
  for (std::size_t i = 0; i < k; ++i) out.mask[order[i]] = 1.0f;
  return out;
}

namespace {

double mask_fraction(const Tensor& mask) {
  std::size_t ones = 0;
  for (float v : mask.data()) ones += v == 1.0f;
  return static_cast<double>(ones) / static_cast<double>(mask.size());
}

std::size_t sample_extent(double ratio, std::size_t size) {
  return std::min(size, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(size))));
}

}  // namespace

MixPlan sample_mix_plan(std::size_t batch, std::size_t height, std::size_t width, Rng& rng, const MixConfig& cfg) {
  if (batch < 1) throw std::invalid_argument("sample_mix_plan: batch must be >= 1");
  cfg.validate();
  MixPlan plan;
  plan.height = height;
  plan.width = width;
  plan.method = cfg.methods[rng.below(cfg.methods.size())];
  plan.perm.resize(batch);
  std::iota(plan.perm.begin(), plan.perm.end(), std::size_t{0});
  for (std::size_t i = batch; i-- > 1;) std::swap(plan.perm[i], plan.perm[rng.below(i + 1)]);

  auto draw = [&] { return cfg.fixed_gamma ? *cfg.fixed_gamma : sample_beta(rng, 1.0); };
  switch (plan.method) {
    case MixMethod::mixup:
      plan.gamma = draw();
      break;
    case MixMethod::cutmix: {
      const double lambda = draw();
      const double side = std::sqrt(1.0 - lambda);
      const std::size_t cut_h = sample_extent(side, height), cut_w = sample_extent(side, width);
      const auto cy = static_cast<std::ptrdiff_t>(rng.below(height));
      const auto cx = static_cast<std::ptrdiff_t>(rng.below(width));
      const auto clip = [](std::ptrdiff_t v, std::size_t hi) {
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(hi)));
      };
      const std::size_t r0 = clip(cy - static_cast<std::ptrdiff_t>(cut_h / 2), height);
      const std::size_t r1 = clip(cy - static_cast<std::ptrdiff_t>(cut_h / 2) + static_cast<std::ptrdiff_t>(cut_h), height);
      const std::size_t c0 = clip(cx - static_cast<std::ptrdiff_t>(cut_w / 2), width);
      const std::size_t c1 = clip(cx - static_cast<std::ptrdiff_t>(cut_w / 2) + static_cast<std::ptrdiff_t>(cut_w), width);
      Tensor mask({height, width}, 1.0f);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) mask.at(r, c) = 0.0f;
      plan.gamma = mask_fraction(mask);
      plan.mask = std::move(mask);
      break;
    }
    case MixMethod::fmix: {
      auto m = fmix_mask(height, width, draw(), cfg.fmix_decay, rng);
      plan.gamma = m.gamma;
      plan.mask = std::move(m.mask);
      break;
    }
    case MixMethod::resizemix: {
      const double scale = cfg.fixed_gamma ? std::sqrt(1.0 - *cfg.fixed_gamma) : rng.uniform(0.1, 0.8);
      PatchPlacement p;
      p.src_scale = scale;
      p.dst.height = sample_extent(scale, height);
      p.dst.width = sample_extent(scale, width);
      p.dst.top = rng.below(height - p.dst.height + 1);
      p.dst.left = rng.below(width - p.dst.width + 1);
      plan.gamma = 1.0 - static_cast<double>(p.dst.height * p.dst.width) / static_cast<double>(height * width);
      plan.patch = p;
      break;
    }
  }
  return plan;
}

Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w) {
  const std::size_t ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out({ch, out_h, out_w});
  auto coord = [](std::size_t i, std::size_t in, std::size_t out_n) {
    const double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  for (std::size_t r = 0; r < out_h; ++r) {
    const double sr = coord(r, h, out_h);
    const auto r0 = static_cast<std::size_t>(sr);
    const std::size_t r1 = std::min(r0 + 1, h - 1);
    const double fr = sr - static_cast<double>(r0);
    for (std::size_t q = 0; q < out_w; ++q) {
      const double sc = coord(q, w, out_w);
      const auto c0 = static_cast<std::size_t>(sc);
      const std::size_t c1 = std::min(c0 + 1, w - 1);
      const double fc = sc - static_cast<double>(c0);
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = (1 - fc) * img.at(c, r0, c0) + fc * img.at(c, r0, c1);
        const double bot = (1 - fc) * img.at(c, r1, c0) + fc * img.at(c, r1, c1);
        out.at(c, r, q) = static_cast<float>((1 - fr) * top + fr * bot);
      }
    }
  }
  return out;
}

Tensor apply_mix_plan(const Tensor& batch, const MixPlan& plan) {
  if (batch.rank() != 4 || batch.dim(0) != plan.perm.size() || batch.dim(2) != plan.height ||
      batch.dim(3) != plan.width)
    throw std::invalid_argument("apply_mix_plan: batch " + shape_str(batch.shape()) + " does not match plan for N=" +
                                std::to_string(plan.perm.size()) + ", " + std::to_string(plan.height) + "x" +
                                std::to_string(plan.width));
  const std::size_t n = batch.dim(0), ch = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  Tensor out(batch.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = plan.perm[i];
    switch (plan.method) {
      case MixMethod::mixup:
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t r = 0; r < h; ++r)
            for (std::size_t q = 0; q < w; ++q)
              out.at(i, c, r, q) = static_cast<float>(plan.gamma * batch.at(i, c, r, q) +
                                                      (1.0 - plan.gamma) * batch.at(j, c, r, q));
        break;
      case MixMethod::cutmix:
      case MixMethod::fmix: {
        const Tensor& mask = *plan.mask;
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t r = 0; r < h; ++r)
            for (std::size_t q = 0; q < w; ++q)
              out.at(i, c, r, q) = mask.at(r, q) == 1.0f ? batch.at(i, c, r, q) : batch.at(j, c, r, q);
        break;
      }
      case MixMethod::resizemix: {
        const Rect& d = plan.patch->dst;
        Tensor item = batch.slice(i);
        if (d.height > 0 && d.width > 0) {
          const Tensor small = resize_bilinear(batch.slice(j), d.height, d.width);
          for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t r = 0; r < d.height; ++r)
              for (std::size_t q = 0; q < d.width; ++q) item.at(c, d.top + r, d.left + q) = small.at(c, r, q);
        }
        out.set_slice(i, item);
        break;
      }
    }
  }
  return out;
}

Tensor mix_labels(const Tensor& labels, const MixPlan& plan) {
  if (labels.rank() != 2 || labels.dim(0) != plan.perm.size())
    throw std::invalid_argument("mix_labels: labels " + shape_str(labels.shape()) + " do not match plan batch " +
                                std::to_string(plan.perm.size()));
  const std::size_t n = labels.dim(0), k = labels.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += labels.at(i, c);
    if (std::abs(s - 1.0) > 1e-6)
      throw std::invalid_argument("mix_labels: label row " + std::to_string(i) + " is not normalized");
  }
  Tensor out(labels.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c)
      out.at(i, c) = static_cast<float>(plan.gamma * labels.at(i, c) + (1.0 - plan.gamma) * labels.at(plan.perm[i], c));
  return out;
}

RMixResult rmix(const Tensor& clean, const Tensor& aug, const Tensor& adv, const Tensor& labels, Rng& rng,
                const MixConfig& cfg) {
  if (clean.rank() != 4 || clean.shape() != aug.shape() || clean.shape() != adv.shape())
    throw std::invalid_argument("rmix: view shapes differ: " + shape_str(clean.shape()) + ", " +
                                shape_str(aug.shape()) + ", " + shape_str(adv.shape()));
  if (labels.rank() != 2 || labels.dim(0) != clean.dim(0))
    throw std::invalid_argument("rmix: labels " + shape_str(labels.shape()) + " do not match batch " +
                                std::to_string(clean.dim(0)));
  RMixResult out;
  out.plan = sample_mix_plan(clean.dim(0), clean.dim(2), clean.dim(3), rng, cfg);
  out.clean = apply_mix_plan(clean, out.plan);
  out.aug = apply_mix_plan(aug, out.plan);
  out.adv = apply_mix_plan(adv, out.plan);
  out.labels = mix_labels(labels, out.plan);
  return out;
}

}  // namespace rk
