// SPDX-License-Identifier: Apache-2.0
#include "robustkit/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "robustkit/numerics.hpp"

namespace rk {

std::string op_name(OpKind kind) {
  switch (kind) {
    case OpKind::autocontrast: return "autocontrast";
    case OpKind::equalize: return "equalize";
    case OpKind::rotate: return "rotate";
    case OpKind::solarize: return "solarize";
    case OpKind::shear_x: return "shear_x";
    case OpKind::shear_y: return "shear_y";
    case OpKind::translate_x: return "translate_x";
    case OpKind::translate_y: return "translate_y";
    case OpKind::identity: return "identity";
  }
  return "?";
}

OpKind parse_op(const std::string& name) {
  for (OpKind k : {OpKind::autocontrast, OpKind::equalize, OpKind::rotate, OpKind::solarize, OpKind::shear_x,
                   OpKind::shear_y, OpKind::translate_x, OpKind::translate_y, OpKind::identity})
    if (op_name(k) == name) return k;
  throw std::invalid_argument("unknown augmentation op '" + name + "'");
}

const std::vector<OpKind>& default_ops() {
  static const std::vector<OpKind> ops = {OpKind::autocontrast, OpKind::equalize, OpKind::rotate,
                                          OpKind::solarize,     OpKind::shear_x,  OpKind::shear_y,
                                          OpKind::translate_x,  OpKind::translate_y};
  return ops;
}

void AugmentConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("augment.alpha must be positive");
  if (num_chains < 1) throw std::invalid_argument("augment.num_chains must be >= 1");
  if (depth_min < 1 || depth_max < depth_min)
    throw std::invalid_argument("augment depth range must satisfy 1 <= depth_min <= depth_max");
  if (severity < 1 || severity > 10) throw std::invalid_argument("augment.severity must be in [1, 10]");
  if (ops.empty()) throw std::invalid_argument("augment.ops must not be empty");
}

namespace {

void require_image(const Tensor& img) {
  if (img.rank() != 3) throw std::invalid_argument("expected a [C,H,W] image, got " + shape_str(img.shape()));
}

// Inverse map: output (r, c) -> source (sr, sc).
template <class Map>
Tensor resample(const Tensor& img, float fill, Map&& inverse) {
  require_image(img);
  const std::size_t ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out(img.shape());
  auto tap = [&](std::size_t c, std::ptrdiff_t r, std::ptrdiff_t q) -> double {
    if (r < 0 || q < 0 || r >= static_cast<std::ptrdiff_t>(h) || q >= static_cast<std::ptrdiff_t>(w)) return fill;
    return img.at(c, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
  };
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t q = 0; q < w; ++q) {
      const auto [sr, sc] = inverse(static_cast<double>(r), static_cast<double>(q));
      const double r0 = std::floor(sr), c0 = std::floor(sc);
      const double fr = sr - r0, fc = sc - c0;
      const auto ir = static_cast<std::ptrdiff_t>(r0), ic = static_cast<std::ptrdiff_t>(c0);
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = (1.0 - fc) * tap(c, ir, ic) + fc * tap(c, ir, ic + 1);
        const double bot = (1.0 - fc) * tap(c, ir + 1, ic) + fc * tap(c, ir + 1, ic + 1);
        out.at(c, r, q) = static_cast<float>((1.0 - fr) * top + fr * bot);
      }
    }
  return out;
}

}  // namespace

Tensor rotate_image(const Tensor& img, double degrees, float fill) {
  require_image(img);
  const double cy = (static_cast<double>(img.dim(1)) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.dim(2)) - 1.0) / 2.0;
  const double t = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(t), sn = std::sin(t);
  if (degrees == 0.0) return img;
  return resample(img, fill, [&](double r, double c) {
    const double y = r - cy, x = c - cx;
    return std::pair{cs * y - sn * x + cy, sn * y + cs * x + cx};
  });
}

Tensor shear_image(const Tensor& img, double shear_x, double shear_y, float fill) {
  require_image(img);
  if (shear_x == 0.0 && shear_y == 0.0) return img;
  const double cy = (static_cast<double>(img.dim(1)) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.dim(2)) - 1.0) / 2.0;
  return resample(img, fill, [&](double r, double c) {
    return std::pair{r - shear_y * (c - cx), c - shear_x * (r - cy)};
  });
}

Tensor translate_image(const Tensor& img, double dx, double dy, float fill) {
  require_image(img);
  if (dx == 0.0 && dy == 0.0) return img;
  return resample(img, fill, [&](double r, double c) { return std::pair{r - dy, c - dx}; });
}

Tensor autocontrast(const Tensor& img) {
  require_image(img);
  Tensor out = img;
  const std::size_t plane = img.dim(1) * img.dim(2);
  for (std::size_t c = 0; c < img.dim(0); ++c) {
    auto px = out.data().subspan(c * plane, plane);
    const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
    const float mn = *lo, mx = *hi;
    if (!(mx > mn)) continue;
    for (float& v : px) v = std::clamp((v - mn) / (mx - mn), 0.0f, 1.0f);
  }
  return out;
}

Tensor equalize(const Tensor& img) {
  require_image(img);
  Tensor out = img;
  const std::size_t plane = img.dim(1) * img.dim(2);
  auto bin = [](float v) {
    return static_cast<std::size_t>(std::clamp(std::lround(static_cast<double>(v) * 255.0), 0L, 255L));
  };
  for (std::size_t c = 0; c < img.dim(0); ++c) {
    auto px = out.data().subspan(c * plane, plane);
    std::array<std::size_t, 256> hist{};
    for (float v : px) ++hist[bin(v)];
    std::size_t last = 255;
    while (last > 0 && hist[last] == 0) --last;
    const std::size_t step = (plane - hist[last]) / 255;
    if (step == 0) continue;
    std::array<float, 256> lut{};
    std::size_t run = step / 2;
    for (std::size_t i = 0; i < 256; ++i) {
      lut[i] = static_cast<float>(std::min<std::size_t>(run / step, 255)) / 255.0f;
      run += hist[i];
    }
    for (float& v : px) v = lut[bin(v)];
  }
  return out;
}

Tensor solarize(const Tensor& img, double threshold) {
  require_image(img);
  Tensor out = img;
  if (threshold >= 1.0) return out;
  for (float& v : out.data())
    if (v >= threshold) v = 1.0f - v;
  return out;
}

Tensor apply_base_op(const Tensor& img, OpKind kind, double magnitude, Rng& rng, float fill) {
  require_image(img);
  magnitude = std::clamp(magnitude, 0.0, 1.0);
  const double sign = rng.coin() ? 1.0 : -1.0;
  switch (kind) {
    case OpKind::identity: return img;
    case OpKind::autocontrast: return autocontrast(img);
    case OpKind::equalize: return equalize(img);
    case OpKind::rotate: return rotate_image(img, sign * 30.0 * magnitude, fill);
    case OpKind::solarize: return solarize(img, 1.0 - magnitude);
    case OpKind::shear_x: return shear_image(img, sign * 0.3 * magnitude, 0.0, fill);
    case OpKind::shear_y: return shear_image(img, 0.0, sign * 0.3 * magnitude, fill);
    case OpKind::translate_x:
      return translate_image(img, sign * magnitude * static_cast<double>(img.dim(2)) / 3.0, 0.0, fill);
    case OpKind::translate_y:
      return translate_image(img, 0.0, sign * magnitude * static_cast<double>(img.dim(1)) / 3.0, fill);
  }
  throw std::invalid_argument("unknown augmentation op");
}

Tensor mix_chains(const Tensor& img, std::span<const Tensor> chains, std::span<const double> weights, double m) {
  if (chains.size() != weights.size()) throw std::invalid_argument("mix_chains: one weight per chain required");
  Tensor out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) {
    double mixed = 0.0;
    for (std::size_t k = 0; k < chains.size(); ++k) mixed += weights[k] * chains[k][i];
    out[i] = std::clamp(static_cast<float>(m * img[i] + (1.0 - m) * mixed), 0.0f, 1.0f);
  }
  return out;
}

Tensor augment_and_mix(const Tensor& img, const AugmentConfig& cfg, Rng& rng) {
  require_image(img);
  const TensorD w = sample_dirichlet(rng, static_cast<std::size_t>(cfg.num_chains), cfg.alpha);
  const double m = sample_beta(rng, cfg.alpha);
  const double max_magnitude = cfg.severity / 10.0;
  std::vector<Tensor> chains;
  chains.reserve(static_cast<std::size_t>(cfg.num_chains));
  for (int k = 0; k < cfg.num_chains; ++k) {
    const int depth = cfg.depth_min + static_cast<int>(rng.below(static_cast<std::size_t>(cfg.depth_max - cfg.depth_min + 1)));
    Tensor cur = img;
    for (int d = 0; d < depth; ++d) {
      const OpKind op = cfg.ops[rng.below(cfg.ops.size())];
      cur = apply_base_op(cur, op, rng.uniform(0.0, max_magnitude), rng, cfg.fill_value);
    }
    chains.push_back(std::move(cur));
  }
  return mix_chains(img, chains, w.data(), m);
}

}  // namespace rk
