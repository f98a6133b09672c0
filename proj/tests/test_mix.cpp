// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <array>
#include <cmath>
#include <numeric>

#include "robustkit/mix.hpp"
#include "robustkit/numerics.hpp"
#include "support.hpp"

using namespace rk;

namespace {

double ones_fraction(const Tensor& mask) {
  std::size_t n = 0;
  for (float v : mask.data()) n += v == 1.0f;
  return static_cast<double>(n) / static_cast<double>(mask.size());
}

Tensor indicator_batch(std::size_t n, std::size_t h, std::size_t w, const std::vector<std::size_t>& ones_items) {
  Tensor t({n, 1, h, w});
  for (std::size_t i : ones_items)
    for (std::size_t p = 0; p < h * w; ++p) t[i * h * w + p] = 1.0f;
  return t;
}

}  // namespace

TEST_CASE("method choice is uniform") {
  Rng rng(2);
  std::array<int, 4> counts{};
  for (int t = 0; t < 10000; ++t) counts[static_cast<int>(sample_mix_plan(4, 8, 8, rng).method)]++;
  for (int c : counts) CHECK(std::abs(c / 10000.0 - 0.25) <= 0.02);
}

TEST_CASE("plan invariants") {
  Rng rng(3);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 1 + rng.below(9), h = 4 + rng.below(13), w = 4 + rng.below(13);
    const MixPlan p = sample_mix_plan(n, h, w, rng);
    std::vector<std::size_t> sorted = p.perm;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(n);
    std::iota(iota.begin(), iota.end(), std::size_t{0});
    REQUIRE(sorted == iota);
    REQUIRE(p.gamma >= 0.0);
    REQUIRE(p.gamma <= 1.0);
    if (p.mask) {
      REQUIRE(ones_fraction(*p.mask) == p.gamma);
      const double count = p.gamma * static_cast<double>(h * w);
      REQUIRE(std::abs(count - std::round(count)) < 1e-9);
    }
    if (p.patch) {
      const Rect& d = p.patch->dst;
      REQUIRE(d.top + d.height <= h);
      REQUIRE(d.left + d.width <= w);
      REQUIRE(p.gamma == 1.0 - static_cast<double>(d.height * d.width) / static_cast<double>(h * w));
    }
  }
}

TEST_CASE("mixup examples") {
  Rng rng(5);
  MixConfig cfg;
  cfg.methods = {MixMethod::mixup};
  cfg.fixed_gamma = 1.0;
  const Tensor x = rkt::random_tensor(rng, {5, 2, 4, 4});
  CHECK(apply_mix_plan(x, sample_mix_plan(5, 4, 4, rng, cfg)) == x);

  MixPlan half = sample_mix_plan(2, 4, 4, rng, {.methods = {MixMethod::mixup}, .fixed_gamma = 0.5});
  half.perm = {1, 0};
  const Tensor ab = indicator_batch(2, 4, 4, {1});
  const Tensor blended = apply_mix_plan(ab, half);
  for (float v : blended.data()) CHECK(v == 0.5f);

  // batch of one: self mix
  const Tensor one = rkt::random_tensor(rng, {1, 1, 4, 4});
  const MixPlan self = sample_mix_plan(1, 4, 4, rng, {.methods = {MixMethod::mixup}});
  const Tensor mixed = apply_mix_plan(one, self);
  for (std::size_t i = 0; i < one.size(); ++i) CHECK(mixed[i] == doctest::Approx(one[i]).epsilon(1e-6));
}

TEST_CASE("fmix on indicator images reproduces the mask") {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    MixPlan p = sample_mix_plan(2, 12, 12, rng, {.methods = {MixMethod::fmix}});
    p.perm = {1, 0};
    const Tensor out = apply_mix_plan(indicator_batch(2, 12, 12, {0}), p);
    const Tensor first = out.slice(0).reshaped({12, 12});
    CHECK(first == *p.mask);
    double mean = 0.0;
    for (float v : first.data()) mean += v;
    CHECK(mean / 144.0 == doctest::Approx(p.gamma).epsilon(1e-12));
  }
}

TEST_CASE("fmix mask counts and coherence") {
  Rng rng(11);
  const FMixMask full = fmix_mask(8, 8, 1.0, 3.0, rng);
  for (float v : full.mask.data()) CHECK(v == 1.0f);
  CHECK(full.gamma == 1.0);
  const FMixMask none = fmix_mask(8, 8, 0.0, 3.0, rng);
  CHECK(none.gamma == 0.0);

  double agree = 0.0, pairs = 0.0;
  for (int t = 0; t < 100; ++t) {
    const FMixMask m = fmix_mask(32, 32, 0.5, 3.0, rng);
    CHECK(std::count(m.mask.data().begin(), m.mask.data().end(), 1.0f) == 512);
    CHECK(m.gamma == 0.5);
    for (std::size_t r = 0; r < 32; ++r)
      for (std::size_t c = 0; c < 32; ++c) {
        if (r + 1 < 32) agree += m.mask.at(r, c) == m.mask.at(r + 1, c), pairs += 1;
        if (c + 1 < 32) agree += m.mask.at(r, c) == m.mask.at(r, c + 1), pairs += 1;
      }
  }
  CHECK(agree / pairs >= 0.85);
  CHECK_THROWS_AS(fmix_mask(3, 8, 0.5, 3.0, rng), std::invalid_argument);
}

TEST_CASE("mix_labels") {
  Rng rng(13);
  MixPlan p = sample_mix_plan(2, 4, 4, rng, {.methods = {MixMethod::mixup}, .fixed_gamma = 0.7});
  p.perm = {1, 0};
  const std::vector<int> labels{0, 2};
  const Tensor y = one_hot(labels, 3);
  const Tensor m = mix_labels(y, p);
  CHECK(m.at(0, 0) == doctest::Approx(0.7));
  CHECK(m.at(0, 1) == 0.0f);
  CHECK(m.at(0, 2) == doctest::Approx(0.3));

  p.gamma = 1.0;
  CHECK(mix_labels(y, p) == y);
  const std::vector<int> same{1, 1};
  p.gamma = 0.3;
  CHECK(mix_labels(one_hot(same, 3), p) == one_hot(same, 3));

  Tensor bad = y;
  bad.at(0, 0) = 0.5f;
  CHECK_THROWS_AS(mix_labels(bad, p), std::invalid_argument);
}

TEST_CASE("rmix shares one plan across views") {
  Rng rng(17);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.below(6), h = 4 + rng.below(9), w = 4 + rng.below(9), k = 3;
    const Tensor x = rkt::random_tensor(rng, {n, 2, h, w});
    const Tensor xa = rkt::random_tensor(rng, {n, 2, h, w});
    const Tensor xh = rkt::random_tensor(rng, {n, 2, h, w});
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng.below(k));
    const RMixResult r = rmix(x, xa, xh, one_hot(labels, k), rng);
    const MixPlan& p = r.plan;
    CHECK(r.clean == apply_mix_plan(x, p));
    CHECK(r.aug == apply_mix_plan(xa, p));
    CHECK(r.adv == apply_mix_plan(xh, p));

    // selection pattern recovered independently from each view
    auto pattern = [&](const Tensor& in, const Tensor& out) {
      std::vector<int> sel(out.size());
      const std::size_t item = out.size() / n;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t e = 0; e < item; ++e) {
          const float a = in[i * item + e], b = in[p.perm[i] * item + e], o = out[i * item + e];
          sel[i * item + e] = p.perm[i] == i ? -1 : (o == a ? 1 : (o == b ? 0 : 2));
        }
      return sel;
    };
    if (p.method == MixMethod::mixup) {
      for (const auto* pair : {&x, &xa, &xh}) {
        const Tensor& in = *pair;
        const Tensor& out = pair == &x ? r.clean : (pair == &xa ? r.aug : r.adv);
        const std::size_t item = in.size() / n;
        for (std::size_t i = 0; i < n; ++i) {
          const float a = in[i * item], b = in[p.perm[i] * item];
          if (std::abs(a - b) > 0.05f) CHECK((out[i * item] - b) / (a - b) == doctest::Approx(p.gamma).epsilon(1e-4));
        }
      }
    } else {
      const auto s0 = pattern(x, r.clean);
      CHECK(s0 == pattern(xa, r.aug));
      CHECK(s0 == pattern(xh, r.adv));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += r.labels.at(i, c);
      worst = std::max(worst, std::abs(s - 1.0));
    }
    CHECK(worst <= 1e-7);
  }
}

TEST_CASE("rmix identical views give identical outputs and gamma is recoverable") {
  Rng rng(19);
  const Tensor x = rkt::random_tensor(rng, {4, 1, 8, 8});
  const std::vector<int> labels{0, 1, 2, 0};
  for (int t = 0; t < 40; ++t) {
    const RMixResult r = rmix(x, x, x, one_hot(labels, 3), rng);
    CHECK(r.clean == r.aug);
    CHECK(r.clean == r.adv);
    for (std::size_t i = 0; i < 4; ++i)
      if (labels[r.plan.perm[i]] != labels[i])
        CHECK(r.labels.at(i, static_cast<std::size_t>(labels[i])) == doctest::Approx(r.plan.gamma).epsilon(1e-6));
  }
  CHECK_THROWS_AS(rmix(x, x.reshaped({4, 1, 4, 16}), x, one_hot(labels, 3), rng), std::invalid_argument);
  CHECK_THROWS_AS(apply_mix_plan(x, sample_mix_plan(3, 8, 8, rng)), std::invalid_argument);
}

TEST_CASE("resize_bilinear fixed points") {
  Rng rng(23);
  const Tensor img = rkt::random_tensor(rng, {2, 5, 7});
  CHECK(resize_bilinear(img, 5, 7) == img);
  const Tensor flat({1, 6, 6}, 0.25f);
  const Tensor shrunk = resize_bilinear(flat, 3, 2);
  for (float v : shrunk.data()) CHECK(v == 0.25f);
}

TEST_CASE("mix config validation and names") {
  for (MixMethod m : all_mix_methods()) CHECK(parse_method(method_name(m)) == m);
  CHECK_THROWS_AS(parse_method("saliencymix"), std::invalid_argument);
  MixConfig c;
  c.methods.clear();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.fixed_gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.fmix_decay = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
