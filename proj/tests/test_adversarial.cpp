// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "robustkit/adversarial.hpp"
#include "robustkit/numerics.hpp"
#include "robustkit/robustness.hpp"
#include "support.hpp"

using namespace rk;

namespace {

// logits = W x + b on a flattened [1, 1, 4] input
LayerStack linear2(const std::vector<float>& w, const std::vector<float>& b) {
  LayerStack s(Architecture({1, 1, 4}, {LayerSpec::flatten(), LayerSpec::dense(4, 2)}));
  s.params()[0] = Tensor({2, 4}, w);
  s.params()[1] = Tensor({2}, b);
  return s;
}

float sgn(double v) { return v > 0 ? 1.0f : (v < 0 ? -1.0f : 0.0f); }

double max_dev(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

void check_contract(const Tensor& x, const Tensor& adv, double eps) {
  REQUIRE(adv.shape() == x.shape());
  REQUIRE(max_dev(adv, x) <= eps + std::ldexp(1.0, -20));
  for (float v : adv.data()) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

}  // namespace

TEST_CASE("pgd_generate trivial cases") {
  Rng rng(1);
  const LayerStack m = LayerStack::kaiming(Architecture::tiny_cnn({1, 8, 8}, 3), rng);
  const Tensor x = rkt::random_tensor(rng, {3, 1, 8, 8});
  AttackSpec s = AttackSpec::training();
  s.eps = 0.0;
  Rng a(5);
  CHECK(pgd_generate(m, x, s, a) == x);
  s = AttackSpec::training();
  s.iters = 0;
  s.init_sigma = 0.0;
  CHECK(pgd_generate(m, x, s, a) == x);
}

TEST_CASE("one KL step on a linear pair matches the closed form") {
  const std::vector<float> w{0.8f, -0.3f, 0.5f, 1.1f, -0.6f, 0.9f, -0.2f, 0.4f};
  const LayerStack m = linear2(w, {0.1f, -0.1f});
  const Tensor x({2, 1, 1, 4}, {0.2f, 0.5f, 0.7f, 0.9f, 0.4f, 0.1f, 0.6f, 0.3f});
  AttackSpec s = AttackSpec::training();
  s.iters = 1;
  s.init_sigma = 0.01;
  Rng rng(42);
  const Tensor got = pgd_generate(m, x, s, rng);

  // replicate the Gaussian start with the same generator order
  Rng rep(42);
  std::vector<float> x0(8);
  for (std::size_t i = 0; i < 8; ++i) {
    const float v = x[i] + static_cast<float>(s.init_sigma * rep.normal());
    x0[i] = std::clamp(std::clamp(v, x[i] - 0.031f, x[i] + 0.031f), 0.0f, 1.0f);
  }
  auto probs = [&](const float* in) {
    const double z0 = 0.1 + w[0] * in[0] + w[1] * in[1] + w[2] * in[2] + w[3] * in[3];
    const double z1 = -0.1 + w[4] * in[0] + w[5] * in[1] + w[6] * in[2] + w[7] * in[3];
    const double e = std::exp(z1 - z0);
    return std::array<double, 2>{1.0 / (1.0 + e), e / (1.0 + e)};
  };
  for (std::size_t n = 0; n < 2; ++n) {
    const auto p = probs(&x[n * 4]);
    const auto q = probs(&x0[n * 4]);
    for (std::size_t i = 0; i < 4; ++i) {
      // d KL(p || q) / d x = W^T (q - p)
      const double g = w[i] * (q[0] - p[0]) + w[4 + i] * (q[1] - p[1]);
      const float expect_raw = x0[n * 4 + i] + static_cast<float>(s.step) * sgn(g);
      const float xi = x[n * 4 + i];
      const float expect = std::clamp(std::clamp(expect_raw, xi - 0.031f, xi + 0.031f), 0.0f, 1.0f);
      CHECK(got[n * 4 + i] == expect);
    }
  }
}

TEST_CASE("FGSM on a linear model") {
  const std::vector<float> w{1.0f, -2.0f, 0.5f, 0.0f, -1.0f, 1.0f, -0.5f, 3.0f};
  const LayerStack m = linear2(w, {0.0f, 0.0f});
  const Tensor x({2, 1, 1, 4}, 0.5f);
  const std::vector<int> y{0, 1};
  const Tensor adv = fgsm_attack(m, x, one_hot(y, 2), 0.1);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t t = static_cast<std::size_t>(y[n]), o = 1 - t;
      const float dir = sgn(w[o * 4 + i] - w[t * 4 + i]);
      CHECK(adv[n * 4 + i] == 0.5f + 0.1f * dir);
    }
  CHECK(fgsm_attack(m, x, one_hot(y, 2), 0.0) == x);
}

TEST_CASE("FGSM perturbation is a signed eps pattern") {
  Rng rng(3);
  const LayerStack m = LayerStack::kaiming(Architecture::tiny_cnn({1, 8, 8}, 3), rng);
  const Tensor x = rkt::random_tensor(rng, {4, 1, 8, 8}, 0.1, 0.9);
  const std::vector<int> y{0, 1, 2, 0};
  const Tensor adv = fgsm_attack(m, x, one_hot(y, 3), 0.05);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float d = adv[i] - x[i];
    CHECK((d == 0.0f || std::abs(std::abs(d) - 0.05f) < 1e-6f));
  }
}

TEST_CASE("FGSM equals one PGD step of size eps without random start") {
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    const Architecture arch = rkt::random_arch(rng);
    const LayerStack m = LayerStack::kaiming(arch, rng);
    const std::size_t n = 1 + rng.below(4);
    Shape shape{n};
    for (std::size_t d : arch.input_shape()) shape.push_back(d);
    const Tensor x = rkt::random_tensor(rng, shape);
    std::vector<int> y(n);
    for (int& l : y) l = static_cast<int>(rng.below(arch.num_classes()));
    const Tensor yo = one_hot(y, arch.num_classes());
    AttackSpec s;
    s.eps = rng.uniform(0.0, 0.1);
    s.step = s.eps;
    s.iters = 1;
    s.random_start = false;
    Rng r(0);
    CHECK(pgd_attack(m, x, yo, s, r) == fgsm_attack(m, x, yo, s.eps));
  }
}

TEST_CASE("every attack respects the ball and the pixel range") {
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    const Architecture arch = rkt::random_arch(rng);
    const LayerStack m = LayerStack::kaiming(arch, rng);
    const LayerStack before = m;
    const std::size_t n = 1 + rng.below(3);
    Shape shape{n};
    for (std::size_t d : arch.input_shape()) shape.push_back(d);
    const Tensor x = rkt::random_tensor(rng, shape);
    std::vector<int> y(n);
    for (int& l : y) l = static_cast<int>(rng.below(arch.num_classes()));
    const Tensor yo = one_hot(y, arch.num_classes());
    AttackSpec s;
    s.eps = rng.uniform(0.0, 0.1);
    s.step = rng.uniform(0.001, 0.05);
    s.iters = static_cast<int>(rng.below(6));
    s.random_start = rng.coin();
    s.init = rng.coin() ? InitKind::gaussian : InitKind::uniform;
    s.init_sigma = rng.uniform(0.0, 0.05);
    check_contract(x, pgd_generate(m, x, s, rng), s.eps);
    check_contract(x, pgd_attack(m, x, yo, s, rng), s.eps);
    check_contract(x, cw_attack(m, x, yo, s, rng), s.eps);
    check_contract(x, fgsm_attack(m, x, yo, s.eps), s.eps);
    REQUIRE(m.params() == before.params());
  }
}

TEST_CASE("attack success grows with iterations") {
  int seeds_with_inversion = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const LayerStack m = LayerStack::kaiming(Architecture::mlp({1, 6, 6}, 3, 16), rng);
    const Tensor x = rkt::random_tensor(rng, {64, 1, 6, 6});
    const auto pred = argmax_rows(m.forward(x, nullptr));
    const Tensor yo = one_hot(pred, 3);
    double prev = -1.0;
    bool inverted = false;
    for (int iters : {1, 5, 10, 20}) {
      AttackSpec s = AttackSpec::evaluation(iters);
      Rng r(seed);
      const Tensor adv = pgd_attack(m, x, yo, s, r);
      const double err = 1.0 - top_k_accuracy(m.forward(adv, nullptr), pred, 1);
      if (err < prev) inverted = true;
      prev = err;
    }
    seeds_with_inversion += inverted;
  }
  CHECK(seeds_with_inversion <= 1);
}

TEST_CASE("CW leaves wide-margin points alone and matches CE direction for two classes") {
  const std::vector<float> w{1.0f, -1.0f, 0.5f, -0.5f, -1.0f, 1.0f, -0.5f, 0.5f};
  const LayerStack wide = linear2(w, {5.0f, -5.0f});
  const Tensor x({3, 1, 1, 4}, {0.5f, 0.5f, 0.5f, 0.5f, 0.2f, 0.8f, 0.3f, 0.6f, 0.9f, 0.1f, 0.4f, 0.7f});
  const std::vector<int> y{0, 0, 0};
  AttackSpec s = AttackSpec::evaluation(20);
  s.eps = 0.01;
  Rng rng(9);
  const Tensor adv = cw_attack(wide, x, one_hot(y, 2), s, rng);
  CHECK(top_k_accuracy(wide.forward(adv, nullptr), y, 1) == 1.0);

  const LayerStack m = linear2(w, {0.01f, -0.01f});
  AttackSpec one;
  one.iters = 1;
  one.step = 0.02;
  one.eps = 0.05;
  one.random_start = false;
  Rng r1(0), r2(0);
  const Tensor by_x = one_hot(std::vector<int>{0, 1, 0}, 2);
  const Tensor a = cw_attack(m, x, by_x, one, r1);
  const Tensor b = pgd_attack(m, x, by_x, one, r2);
  const auto pred = argmax_rows(m.forward(x, nullptr));
  for (std::size_t n = 0; n < 3; ++n) {
    if (pred[n] != argmax_rows(by_x)[n]) continue;  // margin already negative
    for (std::size_t i = 0; i < 4; ++i) CHECK(a[n * 4 + i] == b[n * 4 + i]);
  }
}

TEST_CASE("transfer attack degenerate cases") {
  Rng rng(12);
  const LayerStack src = LayerStack::kaiming(Architecture::mlp({1, 6, 6}, 3, 8), rng);
  const LayerStack tgt = LayerStack::kaiming(Architecture::mlp({1, 6, 6}, 3, 8), rng);
  const Tensor x = rkt::random_tensor(rng, {40, 1, 6, 6});
  std::vector<int> y(40);
  for (int& l : y) l = static_cast<int>(rng.below(3));
  const AttackSpec s = AttackSpec::evaluation(10);

  Rng a(7), b(7);
  const double self = transfer_attack(tgt, tgt, x, y, s, a);
  const double white = top_k_accuracy(tgt.forward(pgd_attack(tgt, x, one_hot(y, 3), s, b), nullptr), y, 1);
  CHECK(self == white);

  AttackSpec zero = s;
  zero.eps = 0.0;
  CHECK(transfer_attack(src, tgt, x, y, zero, a) == top_k_accuracy(tgt.forward(x, nullptr), y, 1));
  const double acc = transfer_attack(src, tgt, x, y, s, a);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  const LayerStack other = LayerStack::kaiming(Architecture::mlp({1, 5, 5}, 3, 8), rng);
  CHECK_THROWS_AS(transfer_attack(other, tgt, x, y, s, a), std::invalid_argument);
}

TEST_CASE("attack spec validation") {
  AttackSpec s;
  s.eps = -0.1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.iters = 2;
  s.step = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.iters = 0;
  CHECK_NOTHROW(s.validate());
  s = {};
  s.loss = AttackLoss::kl_consistency;
  Rng rng(1);
  const LayerStack m(Architecture({1, 1, 4}, {LayerSpec::flatten(), LayerSpec::dense(4, 2)}));
  const Tensor x({1, 1, 1, 4}, 0.5f);
  CHECK_THROWS_AS(run_attack(m, x, one_hot(std::vector<int>{0}, 2), s, rng), std::invalid_argument);
  CHECK_THROWS_AS(fgsm_attack(m, x, one_hot(std::vector<int>{0, 1}, 2), 0.1), std::invalid_argument);
}
