// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "robustkit/model.hpp"
#include "robustkit/rng.hpp"
#include "robustkit/tensor.hpp"

namespace rkt {

inline rk::Tensor random_tensor(rk::Rng& rng, const rk::Shape& shape, double lo = 0.0, double hi = 1.0) {
  rk::Tensor t(shape);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline rk::TensorD random_tensor_d(rk::Rng& rng, const rk::Shape& shape, double lo = -1.0, double hi = 1.0) {
  rk::TensorD t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Largest relative error between `analytic` and central differences of
/// `f` around `x` (x is perturbed in place and restored).
inline double fd_check(std::vector<double>& x, const std::vector<double>& analytic,
                       const std::function<double()>& f, double h = 1e-4, double abs_floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    if (std::abs(numeric) < abs_floor && std::abs(analytic[i]) < abs_floor) continue;
    worst = std::max(worst, rel_err(numeric, analytic[i]));
  }
  return worst;
}

/// Random small architecture (<= 5 layers with parameters folded in).
inline rk::Architecture random_arch(rk::Rng& rng) {
  using rk::LayerSpec;
  const std::size_t c = 1 + rng.below(2), side = 4 + 2 * rng.below(2), k = 2 + rng.below(2);
  switch (rng.below(3)) {
    case 0:
      return rk::Architecture({c, side, side}, {LayerSpec::flatten(), LayerSpec::dense(c * side * side, 6),
                                                LayerSpec::relu(), LayerSpec::dense(6, k)});
    case 1:
      return rk::Architecture({c, side, side},
                              {LayerSpec::conv2d(c, 3, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(),
                               LayerSpec::flatten(), LayerSpec::dense(3 * (side / 2) * (side / 2), k)});
    default:
      return rk::Architecture({c, side, side},
                              {LayerSpec::conv2d(c, 2, 3, 2, 1), LayerSpec::relu(), LayerSpec::flatten(),
                               LayerSpec::dense(2 * ((side + 1) / 2) * ((side + 1) / 2), k)});
  }
}

/// Random double-precision stack with weights in [-1, 1] and nonzero biases.
inline rk::LayerStackD random_stack_d(rk::Rng& rng, const rk::Architecture& arch) {
  rk::LayerStackD s(arch);
  for (auto& p : s.params())
    for (double& v : p.data()) v = rng.uniform(-1.0, 1.0);
  return s;
}

}  // namespace rkt
