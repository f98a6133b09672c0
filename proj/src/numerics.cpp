// SPDX-License-Identifier: Apache-2.0
#include "robustkit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

namespace rk {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma shape must be positive");
  if (shape < 1.0) {
    const double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

namespace {

template <class T>
void check_logits(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw std::invalid_argument("logits must be [N, C], got " + shape_str(logits.shape()));
  for (T v : logits.data())
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite logits");
}

}  // namespace

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  check_logits(logits);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  BasicTensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    T mx = logits.at(i, 0);
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, logits.at(i, k));
    T sum = 0;
    for (std::size_t k = 0; k < c; ++k) sum += (out.at(i, k) = std::exp(logits.at(i, k) - mx));
    for (std::size_t k = 0; k < c; ++k) out.at(i, k) /= sum;
  }
  return out;
}

template <class T>
BasicTensor<T> log_softmax(const BasicTensor<T>& logits) {
  check_logits(logits);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  BasicTensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    T mx = logits.at(i, 0);
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, logits.at(i, k));
    T sum = 0;
    for (std::size_t k = 0; k < c; ++k) sum += std::exp(logits.at(i, k) - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t k = 0; k < c; ++k) out.at(i, k) = logits.at(i, k) - lse;
  }
  return out;
}

template Tensor softmax(const Tensor&);
template TensorD softmax(const TensorD&);
template Tensor log_softmax(const Tensor&);
template TensorD log_softmax(const TensorD&);

TensorD sample_dirichlet(Rng& rng, std::size_t k, double alpha) {
  if (k < 1) throw std::invalid_argument("dirichlet needs k >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet alpha must be positive");
  TensorD out({k});
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += (out[i] = rng.gamma(alpha));
  if (sum <= 0.0) {
    // every draw underflowed (tiny alpha); fall back to a vertex
    out[rng.below(k)] = 1.0;
    return out;
  }
  for (std::size_t i = 0; i < k; ++i) out[i] /= sum;
  return out;
}

double sample_beta(Rng& rng, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("beta alpha must be positive");
  const double a = rng.gamma(alpha);
  const double b = rng.gamma(alpha);
  if (a + b <= 0.0) return 0.5;
  return a / (a + b);
}

Tensor sample_gaussian(Rng& rng, const Shape& shape) {
  Tensor out(shape);
  for (float& v : out.data()) v = static_cast<float>(rng.normal());
  return out;
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
  Tensor out({labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " out of range");
    out.at(i, static_cast<std::size_t>(labels[i])) = 1.0f;
  }
  return out;
}

template <class T>
std::vector<int> argmax_rows(const BasicTensor<T>& m) {
  const std::size_t n = m.dim(0), c = m.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k)
      if (m.at(i, k) > m.at(i, best)) best = k;
    out[i] = static_cast<int>(best);
  }
  return out;
}

template std::vector<int> argmax_rows(const Tensor&);
template std::vector<int> argmax_rows(const TensorD&);

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace rk
