// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "robustkit/rng.hpp"
#include "robustkit/tensor.hpp"

namespace rk {

/// Row-wise softmax of [N, C] logits with max subtraction. Throws
/// std::invalid_argument("non-finite logits") on NaN/inf input.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// Row-wise log-softmax; same preconditions as softmax.
template <class T>
BasicTensor<T> log_softmax(const BasicTensor<T>& logits);

/// k Gamma(alpha, 1) draws normalized to a probability vector.
TensorD sample_dirichlet(Rng& rng, std::size_t k, double alpha);

/// Beta(alpha, alpha) from two Gamma draws.
double sample_beta(Rng& rng, double alpha);

Tensor sample_gaussian(Rng& rng, const Shape& shape);

/// [N] class indices -> [N, K] one-hot rows.
Tensor one_hot(std::span<const int> labels, std::size_t num_classes);

/// Index of the largest entry in each row; ties go to the lowest index.
template <class T>
std::vector<int> argmax_rows(const BasicTensor<T>& m);

/// Runs fn(i) for i in [0, n) over up to `threads` workers. Work items
/// must be independent; results do not depend on the thread count.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace rk
