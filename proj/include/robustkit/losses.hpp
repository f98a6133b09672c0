// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "robustkit/tensor.hpp"

namespace rk {

/// Probabilities are floored at this value inside logarithms.
inline constexpr double kProbFloor = 1e-12;

template <class T>
struct LossGrad {
  double loss = 0.0;
  BasicTensor<T> grad;
};

template <class T>
struct PairLossGrad {
  double loss = 0.0;
  BasicTensor<T> grad_p;
  BasicTensor<T> grad_q;
};

/// Mean over rows of -sum_k y_k log softmax(z)_k. Gradient (softmax - y) / N.
/// Label rows must sum to 1 (within 1e-4).
template <class T>
LossGrad<T> soft_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& soft_labels);

/// Mean KL(softmax(p) || softmax(q)); p is a constant target, the gradient
/// is w.r.t. the q logits only.
template <class T>
LossGrad<T> kl_divergence(const BasicTensor<T>& p_logits, const BasicTensor<T>& q_logits);

/// Mean JS(softmax(p), softmax(q)) = KL(p||m)/2 + KL(q||m)/2, m = (p+q)/2.
/// Gradients flow through both branches, including through m.
template <class T>
PairLossGrad<T> js_divergence(const BasicTensor<T>& p_logits, const BasicTensor<T>& q_logits);

/// JS divergence of two probability rows [N, K] given directly (no softmax).
double js_divergence_probs(const TensorD& p, const TensorD& q);

template <class T>
struct BasicLossBreakdown {
  double ce = 0.0;
  double js_aug = 0.0;
  double js_adv = 0.0;
  double total = 0.0;
  BasicTensor<T> grad_clean;
  BasicTensor<T> grad_aug;
  BasicTensor<T> grad_adv;
};

using LossBreakdown = BasicLossBreakdown<float>;

/// ce(clean, Y') + lambda1 * js(clean, aug) + lambda2 * js(clean, adv), with
/// per-branch logit gradients. The clean branch collects all three terms.
template <class T>
BasicLossBreakdown<T> augrmixat_loss(const BasicTensor<T>& logits_clean, const BasicTensor<T>& logits_aug,
                                     const BasicTensor<T>& logits_adv, const BasicTensor<T>& mixed_labels,
                                     double lambda1, double lambda2);

}  // namespace rk
