// SPDX-License-Identifier: Apache-2.0
#include "robustkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "robustkit/numerics.hpp"

namespace rk {

namespace {

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.rank() != 2 || a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

double safe_log(double p) { return std::log(std::max(p, kProbFloor)); }

}  // namespace

template <class T>
LossGrad<T> soft_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& soft_labels) {
  require_same_shape(logits, soft_labels, "soft_cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += soft_labels.at(i, c);
    if (std::abs(s - 1.0) > 1e-4)
      throw std::invalid_argument("soft_cross_entropy: label row " + std::to_string(i) + " sums to " +
                                  std::to_string(s) + ", not 1");
  }
  const BasicTensor<T> logp = log_softmax(logits);
  LossGrad<T> out{0.0, BasicTensor<T>(logits.shape())};
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      const T y = soft_labels.at(i, c);
      out.loss -= static_cast<double>(y) * static_cast<double>(logp.at(i, c));
      out.grad.at(i, c) = (std::exp(logp.at(i, c)) - y) * inv_n;
    }
  out.loss /= static_cast<double>(n);
  return out;
}

template <class T>
LossGrad<T> kl_divergence(const BasicTensor<T>& p_logits, const BasicTensor<T>& q_logits) {
  require_same_shape(p_logits, q_logits, "kl_divergence");
  const std::size_t n = p_logits.dim(0), k = p_logits.dim(1);
  const BasicTensor<T> p = softmax(p_logits);
  const BasicTensor<T> logq = log_softmax(q_logits);
  LossGrad<T> out{0.0, BasicTensor<T>(q_logits.shape())};
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      const double pc = p.at(i, c);
      if (pc > 0.0) out.loss += pc * (safe_log(pc) - static_cast<double>(logq.at(i, c)));
      // d/dq_logits of sum_k p_k (log p_k - log q_k) = q - p
      out.grad.at(i, c) = (std::exp(logq.at(i, c)) - p.at(i, c)) * inv_n;
    }
  out.loss = std::max(0.0, out.loss / static_cast<double>(n));
  return out;
}

template <class T>
PairLossGrad<T> js_divergence(const BasicTensor<T>& p_logits, const BasicTensor<T>& q_logits) {
  require_same_shape(p_logits, q_logits, "js_divergence");
  const std::size_t n = p_logits.dim(0), k = p_logits.dim(1);
  const BasicTensor<T> p = softmax(p_logits);
  const BasicTensor<T> q = softmax(q_logits);
  PairLossGrad<T> out{0.0, BasicTensor<T>(p.shape()), BasicTensor<T>(q.shape())};
  std::vector<double> gp(k), gq(k);
  for (std::size_t i = 0; i < n; ++i) {
    double dot_p = 0.0, dot_q = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double pc = p.at(i, c), qc = q.at(i, c);
      const double lm = safe_log(0.5 * (pc + qc));
      const double lp = safe_log(pc), lq = safe_log(qc);
      out.loss += 0.5 * (pc * (lp - lm) + qc * (lq - lm));
      // dJS/dp_c = log(p_c / m_c) / 2; the terms through m cancel.
      gp[c] = 0.5 * (lp - lm);
      gq[c] = 0.5 * (lq - lm);
      dot_p += pc * gp[c];
      dot_q += qc * gq[c];
    }
    for (std::size_t c = 0; c < k; ++c) {
      out.grad_p.at(i, c) = static_cast<T>(p.at(i, c) * (gp[c] - dot_p) / static_cast<double>(n));
      out.grad_q.at(i, c) = static_cast<T>(q.at(i, c) * (gq[c] - dot_q) / static_cast<double>(n));
    }
  }
  out.loss = std::max(0.0, out.loss / static_cast<double>(n));
  return out;
}

double js_divergence_probs(const TensorD& p, const TensorD& q) {
  require_same_shape(p, q, "js_divergence_probs");
  const std::size_t n = p.dim(0), k = p.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      const double pc = p.at(i, c), qc = q.at(i, c);
      const double lm = safe_log(0.5 * (pc + qc));
      if (pc > 0.0) total += 0.5 * pc * (safe_log(pc) - lm);
      if (qc > 0.0) total += 0.5 * qc * (safe_log(qc) - lm);
    }
  return total / static_cast<double>(n);
}

template <class T>
BasicLossBreakdown<T> augrmixat_loss(const BasicTensor<T>& logits_clean, const BasicTensor<T>& logits_aug,
                                     const BasicTensor<T>& logits_adv, const BasicTensor<T>& mixed_labels,
                                     double lambda1, double lambda2) {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
    throw std::invalid_argument("augrmixat_loss: lambda weights must be nonnegative");
  require_same_shape(logits_clean, logits_aug, "augrmixat_loss");
  require_same_shape(logits_clean, logits_adv, "augrmixat_loss");
  auto ce = soft_cross_entropy(logits_clean, mixed_labels);
  auto ja = js_divergence(logits_clean, logits_aug);
  auto jv = js_divergence(logits_clean, logits_adv);
  BasicLossBreakdown<T> out;
  out.ce = ce.loss;
  out.js_aug = ja.loss;
  out.js_adv = jv.loss;
  out.total = ce.loss + lambda1 * ja.loss + lambda2 * jv.loss;
  const T l1 = static_cast<T>(lambda1), l2 = static_cast<T>(lambda2);
  out.grad_clean = std::move(ce.grad);
  out.grad_aug = BasicTensor<T>(logits_aug.shape());
  out.grad_adv = BasicTensor<T>(logits_adv.shape());
  for (std::size_t i = 0; i < out.grad_clean.size(); ++i) {
    out.grad_clean[i] += l1 * ja.grad_p[i] + l2 * jv.grad_p[i];
    out.grad_aug[i] = l1 * ja.grad_q[i];
    out.grad_adv[i] = l2 * jv.grad_q[i];
  }
  return out;
}

template LossGrad<float> soft_cross_entropy(const Tensor&, const Tensor&);
template LossGrad<double> soft_cross_entropy(const TensorD&, const TensorD&);
template LossGrad<float> kl_divergence(const Tensor&, const Tensor&);
template LossGrad<double> kl_divergence(const TensorD&, const TensorD&);
template PairLossGrad<float> js_divergence(const Tensor&, const Tensor&);
template PairLossGrad<double> js_divergence(const TensorD&, const TensorD&);
template BasicLossBreakdown<float> augrmixat_loss(const Tensor&, const Tensor&, const Tensor&, const Tensor&,
                                                  double, double);
template BasicLossBreakdown<double> augrmixat_loss(const TensorD&, const TensorD&, const TensorD&,
                                                   const TensorD&, double, double);

}  // namespace rk
