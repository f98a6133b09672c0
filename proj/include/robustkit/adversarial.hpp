// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "robustkit/model.hpp"
#include "robustkit/rng.hpp"
#include "robustkit/tensor.hpp"

namespace rk {

enum class AttackLoss { kl_consistency, cross_entropy, cw_margin };
enum class InitKind { gaussian, uniform };

std::string attack_loss_name(AttackLoss l);

/// L-inf attack knobs. Every iteration takes a signed-gradient step of size
/// `step`, clips to the eps-ball around the clean input, then to [0, 1].
struct AttackSpec {
  double eps = 0.031;
  double step = 0.003;
  int iters = 20;
  AttackLoss loss = AttackLoss::cross_entropy;
  bool random_start = true;
  InitKind init = InitKind::gaussian;
  double init_sigma = 0.001;

  void validate() const;

  /// eps 0.031, step 0.007, 10 iterations, KL consistency loss.
  static AttackSpec training();
  /// eps 0.031, step 0.003, cross-entropy.
  static AttackSpec evaluation(int iters);
};

/// Gradient of the attack objective w.r.t. the input batch. `target` is
/// the clean logits for kl_consistency and one-hot labels otherwise.
Tensor attack_input_gradient(const LayerStack& model, const Tensor& x_adv, AttackLoss loss, const Tensor& target);

/// Training-time example generation: ascends KL(f(x) || f(x_adv)) from a
/// Gaussian start x + init_sigma * N(0, I).
Tensor pgd_generate(const LayerStack& model, const Tensor& x, const AttackSpec& spec, Rng& rng);

/// clamp(x + eps * sign(grad_x CE(f(x), y)), 0, 1)
Tensor fgsm_attack(const LayerStack& model, const Tensor& x, const Tensor& y_onehot, double eps);

/// PGD ascending cross-entropy toward the true label.
Tensor pgd_attack(const LayerStack& model, const Tensor& x, const Tensor& y_onehot, const AttackSpec& spec,
                  Rng& rng);

/// PGD descending the margin z_true - max_{k != true} z_k, floored at -kappa (kappa = 0).
Tensor cw_attack(const LayerStack& model, const Tensor& x, const Tensor& y_onehot, const AttackSpec& spec,
                 Rng& rng);

/// Dispatches on spec.loss (kl_consistency is rejected: it needs no labels).
Tensor run_attack(const LayerStack& model, const Tensor& x, const Tensor& y_onehot, const AttackSpec& spec,
                  Rng& rng);

/// Examples crafted on `source` with pgd_attack, scored on `target` (Top1).
double transfer_attack(const LayerStack& source, const LayerStack& target, const Tensor& x,
                       std::span<const int> labels, const AttackSpec& spec, Rng& rng);

}  // namespace rk
