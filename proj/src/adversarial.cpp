// SPDX-License-Identifier: Apache-2.0
#include "robustkit/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "robustkit/losses.hpp"
#include "robustkit/numerics.hpp"
#include "robustkit/robustness.hpp"

namespace rk {

std::string attack_loss_name(AttackLoss l) {
  switch (l) {
    case AttackLoss::kl_consistency: return "kl_consistency";
    case AttackLoss::cross_entropy: return "cross_entropy";
    case AttackLoss::cw_margin: return "cw_margin";
  }
  return "?";
}

void AttackSpec::validate() const {
  if (!(eps >= 0.0)) throw std::invalid_argument("attack eps must be >= 0");
  if (iters < 0) throw std::invalid_argument("attack iters must be >= 0");
  if (iters > 0 && !(step > 0.0)) throw std::invalid_argument("attack step must be > 0 when iters > 0");
  if (!(init_sigma >= 0.0)) throw std::invalid_argument("attack init_sigma must be >= 0");
}

AttackSpec AttackSpec::training() {
  AttackSpec s;
  s.eps = 0.031;
  s.step = 0.007;
  s.iters = 10;
  s.loss = AttackLoss::kl_consistency;
  return s;
}

AttackSpec AttackSpec::evaluation(int iters) {
  AttackSpec s;
  s.iters = iters;
  return s;
}

Tensor attack_input_gradient(const LayerStack& model, const Tensor& x_adv, AttackLoss loss, const Tensor& target) {
  BasicTrace<float> trace;
  const Tensor logits = model.forward(x_adv, &trace);
  Tensor upstream;
  switch (loss) {
    case AttackLoss::kl_consistency:
      upstream = kl_divergence(target, logits).grad;
      break;
    case AttackLoss::cross_entropy:
      upstream = soft_cross_entropy(logits, target).grad;
      break;
    case AttackLoss::cw_margin: {
      // ascend -max(margin, -kappa) with kappa = 0
      upstream = Tensor(logits.shape());
      const auto truth = argmax_rows(target);
      for (std::size_t i = 0; i < logits.dim(0); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        std::size_t best = t == 0 ? 1 : 0;
        for (std::size_t k = 0; k < logits.dim(1); ++k)
          if (k != t && logits.at(i, k) > logits.at(i, best)) best = k;
        if (logits.at(i, t) - logits.at(i, best) > 0.0f) {
          upstream.at(i, t) = -1.0f;
          upstream.at(i, best) = 1.0f;
        }
      }
      break;
    }
  }
  return model.backward(trace, upstream, BackwardOptions{.param_grads = false, .input_grad = true}).input;
}

namespace {

void project(Tensor& x_adv, const Tensor& x, double eps) {
  const float e = static_cast<float>(eps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    float v = std::min(std::max(x_adv[i], x[i] - e), x[i] + e);
    x_adv[i] = std::clamp(v, 0.0f, 1.0f);
  }
}

Tensor run_pgd(const LayerStack& model, const Tensor& x, const Tensor& target, const AttackSpec& spec, Rng& rng) {
  spec.validate();
  Tensor x_adv = x;
  if (spec.random_start) {
    for (std::size_t i = 0; i < x_adv.size(); ++i)
      x_adv[i] += spec.init == InitKind::gaussian ? static_cast<float>(spec.init_sigma * rng.normal())
                                                  : static_cast<float>(rng.uniform(-spec.eps, spec.eps));
    project(x_adv, x, spec.eps);
  }
  const float step = static_cast<float>(spec.step);
  for (int t = 0; t < spec.iters; ++t) {
    const Tensor g = attack_input_gradient(model, x_adv, spec.loss, target);
    for (std::size_t i = 0; i < x_adv.size(); ++i) {
      const float s = g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f);
      x_adv[i] = x_adv[i] + step * s;
    }
    project(x_adv, x, spec.eps);
  }
  return x_adv;
}

void require_labels(const Tensor& x, const Tensor& y_onehot) {
  if (y_onehot.rank() != 2 || y_onehot.dim(0) != x.dim(0))
    throw std::invalid_argument("attack labels " + shape_str(y_onehot.shape()) + " do not match batch " +
                                shape_str(x.shape()));
}

}  // namespace

Tensor pgd_generate(const LayerStack& model, const Tensor& x, const AttackSpec& spec, Rng& rng) {
  AttackSpec s = spec;
  s.loss = AttackLoss::kl_consistency;
  s.init = InitKind::gaussian;
  s.random_start = true;
  const Tensor clean_logits = model.forward(x, nullptr);
  return run_pgd(model, x, clean_logits, s, rng);
}

Tensor fgsm_attack(const LayerStack& model, const Tensor& x, const Tensor& y_onehot, double eps) {
  require_labels(x, y_onehot);
  if (!(eps >= 0.0)) throw std::invalid_argument("fgsm eps must be >= 0");
  const Tensor g = attack_input_gradient(model, x, AttackLoss::cross_entropy, y_onehot);
  const float e = static_cast<float>(eps);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float s = g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f);
    out[i] = std::clamp(x[i] + e * s, 0.0f, 1.0f);
  }
  return out;
}

Tensor pgd_attack(const LayerStack& model, const Tensor& x, const Tensor& y_onehot, const AttackSpec& spec,
                  Rng& rng) {
  require_labels(x, y_onehot);
  AttackSpec s = spec;
  s.loss = AttackLoss::cross_entropy;
  return run_pgd(model, x, y_onehot, s, rng);
}

Tensor cw_attack(const LayerStack& model, const Tensor& x, const Tensor& y_onehot, const AttackSpec& spec, Rng& rng) {
  require_labels(x, y_onehot);
  AttackSpec s = spec;
  s.loss = AttackLoss::cw_margin;
  return run_pgd(model, x, y_onehot, s, rng);
}

Tensor run_attack(const LayerStack& model, const Tensor& x, const Tensor& y_onehot, const AttackSpec& spec,
                  Rng& rng) {
  switch (spec.loss) {
    case AttackLoss::cross_entropy: return pgd_attack(model, x, y_onehot, spec, rng);
    case AttackLoss::cw_margin: return cw_attack(model, x, y_onehot, spec, rng);
    case AttackLoss::kl_consistency: break;
  }
  throw std::invalid_argument("run_attack: kl_consistency is a training-time loss; use pgd_generate");
}

double transfer_attack(const LayerStack& source, const LayerStack& target, const Tensor& x,
                       std::span<const int> labels, const AttackSpec& spec, Rng& rng) {
  if (source.architecture().input_shape() != target.architecture().input_shape())
    throw std::invalid_argument("transfer_attack: source and target input shapes differ");
  if (source.architecture().num_classes() != target.architecture().num_classes())
    throw std::invalid_argument("transfer_attack: source and target class counts differ");
  const Tensor y = one_hot(labels, target.architecture().num_classes());
  const Tensor x_adv = pgd_attack(source, x, y, spec, rng);
  return top_k_accuracy(target.forward(x_adv, nullptr), labels, 1);
}

}  // namespace rk
