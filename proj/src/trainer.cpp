// SPDX-License-Identifier: Apache-2.0
#include "robustkit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "robustkit/numerics.hpp"

namespace rk {

std::string mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::augrmixat: return "augrmixat";
    case TrainMode::standard: return "standard";
    case TrainMode::pgdat: return "pgdat";
  }
  return "?";
}

TrainMode parse_mode(const std::string& name) {
  for (TrainMode m : {TrainMode::augrmixat, TrainMode::standard, TrainMode::pgdat})
    if (mode_name(m) == name) return m;
  throw std::invalid_argument("unknown mode '" + name + "'; valid: augrmixat, standard, pgdat");
}

void TrainConfig::validate() const {
  if (!(lambda1 >= 0.0)) throw std::invalid_argument("lambda1 must be >= 0");
  if (!(lambda2 >= 0.0)) throw std::invalid_argument("lambda2 must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(lr0 >= 0.0)) throw std::invalid_argument("lr0 must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  attack.validate();
  augment.validate();
  mix.validate();
}

std::string metrics_row(const EpochReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%lld", r.epoch, r.lr, r.ce, r.js_aug, r.js_adv,
                r.total, r.train_top1, static_cast<long long>(r.wall_ms));
  return buf;
}

Architecture resolve_architecture(const std::string& arch, const Shape& item_shape, std::size_t num_classes) {
  if (arch == "tinycnn") return Architecture::tiny_cnn(item_shape, num_classes);
  if (arch == "mlp") return Architecture::mlp(item_shape, num_classes);
  Architecture a = Architecture::parse(arch);
  if (a.input_shape() != item_shape || a.num_classes() != num_classes)
    throw std::invalid_argument("architecture " + arch + " does not fit data " + shape_str(item_shape) + " with " +
                                std::to_string(num_classes) + " classes");
  return a;
}

LayerStack init_model(const TrainConfig& cfg, const Dataset& ds) {
  Rng rng(derive_seed(cfg.seed, 1));
  return LayerStack::kaiming(resolve_architecture(cfg.arch, ds.item_shape(), ds.num_classes), rng);
}

namespace {

constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kBatchStream = 3;

struct Batch {
  Tensor x;
  Tensor y;  // one-hot
};

class Loop {
 public:
  Loop(const Dataset& ds, const TrainConfig& cfg, const TrainHooks& hooks, const LayerStack* initial)
      : ds_(ds), cfg_(cfg), hooks_(hooks) {
    ds.validate();
    if (ds.size() == 0) throw std::invalid_argument("training dataset is empty");
    cfg.validate();
    model_ = initial ? *initial : init_model(cfg, ds);
    state_ = OptimizerState(model_, cfg.momentum, cfg.weight_decay, cfg.lr0);
  }

  template <class StepFn>
  TrainResult run(StepFn&& step) {
    TrainResult result;
    const std::size_t n = ds_.size();
    const auto bs = static_cast<std::size_t>(cfg_.batch_size);
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      epoch_ = epoch;
      state_.lr = cosine_lr(epoch, cfg_.epochs, cfg_.lr0);
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle(derive_seed(derive_seed(cfg_.seed, kShuffleStream), static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[shuffle.below(i + 1)]);

      EpochReport rep;
      rep.epoch = epoch;
      rep.lr = state_.lr;
      std::size_t batches = 0, correct = 0;
      for (std::size_t start = 0; start < n; start += bs) {
        stage(Stage::read_batch);
        const std::span<const std::size_t> idx(order.data() + start, std::min(bs, n - start));
        Batch batch{gather_rows(ds_.images, idx), Tensor({idx.size(), ds_.num_classes})};
        for (std::size_t i = 0; i < idx.size(); ++i)
          batch.y.at(i, static_cast<std::size_t>(ds_.labels[idx[i]])) = 1.0f;
        Rng rng(derive_seed(derive_seed(cfg_.seed, kBatchStream),
                            static_cast<std::uint64_t>(epoch) * 1000003ULL + start / bs));
        const auto [loss, hits] = step(batch, rng);
        if (!std::isfinite(loss.total)) throw DivergedError(epoch);
        rep.ce += loss.ce;
        rep.js_aug += loss.js_aug;
        rep.js_adv += loss.js_adv;
        rep.total += loss.total;
        correct += hits;
        ++batches;
      }
      rep.ce /= static_cast<double>(batches);
      rep.js_aug /= static_cast<double>(batches);
      rep.js_adv /= static_cast<double>(batches);
      rep.total /= static_cast<double>(batches);
      rep.train_top1 = static_cast<double>(correct) / static_cast<double>(n);
      rep.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
      result.reports.push_back(rep);
      if (hooks_.on_epoch_end) hooks_.on_epoch_end(rep, model_);
    }
    result.model = std::move(model_);
    return result;
  }

  void guard(const Tensor& logits) const {
    for (float v : logits.data())
      if (!std::isfinite(v)) throw DivergedError(epoch_);
  }

  void guard_params() const {
    for (const auto& p : model_.params())
      for (float v : p.data())
        if (!std::isfinite(v)) throw DivergedError(epoch_);
  }

  void stage(Stage s) const {
    if (hooks_.on_stage) hooks_.on_stage(s);
  }

  /// CE-only step on `x` against one-hot `y`.
  std::pair<LossBreakdown, std::size_t> ce_step(const Tensor& x, const Tensor& y) {
    stage(Stage::loss);
    BasicTrace<float> trace;
    const Tensor logits = model_.forward(x, &trace);
    guard(logits);
    auto ce = soft_cross_entropy(logits, y);
    LossBreakdown lb;
    lb.ce = lb.total = ce.loss;
    if (hooks_.on_batch_loss) hooks_.on_batch_loss(lb);
    const std::size_t hits = count_hits(logits, y);
    if (!std::isfinite(lb.total)) return {lb, hits};
    auto grads = model_.backward(trace, ce.grad, BackwardOptions{.param_grads = true, .input_grad = false});
    stage(Stage::step);
    sgd_step(model_, state_, grads.params);
    guard_params();
    return {lb, hits};
  }

  static std::size_t count_hits(const Tensor& logits, const Tensor& targets) {
    const auto pred = argmax_rows(logits), truth = argmax_rows(targets);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    return hits;
  }

  const Dataset& ds_;
  const TrainConfig& cfg_;
  const TrainHooks& hooks_;
  LayerStack model_;
  OptimizerState state_;
  int epoch_ = 0;
};

}  // namespace

TrainResult train_standard(const Dataset& ds, TrainConfig cfg, const TrainHooks& hooks, const LayerStack* initial) {
  cfg.mode = TrainMode::standard;
  Loop loop(ds, cfg, hooks, initial);
  return loop.run([&](const Batch& b, Rng&) { return loop.ce_step(b.x, b.y); });
}

TrainResult train_pgdat(const Dataset& ds, TrainConfig cfg, const TrainHooks& hooks, const LayerStack* initial) {
  cfg.mode = TrainMode::pgdat;
  Loop loop(ds, cfg, hooks, initial);
  return loop.run([&](const Batch& b, Rng& rng) {
    loop.stage(Stage::attack);
    Rng attack_rng = rng.child(1);
    const Tensor x_adv = pgd_attack(loop.model_, b.x, b.y, cfg.attack, attack_rng);
    return loop.ce_step(x_adv, b.y);
  });
}

TrainResult train_augrmixat(const Dataset& ds, TrainConfig cfg, const TrainHooks& hooks, const LayerStack* initial) {
  cfg.mode = TrainMode::augrmixat;
  Loop loop(ds, cfg, hooks, initial);
  return loop.run([&](const Batch& b, Rng& rng) {
    const std::size_t n = b.x.dim(0);

    loop.stage(Stage::augment);
    const Rng aug_rng = rng.child(0);
    Tensor x_aug(b.x.shape());
    parallel_for(n, static_cast<std::size_t>(cfg.threads), [&](std::size_t i) {
      Rng item = aug_rng.child(i);
      x_aug.set_slice(i, augment_and_mix(b.x.slice(i), cfg.augment, item));
    });

    loop.stage(Stage::attack);
    Rng attack_rng = rng.child(1);
    const Tensor x_adv = pgd_generate(loop.model_, b.x, cfg.attack, attack_rng);

    loop.stage(Stage::rmix);
    Rng mix_rng = rng.child(2);
    const RMixResult mixed = rmix(b.x, x_aug, x_adv, b.y, mix_rng, cfg.mix);
    if (hooks.on_mixed) hooks.on_mixed(mixed);

    loop.stage(Stage::loss);
    BasicTrace<float> t_clean, t_aug, t_adv;
    const Tensor z_clean = loop.model_.forward(mixed.clean, &t_clean);
    const Tensor z_aug = loop.model_.forward(mixed.aug, &t_aug);
    const Tensor z_adv = loop.model_.forward(mixed.adv, &t_adv);
    for (const Tensor* z : {&z_clean, &z_aug, &z_adv}) loop.guard(*z);
    LossBreakdown lb = augrmixat_loss(z_clean, z_aug, z_adv, mixed.labels, cfg.lambda1, cfg.lambda2);
    if (hooks.on_batch_loss) hooks.on_batch_loss(lb);
    const std::size_t hits = Loop::count_hits(z_clean, mixed.labels);
    if (!std::isfinite(lb.total)) return std::pair{lb, hits};

    const BackwardOptions params_only{.param_grads = true, .input_grad = false};
    auto grads = loop.model_.backward(t_clean, lb.grad_clean, params_only).params;
    const auto g_aug = loop.model_.backward(t_aug, lb.grad_aug, params_only).params;
    const auto g_adv = loop.model_.backward(t_adv, lb.grad_adv, params_only).params;
    for (std::size_t p = 0; p < grads.size(); ++p)
      for (std::size_t k = 0; k < grads[p].size(); ++k) grads[p][k] = grads[p][k] + g_aug[p][k] + g_adv[p][k];

    loop.stage(Stage::step);
    sgd_step(loop.model_, loop.state_, grads);
    loop.guard_params();
    return std::pair{lb, hits};
  });
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TrainHooks& hooks, const LayerStack* initial) {
  switch (cfg.mode) {
    case TrainMode::augrmixat: return train_augrmixat(ds, cfg, hooks, initial);
    case TrainMode::standard: return train_standard(ds, cfg, hooks, initial);
    case TrainMode::pgdat: return train_pgdat(ds, cfg, hooks, initial);
  }
  throw std::invalid_argument("unknown training mode");
}

// ---------------------------------------------------------------------------

Classifier as_classifier(const LayerStack& model, std::size_t chunk) {
  return [&model, chunk](const Tensor& x) {
    const std::size_t n = x.dim(0);
    Tensor out({n, model.architecture().num_classes()});
    for (std::size_t start = 0; start < n; start += chunk) {
      const std::size_t m = std::min(chunk, n - start);
      std::vector<std::size_t> idx(m);
      std::iota(idx.begin(), idx.end(), start);
      const Tensor z = model.forward(gather_rows(x, idx), nullptr);
      std::copy(z.data().begin(), z.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * z.dim(1)));
    }
    return out;
  };
}

double clean_accuracy(const LayerStack& model, const Dataset& ds) {
  return top_k_accuracy(as_classifier(model)(ds.images), ds.labels, 1);
}

std::string attack_method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::fgsm: return "fgsm";
    case AttackMethod::pgd: return "pgd";
    case AttackMethod::cw: return "cw";
  }
  return "?";
}

AttackMethod parse_attack_method(const std::string& name) {
  for (AttackMethod m : {AttackMethod::fgsm, AttackMethod::pgd, AttackMethod::cw})
    if (attack_method_name(m) == name) return m;
  throw std::invalid_argument("unknown attack method '" + name + "'; valid: fgsm, pgd, cw");
}

double robust_accuracy(const LayerStack& model, const Dataset& ds, AttackMethod method, int iters,
                       const EvalOptions& opts, const LayerStack* source) {
  const LayerStack& crafter = source ? *source : model;
  if (crafter.architecture().input_shape() != model.architecture().input_shape())
    throw std::invalid_argument("source model input shape differs from the target model");
  AttackSpec spec;
  spec.eps = opts.eps;
  spec.step = opts.step;
  spec.iters = iters;
  spec.random_start = opts.random_start;
  spec.init = opts.init;
  spec.loss = method == AttackMethod::cw ? AttackLoss::cw_margin : AttackLoss::cross_entropy;
  const std::size_t n = ds.size();
  std::size_t hits = 0;
  for (std::size_t start = 0, chunk = 0; start < n; start += opts.chunk, ++chunk) {
    const std::size_t m = std::min(opts.chunk, n - start);
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), start);
    const Dataset part = ds.subset(idx);
    const Tensor y = one_hot(part.labels, ds.num_classes);
    Rng rng(derive_seed(opts.seed, chunk));
    Tensor x_adv = method == AttackMethod::fgsm ? fgsm_attack(crafter, part.images, y, opts.eps)
                                                : run_attack(crafter, part.images, y, spec, rng);
    const Tensor z = model.forward(x_adv, nullptr);
    hits += static_cast<std::size_t>(std::llround(top_k_accuracy(z, part.labels, 1) * static_cast<double>(m)));
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

CorruptionReport evaluate_corruptions(const LayerStack& model, const Dataset& ds,
                                      const std::vector<CorruptionKind>& kinds, const EvalOptions& opts) {
  CorruptionReport rep;
  const Classifier clf = as_classifier(model, opts.chunk);
  std::vector<double> errs;
  for (CorruptionKind k : kinds) {
    const double ce = corruption_error(clf, ds.images, ds.labels, k, Rng(derive_seed(opts.seed, 101)), opts.threads);
    rep.ce.emplace_back(k, ce);
    errs.push_back(ce);
  }
  rep.mce = mce(errs);
  rep.mca = 1.0 - rep.mce;
  return rep;
}

double occlusion_accuracy(const LayerStack& model, const Dataset& ds, OcclusionMode mode, const EvalOptions& opts) {
  OcclusionSpec spec{mode, opts.block_frac};
  const Tensor occluded = occlude_batch(ds.images, ds.labels, spec, Rng(derive_seed(opts.seed, 202)));
  return top_k_accuracy(as_classifier(model, opts.chunk)(occluded), ds.labels,
                        mode == OcclusionMode::targeted ? 2 : 1);
}

RobustnessSummary evaluate_all(const LayerStack& model, const Dataset& ds, const EvalOptions& opts) {
  RobustnessSummary s;
  s.clean = clean_accuracy(model, ds);
  s.fgsm = robust_accuracy(model, ds, AttackMethod::fgsm, 1, opts);
  s.pgd10 = robust_accuracy(model, ds, AttackMethod::pgd, 10, opts);
  s.pgd20 = robust_accuracy(model, ds, AttackMethod::pgd, 20, opts);
  s.cw20 = robust_accuracy(model, ds, AttackMethod::cw, 20, opts);
  s.corr = evaluate_corruptions(model, ds, all_corruptions(), opts).mca;
  s.occ_untargeted = occlusion_accuracy(model, ds, OcclusionMode::untargeted, opts);
  s.occ_targeted = occlusion_accuracy(model, ds, OcclusionMode::targeted, opts);
  s.occ = 0.5 * (s.occ_untargeted + s.occ_targeted);
  return s;
}

std::string sweep_row(const SweepRow& r) {
  char buf[256];
  const auto& m = r.metrics;
  std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.lambda1, r.lambda2, m.clean, m.fgsm,
                m.pgd10, m.pgd20, m.cw20, m.corr, m.occ);
  return buf;
}

std::vector<std::pair<double, double>> sweep_pairs(const std::vector<double>& lambda1,
                                                   const std::vector<double>& lambda2) {
  if (lambda1.empty() || lambda2.empty()) throw std::invalid_argument("lambda sweep lists must be nonempty");
  std::vector<std::pair<double, double>> pairs;
  auto add = [&](double a, double b) {
    if (std::find(pairs.begin(), pairs.end(), std::pair{a, b}) == pairs.end()) pairs.emplace_back(a, b);
  };
  for (double a : lambda1) add(a, lambda2.front());
  for (double b : lambda2) add(lambda1.front(), b);
  return pairs;
}

std::vector<SweepRow> lambda_sweep(const Dataset& train_ds, const Dataset& eval_ds, const TrainConfig& base,
                                   const std::vector<double>& lambda1, const std::vector<double>& lambda2,
                                   const EvalOptions& opts) {
  std::vector<SweepRow> rows;
  for (const auto& [a, b] : sweep_pairs(lambda1, lambda2)) {
    TrainConfig cfg = base;
    cfg.mode = TrainMode::augrmixat;
    cfg.lambda1 = a;
    cfg.lambda2 = b;
    const TrainResult res = train(train_ds, cfg);
    rows.push_back({a, b, evaluate_all(res.model, eval_ds, opts)});
  }
  return rows;
}

}  // namespace rk
