// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "robustkit/adversarial.hpp"
#include "robustkit/augment.hpp"
#include "robustkit/dataset.hpp"
#include "robustkit/losses.hpp"
#include "robustkit/mix.hpp"
#include "robustkit/model.hpp"
#include "robustkit/robustness.hpp"

namespace rk {

enum class TrainMode { augrmixat, standard, pgdat };

std::string mode_name(TrainMode m);
TrainMode parse_mode(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::augrmixat;
  /// "tinycnn", "mlp" or a full architecture descriptor.
  std::string arch = "tinycnn";
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  AttackSpec attack = AttackSpec::training();
  AugmentConfig augment;
  MixConfig mix;
  int batch_size = 64;
  int epochs = 30;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;
  int threads = 1;

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
};

struct EpochReport {
  int epoch = 0;
  double lr = 0.0;
  double ce = 0.0;
  double js_aug = 0.0;
  double js_adv = 0.0;
  double total = 0.0;
  double train_top1 = 0.0;
  std::int64_t wall_ms = 0;
};

inline constexpr const char* kMetricsHeader = "epoch,lr,ce,js_aug,js_adv,total,train_top1,wall_ms";
std::string metrics_row(const EpochReport& r);

class DivergedError : public std::runtime_error {
 public:
  explicit DivergedError(int epoch)
      : std::runtime_error("diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

enum class Stage { read_batch, augment, attack, rmix, loss, step };

/// Observation points. Hooks must not mutate what they are given.
struct TrainHooks {
  std::function<void(Stage)> on_stage;
  std::function<void(const RMixResult&)> on_mixed;
  std::function<void(const LossBreakdown&)> on_batch_loss;
  std::function<void(const EpochReport&, const LayerStack&)> on_epoch_end;
};

struct TrainResult {
  LayerStack model;
  std::vector<EpochReport> reports;
};

Architecture resolve_architecture(const std::string& arch, const Shape& item_shape, std::size_t num_classes);
LayerStack init_model(const TrainConfig& cfg, const Dataset& ds);

/// Dispatches on cfg.mode. `initial` replaces the seeded Kaiming init.
TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TrainHooks& hooks = {},
                  const LayerStack* initial = nullptr);
TrainResult train_augrmixat(const Dataset& ds, TrainConfig cfg, const TrainHooks& hooks = {},
                            const LayerStack* initial = nullptr);
TrainResult train_standard(const Dataset& ds, TrainConfig cfg, const TrainHooks& hooks = {},
                           const LayerStack* initial = nullptr);
TrainResult train_pgdat(const Dataset& ds, TrainConfig cfg, const TrainHooks& hooks = {},
                        const LayerStack* initial = nullptr);

// ---------------------------------------------------------------------------
// Evaluation

Classifier as_classifier(const LayerStack& model, std::size_t chunk = 256);

struct EvalOptions {
  double eps = 0.031;
  double step = 0.003;
  bool random_start = true;
  InitKind init = InitKind::gaussian;
  double block_frac = 0.4;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t chunk = 256;
};

double clean_accuracy(const LayerStack& model, const Dataset& ds);

enum class AttackMethod { fgsm, pgd, cw };
std::string attack_method_name(AttackMethod m);
AttackMethod parse_attack_method(const std::string& name);

/// Top1 accuracy under attack. `source` (when given) crafts the examples.
double robust_accuracy(const LayerStack& model, const Dataset& ds, AttackMethod method, int iters,
                       const EvalOptions& opts, const LayerStack* source = nullptr);

struct CorruptionReport {
  std::vector<std::pair<CorruptionKind, double>> ce;  // per kind
  double mce = 0.0;
  double mca = 1.0;
};

CorruptionReport evaluate_corruptions(const LayerStack& model, const Dataset& ds,
                                      const std::vector<CorruptionKind>& kinds, const EvalOptions& opts);

/// Top1 for untargeted occlusion, Top2 for targeted.
double occlusion_accuracy(const LayerStack& model, const Dataset& ds, OcclusionMode mode, const EvalOptions& opts);

struct RobustnessSummary {
  double clean = 0, fgsm = 0, pgd10 = 0, pgd20 = 0, cw20 = 0;
  double corr = 0;  // mCA over the generated suite
  double occ_untargeted = 0, occ_targeted = 0;
  double occ = 0;  // mean of the two occlusion metrics
};

RobustnessSummary evaluate_all(const LayerStack& model, const Dataset& ds, const EvalOptions& opts);

struct SweepRow {
  double lambda1 = 0, lambda2 = 0;
  RobustnessSummary metrics;
};

inline constexpr const char* kSweepHeader = "lambda1,lambda2,clean,fgsm,pgd10,pgd20,cw20,corr,occ";
std::string sweep_row(const SweepRow& r);

/// One-axis-at-a-time grid: (l1, lambda2[0]) for every l1, then
/// (lambda1[0], l2) for every l2, skipping pairs already present.
std::vector<std::pair<double, double>> sweep_pairs(const std::vector<double>& lambda1,
                                                   const std::vector<double>& lambda2);

std::vector<SweepRow> lambda_sweep(const Dataset& train_ds, const Dataset& eval_ds, const TrainConfig& base,
                                   const std::vector<double>& lambda1, const std::vector<double>& lambda2,
                                   const EvalOptions& opts);

}  // namespace rk
