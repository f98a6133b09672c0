// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion.
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <algorithm>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "robustkit/config.hpp"
#include "robustkit/numerics.hpp"
#include "robustkit/serialize.hpp"
#include "robustkit/trainer.hpp"
#include "support.hpp"

using namespace rk;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Shape batch_shape(std::size_t n, const Architecture& arch) {
  Shape s{n};
  s.insert(s.end(), arch.input_shape().begin(), arch.input_shape().end());
  return s;
}

// ---------------------------------------------------------------------------
// 1. gradients

Outcome gradients() {
  const auto t0 = Clock::now();
  Rng rng(1);
  double worst_model = 0.0, worst_loss = 0.0;
  int model_instances = 0, loss_instances = 0;

  for (int trial = 0; trial < 60; ++trial) {
    const Architecture arch = trial % 10 == 9 ? Architecture::tiny_cnn({1, 8, 8}, 3) : rkt::random_arch(rng);
    LayerStackD s = rkt::random_stack_d(rng, arch);
    TensorD x = rkt::random_tensor_d(rng, batch_shape(2, arch), 0.0, 1.0);
    const TensorD up = rkt::random_tensor_d(rng, {2, arch.num_classes()});
    auto objective = [&] {
      const TensorD z = s.forward(x, nullptr);
      double acc = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) acc += z[i] * up[i];
      return acc;
    };
    BasicTrace<double> trace;
    s.forward(x, &trace);
    const auto g = s.backward(trace, up);
    for (std::size_t p = 0; p < s.params().size(); ++p) {
      std::vector<double> theta = s.params()[p].vec();
      auto f = [&] {
        s.params()[p] = TensorD(s.params()[p].shape(), theta);
        return objective();
      };
      worst_model = std::max(worst_model, rkt::fd_check(theta, g.params[p].vec(), f));
      s.params()[p] = TensorD(s.params()[p].shape(), theta);
    }
    std::vector<double> xv = x.vec();
    auto fx = [&] {
      x = TensorD(x.shape(), xv);
      return objective();
    };
    worst_model = std::max(worst_model, rkt::fd_check(xv, g.input.vec(), fx));
    ++model_instances;
  }

  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.below(4), k = 2 + rng.below(4);
    const TensorD p = rkt::random_tensor_d(rng, {n, k}, -3, 3), q = rkt::random_tensor_d(rng, {n, k}, -3, 3);
    const TensorD r = rkt::random_tensor_d(rng, {n, k}, -3, 3);
    TensorD y({n, k});
    for (std::size_t i = 0; i < n; ++i) {
      const TensorD w = sample_dirichlet(rng, k, 1.0);
      for (std::size_t c = 0; c < k; ++c) y.at(i, c) = w[c];
    }
    std::vector<double> pv = p.vec(), qv = q.vec(), rv = r.vec();
    auto T = [&](const std::vector<double>& v) { return TensorD({n, k}, v); };
    const double h = 1e-5;
    double w = 0.0;
    w = std::max(w, rkt::fd_check(pv, soft_cross_entropy(p, y).grad.vec(),
                                  [&] { return soft_cross_entropy(T(pv), y).loss; }, h));
    w = std::max(w, rkt::fd_check(qv, kl_divergence(p, q).grad.vec(), [&] { return kl_divergence(p, T(qv)).loss; }, h));
    const auto js = js_divergence(p, q);
    w = std::max(w, rkt::fd_check(pv, js.grad_p.vec(), [&] { return js_divergence(T(pv), q).loss; }, h));
    w = std::max(w, rkt::fd_check(qv, js.grad_q.vec(), [&] { return js_divergence(p, T(qv)).loss; }, h));
    const double l1 = rng.uniform(0, 4), l2 = rng.uniform(0, 8);
    const auto lb = augrmixat_loss(p, q, r, y, l1, l2);
    w = std::max(w, rkt::fd_check(pv, lb.grad_clean.vec(),
                                  [&] { return augrmixat_loss(T(pv), q, r, y, l1, l2).total; }, h));
    w = std::max(w, rkt::fd_check(qv, lb.grad_aug.vec(),
                                  [&] { return augrmixat_loss(p, T(qv), r, y, l1, l2).total; }, h));
    w = std::max(w, rkt::fd_check(rv, lb.grad_adv.vec(),
                                  [&] { return augrmixat_loss(p, q, T(rv), y, l1, l2).total; }, h));
    worst_loss = std::max(worst_loss, w);
    ++loss_instances;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_model <= 1e-4 && worst_loss <= 1e-5 && model_instances >= 50 && loss_instances >= 50 && secs < 60;
  o.detail = fmt("model rel err %.2e over %d stacks, loss rel err %.2e over %d instances, %.1fs", worst_model,
                 model_instances, worst_loss, loss_instances, secs);
  return o;
}

// ---------------------------------------------------------------------------
// 2. attack contract

Outcome attacks() {
  const auto t0 = Clock::now();
  Rng rng(2);
  double worst_excess = -1.0;
  bool in_range = true, fgsm_same = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const Architecture arch = rkt::random_arch(rng);
    const LayerStack m = LayerStack::kaiming(arch, rng);
    const std::size_t n = 1 + rng.below(3);
    const Tensor x = rkt::random_tensor(rng, batch_shape(n, arch));
    std::vector<int> y(n);
    for (int& l : y) l = static_cast<int>(rng.below(arch.num_classes()));
    const Tensor yo = one_hot(y, arch.num_classes());
    AttackSpec s;
    s.eps = rng.uniform(0.0, 0.1);
    s.step = rng.uniform(0.001, 0.05);
    s.iters = 1 + static_cast<int>(rng.below(5));
    s.random_start = rng.coin();
    s.init = rng.coin() ? InitKind::gaussian : InitKind::uniform;
    auto check = [&](const Tensor& adv) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        worst_excess = std::max(worst_excess, std::abs(static_cast<double>(adv[i]) - x[i]) - s.eps);
        in_range = in_range && adv[i] >= 0.0f && adv[i] <= 1.0f;
      }
    };
    const Tensor fg = fgsm_attack(m, x, yo, s.eps);
    check(fg);
    check(pgd_attack(m, x, yo, s, rng));
    check(cw_attack(m, x, yo, s, rng));
    AttackSpec collapse = s;
    collapse.iters = 1;
    collapse.step = s.eps;
    collapse.random_start = false;
    Rng r(0);
    fgsm_same = fgsm_same && pgd_attack(m, x, yo, collapse, r) == fg;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_excess <= std::ldexp(1.0, -20) && in_range && fgsm_same && secs < 60;
  o.detail = fmt("1000 triples, max(|dx| - eps) %.3g, range %s, FGSM == PGD(T=1) %s, %.1fs", worst_excess,
                 in_range ? "ok" : "violated", fgsm_same ? "yes" : "no", secs);
  return o;
}

// ---------------------------------------------------------------------------
// 3. mix

Outcome mixing() {
  const auto t0 = Clock::now();
  Rng rng(3);
  double worst_mass = 0.0;
  bool gamma_exact = true, shared = true;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.below(7), h = 4 + rng.below(13), w = 4 + rng.below(13), k = 2 + rng.below(4);
    // per-view, per-item constants make the source of every output pixel identifiable
    std::array<Tensor, 3> views;
    std::array<std::vector<float>, 3> level;
    for (std::size_t v = 0; v < 3; ++v) {
      views[v] = Tensor({n, 1, h, w});
      std::set<float> used;
      for (std::size_t i = 0; i < n; ++i) {
        float c = 0.0f;
        do c = static_cast<float>(rng.uniform(0.05, 0.95));
        while (!used.insert(c).second);
        level[v].push_back(c);
        for (std::size_t p = 0; p < h * w; ++p) views[v][i * h * w + p] = c;
      }
    }
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng.below(k));
    const RMixResult r = rmix(views[0], views[1], views[2], one_hot(labels, k), rng);
    const MixPlan& p = r.plan;

    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += r.labels.at(i, c);
      worst_mass = std::max(worst_mass, std::abs(s - 1.0));
    }
    if (p.mask) {
      std::size_t ones = 0;
      for (float v : p.mask->data()) ones += v == 1.0f;
      gamma_exact = gamma_exact && p.gamma == static_cast<double>(ones) / static_cast<double>(h * w);
    }

    const std::array<const Tensor*, 3> outs{&r.clean, &r.aug, &r.adv};
    std::vector<std::vector<int>> patterns(3);
    std::vector<double> blends;
    for (std::size_t v = 0; v < 3; ++v)
      for (std::size_t i = 0; i < n; ++i) {
        const float a = level[v][i], b = level[v][p.perm[i]];
        for (std::size_t q = 0; q < h * w; ++q) {
          const float o = (*outs[v])[i * h * w + q];
          if (p.method == MixMethod::mixup) {
            if (p.perm[i] != i && q == 0) blends.push_back((static_cast<double>(o) - b) / (static_cast<double>(a) - b));
            continue;
          }
          patterns[v].push_back(o == a ? 1 : (o == b ? 0 : -1));
        }
      }
    if (p.method == MixMethod::mixup) {
      for (double g : blends) shared = shared && std::abs(g - p.gamma) < 1e-4;
    } else {
      shared = shared && patterns[0] == patterns[1] && patterns[0] == patterns[2];
      shared = shared && std::find(patterns[0].begin(), patterns[0].end(), -1) == patterns[0].end();
      if (p.mask) {
        // recovered indicator equals the stored mask for every non-self pair
        for (std::size_t i = 0; i < n; ++i) {
          if (p.perm[i] == i) continue;
          for (std::size_t q = 0; q < h * w; ++q)
            shared = shared && patterns[0][i * h * w + q] == static_cast<int>((*p.mask)[q]);
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_mass <= 1e-7 && gamma_exact && shared && secs < 30;
  o.detail = fmt("500 plans, max |row sum - 1| %.2e, mask gamma exact %s, shared plan recovered %s, %.1fs",
                 worst_mass, gamma_exact ? "yes" : "no", shared ? "yes" : "no", secs);
  return o;
}

// ---------------------------------------------------------------------------
// 4. divergence

Outcome divergence() {
  Rng rng(4);
  bool bounded = true, symmetric = true, zero = true;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    const double alpha = rng.uniform(0.05, 2.0);
    const TensorD p = sample_dirichlet(rng, k, alpha).reshaped({1, k});
    const TensorD q = sample_dirichlet(rng, k, alpha).reshaped({1, k});
    const double pq = js_divergence_probs(p, q), qp = js_divergence_probs(q, p);
    bounded = bounded && pq >= 0.0 && pq <= std::log(2.0);
    symmetric = symmetric && std::abs(pq - qp) <= 1e-7;
    zero = zero && js_divergence_probs(p, p) == 0.0;
    const TensorD zp = rkt::random_tensor_d(rng, {2, k}, -5, 5), zq = rkt::random_tensor_d(rng, {2, k}, -5, 5);
    const double lpq = js_divergence(zp, zq).loss, lqp = js_divergence(zq, zp).loss;
    bounded = bounded && lpq >= 0.0 && lpq <= std::log(2.0);
    symmetric = symmetric && std::abs(lpq - lqp) <= 1e-7;
    zero = zero && std::abs(js_divergence(zp, zp).loss) <= 1e-15;
  }
  const double value = js_divergence_probs(TensorD({1, 2}, {0.5, 0.5}), TensorD({1, 2}, {1.0, 0.0}));
  Outcome o;
  o.pass = bounded && symmetric && zero && std::abs(value - 0.215762) <= 1e-5;
  o.detail = fmt("bounds %s, symmetry %s, zero at equality %s, JS([.5,.5],[1,0]) = %.6f", bounded ? "ok" : "violated",
                 symmetric ? "ok" : "violated", zero ? "ok" : "violated", value);
  return o;
}

// ---------------------------------------------------------------------------
// benchmark

struct Bench {
  Dataset train, test;
};

Bench benchmark(std::uint64_t seed) {
  return {make_shapes_dataset(600, 3, 16, 1000 + seed), make_shapes_dataset(300, 3, 16, 5000 + seed)};
}

TrainConfig bench_config(TrainMode mode, std::uint64_t seed) {
  TrainConfig c;
  c.mode = mode;
  c.arch = "tinycnn";
  c.epochs = 30;
  c.batch_size = 64;
  c.lr0 = 0.05;
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------
// 5. degeneracy

Outcome degeneracy() {
  const Bench b = benchmark(0);
  TrainConfig c = bench_config(TrainMode::augrmixat, 0);
  c.epochs = 3;
  c.lambda1 = 0.0;
  c.lambda2 = 0.0;
  c.attack.iters = 0;
  c.augment.ops = {OpKind::identity};
  c.mix.methods = {MixMethod::mixup};
  c.mix.fixed_gamma = 1.0;
  std::vector<std::vector<Tensor>> ta, ts;
  TrainHooks ha, hs;
  ha.on_epoch_end = [&](const EpochReport&, const LayerStack& m) { ta.push_back(m.params()); };
  hs.on_epoch_end = [&](const EpochReport&, const LayerStack& m) { ts.push_back(m.params()); };
  const auto a = train_augrmixat(b.train, c, ha);
  const auto s = train_standard(b.train, c, hs);
  const bool same = ta.size() == 3 && ta == ts && save_checkpoint(a.model) == save_checkpoint(s.model);
  return {same, same ? "3 epochs, parameters bitwise identical after every epoch"
                     : "trajectories differ"};
}

// ---------------------------------------------------------------------------
// 6 / 7. directional experiments

struct Score {
  double clean = 0, pgd10 = 0, mca = 0;
};

Score score(const LayerStack& m, const Dataset& test, std::uint64_t seed, bool with_corruptions) {
  EvalOptions o;
  o.seed = seed;
  Score s;
  s.clean = clean_accuracy(m, test);
  s.pgd10 = robust_accuracy(m, test, AttackMethod::pgd, 10, o);
  if (with_corruptions) s.mca = evaluate_corruptions(m, test, all_corruptions(), o).mca;
  return s;
}

Score run_bench(TrainMode mode, std::uint64_t seed, double l1, double l2, bool with_corruptions) {
  const Bench b = benchmark(seed);
  TrainConfig c = bench_config(mode, seed);
  c.lambda1 = l1;
  c.lambda2 = l2;
  const Score s = score(train(b.train, c).model, b.test, seed, with_corruptions);
  std::printf("  seed %llu %-9s l=(%g,%g): clean %.3f pgd10 %.3f", static_cast<unsigned long long>(seed),
              mode_name(mode).c_str(), l1, l2, s.clean, s.pgd10);
  if (with_corruptions) std::printf(" mca %.3f", s.mca);
  std::printf("\n");
  std::fflush(stdout);
  return s;
}

constexpr int kSeeds = 5;
std::vector<Score> g_augrmixat_11;  // shared by criteria 6 and 7

Outcome ordering() {
  const auto t0 = Clock::now();
  int a = 0, b = 0, c = 0;
  g_augrmixat_11.clear();
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const Score st = run_bench(TrainMode::standard, s, 1, 1, false);
    const Score pg = run_bench(TrainMode::pgdat, s, 1, 1, false);
    const Score ar = run_bench(TrainMode::augrmixat, s, 1, 1, true);
    g_augrmixat_11.push_back(ar);
    a += pg.clean < st.clean;
    b += ar.pgd10 - st.pgd10 >= 0.10;
    c += ar.clean >= pg.clean;
  }
  const double secs = seconds_since(t0);
  const int need = kSeeds / 2 + 1;
  Outcome o;
  o.pass = a >= need && b >= need && c >= need && secs < 20 * 60;
  o.detail = fmt("(a) PGDAT clean < Standard clean %d/5, (b) AugRmixAT PGD10 >= Standard + 10pt %d/5, "
                 "(c) AugRmixAT clean >= PGDAT clean %d/5, %.0fs",
                 a, b, c, secs);
  return o;
}

Outcome sensitivity() {
  if (g_augrmixat_11.size() != kSeeds)
    for (std::uint64_t s = 0; s < kSeeds; ++s) g_augrmixat_11.push_back(run_bench(TrainMode::augrmixat, s, 1, 1, true));
  int robust = 0, clean = 0, corr = 0;
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const Score base = g_augrmixat_11[s];
    const Score l2 = run_bench(TrainMode::augrmixat, s, 1, 8, false);
    const Score l1 = run_bench(TrainMode::augrmixat, s, 4, 1, true);
    robust += l2.pgd10 >= base.pgd10;
    clean += l2.clean <= base.clean;
    corr += l1.mca >= base.mca;
  }
  const int need = kSeeds / 2 + 1;
  Outcome o;
  o.pass = robust >= need && clean >= need && corr >= need;
  o.detail = fmt("lambda2 1->8: PGD10 not lower %d/5, clean not higher %d/5; lambda1 1->4: mCA not lower %d/5", robust,
                 clean, corr);
  return o;
}

// ---------------------------------------------------------------------------
// 8. formats

Outcome formats() {
  Rng rng(8);
  bool at1 = true, atc = true;
  for (int trial = 0; trial < 200; ++trial) {
    Shape shape;
    const std::size_t rank = rng.below(5);
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(rng.below(6));
    Tensor f(shape);
    for (float& v : f.data()) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next_u64()) & 0xff7fffffu);
    ByteTensor u(shape);
    for (auto& v : u.data()) v = static_cast<std::uint8_t>(rng.below(256));
    const auto ef = encode_tensor(f), eu = encode_tensor(u);
    at1 = at1 && encode_tensor(decode_tensor(ef)) == ef && encode_tensor(decode_tensor(eu)) == eu;
    at1 = at1 && std::get<ByteTensor>(decode_tensor(eu)) == u;

    NamedTensors entries;
    const std::size_t count = rng.below(5);
    for (std::size_t e = 0; e < count; ++e) entries.emplace_back("t" + std::to_string(e), e % 2 ? AnyTensor(u) : AnyTensor(f));
    const auto ec = encode_container(entries);
    atc = atc && encode_container(decode_container(ec)) == ec;

    const LayerStack m = LayerStack::kaiming(rkt::random_arch(rng), rng);
    const auto ck = save_checkpoint(m);
    const LayerStack back = load_checkpoint(ck);
    atc = atc && back.params() == m.params() && back.architecture() == m.architecture() && save_checkpoint(back) == ck;
  }

  // manifest-driven rerun
  const Dataset ds = make_shapes_dataset(120, 3, 16, 77);
  TrainConfig c = bench_config(TrainMode::augrmixat, 0);
  c.epochs = 2;
  c.batch_size = 32;
  RunManifest man;
  man.config = c;
  man.seed = 31;
  man.config.seed = 31;
  man.dataset_checksum = "n/a";
  const auto first = save_checkpoint(train(ds, man.config).model);
  const RunManifest again = parse_manifest(manifest_to_json(man));
  const auto second = save_checkpoint(train(ds, again.config).model);
  const bool rerun = first == second;

  Outcome o;
  o.pass = at1 && atc && rerun;
  o.detail = fmt("AT1 round trip %s, ATC round trip %s, manifest rerun checkpoint %s", at1 ? "ok" : "broken",
                 atc ? "ok" : "broken", rerun ? "byte-identical" : "differs");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  // optional list of criteria to run, e.g. "1,2,5"
  std::set<int> only;
  if (argc > 1)
    for (const char* p = argv[1]; *p; ++p)
      if (*p >= '1' && *p <= '8') only.insert(*p - '0');
  const std::vector<std::pair<int, std::function<Outcome()>>> suite{
      {1, gradients}, {2, attacks}, {3, mixing},      {4, divergence},
      {5, degeneracy}, {6, ordering}, {7, sensitivity}, {8, formats},
  };
  int failed = 0;
  for (const auto& [id, fn] : suite) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("CRITERION %d: %s : %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
