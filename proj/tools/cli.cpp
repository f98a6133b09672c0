// SPDX-License-Identifier: Apache-2.0
// robustkit command-line interface.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "robustkit/config.hpp"
#include "robustkit/serialize.hpp"
#include "robustkit/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::string read_text(const fs::path& p) {
  const auto bytes = rk::read_file(p);
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& p, const std::string& text) {
  rk::write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw rk::FormatError(rk::FormatErrc::io, "cannot create " + dir.string() + ": " + ec.message());
}

rk::LayerStack load_model(const fs::path& p) { return rk::load_checkpoint(rk::read_file(p)); }

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw std::invalid_argument("bad number '" + item + "' in list " + text);
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

struct GenDataArgs {
  std::string out;
  std::size_t n = 300, classes = 3, size = 16;
  std::uint64_t seed = 0;
};

int cmd_gen_data(const GenDataArgs& a) {
  const rk::Dataset ds = rk::make_shapes_dataset(a.n, a.classes, a.size, a.seed);
  rk::save_dataset(a.out, ds);
  std::cout << "wrote " << ds.size() << " images to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, manifest, data, out, mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

int cmd_train(const TrainArgs& a) {
  const rk::Dataset ds = rk::load_dataset(a.data);
  const std::string checksum = rk::dataset_checksum(a.data);
  rk::RunManifest manifest;
  if (!a.manifest.empty()) {
    manifest = rk::parse_manifest(read_text(a.manifest));
    if (manifest.dataset_checksum != checksum)
      throw std::invalid_argument("dataset checksum " + checksum + " differs from manifest " +
                                  manifest.dataset_checksum);
  } else if (!a.config.empty()) {
    manifest.config = rk::parse_config(read_text(a.config));
  }
  rk::TrainConfig& cfg = manifest.config;
  if (!a.mode.empty()) cfg.mode = rk::parse_mode(a.mode);
  if (a.seed) cfg.seed = *a.seed;
  if (a.threads) cfg.threads = *a.threads;
  cfg.validate();
  manifest.seed = cfg.seed;
  manifest.dataset_checksum = checksum;
  manifest.toolkit_version = rk::kToolkitVersion;

  const fs::path out = a.out;
  ensure_dir(out);
  write_text(out / "manifest.json", rk::manifest_to_json(manifest));
  std::ofstream metrics(out / "metrics.csv");
  if (!metrics) throw rk::FormatError(rk::FormatErrc::io, "cannot write " + (out / "metrics.csv").string());
  metrics << rk::kMetricsHeader << "\n";

  rk::TrainHooks hooks;
  hooks.on_epoch_end = [&](const rk::EpochReport& r, const rk::LayerStack& model) {
    metrics << rk::metrics_row(r) << "\n" << std::flush;
    std::fprintf(stderr, "epoch %d lr %.4f loss %.4f top1 %.3f (%lld ms)\n", r.epoch, r.lr, r.total, r.train_top1,
                 static_cast<long long>(r.wall_ms));
    if (cfg.checkpoint_every > 0 && (r.epoch + 1) % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "model_epoch%03d.atc", r.epoch + 1);
      rk::write_file(out / name, rk::save_checkpoint(model));
    }
  };
  const rk::TrainResult res = rk::train(ds, cfg, hooks);
  rk::write_file(out / "model_final.atc", rk::save_checkpoint(res.model));
  std::cout << "final train_top1 " << res.reports.back().train_top1 << "\n";
  return 0;
}

struct AttackArgs {
  std::string model, data, method = "pgd", source, out = ".";
  double eps = 0.031, step = 0.003;
  int iters = 20;
  std::string init = "gaussian";
  bool no_random_start = false;
  std::uint64_t seed = 0;
};

int cmd_attack(const AttackArgs& a) {
  const rk::LayerStack model = load_model(a.model);
  std::optional<rk::LayerStack> source;
  if (!a.source.empty()) source = load_model(a.source);
  const rk::Dataset ds = rk::load_dataset(a.data);
  const rk::AttackMethod method = rk::parse_attack_method(a.method);
  rk::EvalOptions opts;
  opts.eps = a.eps;
  opts.step = a.step;
  opts.random_start = !a.no_random_start;
  opts.init = rk::parse_init_kind(a.init);
  opts.seed = a.seed;
  const double clean = rk::clean_accuracy(model, ds);
  const double robust = rk::robust_accuracy(model, ds, method, a.iters, opts, source ? &*source : nullptr);
  ordered_json j{{"method", a.method}, {"eps", a.eps},         {"step", a.step}, {"iters", a.iters},
                 {"robust_top1", robust}, {"clean_top1", clean}, {"n", ds.size()}};
  if (source) j["source_model"] = a.source;
  ensure_dir(a.out);
  write_text(fs::path(a.out) / "results.json", j.dump(2) + "\n");
  std::cout << "robust_top1 " << robust << " clean_top1 " << clean << "\n";
  return 0;
}

struct EvalArgs {
  std::string model, data, corruption, occlusion, out = ".";
  double block_frac = 0.4;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

int cmd_eval(const EvalArgs& a) {
  std::vector<rk::CorruptionKind> kinds;
  if (a.corruption == "all")
    kinds = rk::all_corruptions();
  else if (!a.corruption.empty())
    kinds.push_back(rk::parse_corruption(a.corruption));
  std::optional<rk::OcclusionMode> occ;
  if (!a.occlusion.empty()) occ = rk::parse_occlusion(a.occlusion);
  if (kinds.empty() && !occ) kinds = rk::all_corruptions();

  const rk::LayerStack model = load_model(a.model);
  const rk::Dataset ds = rk::load_dataset(a.data);
  rk::EvalOptions opts;
  opts.block_frac = a.block_frac;
  opts.seed = a.seed;
  opts.threads = a.threads;
  ensure_dir(a.out);

  ordered_json j{{"clean_top1", rk::clean_accuracy(model, ds)}, {"n", ds.size()}};
  if (!kinds.empty()) {
    const rk::CorruptionReport rep = rk::evaluate_corruptions(model, ds, kinds, opts);
    ordered_json per = ordered_json::object();
    std::string csv = "corruption,ce\n";
    for (const auto& [k, ce] : rep.ce) {
      per[rk::corruption_name(k)] = ce;
      char row[96];
      std::snprintf(row, sizeof row, "%s,%.9g\n", rk::corruption_name(k).c_str(), ce);
      csv += row;
    }
    j["corruption_error"] = per;
    j["mce"] = rep.mce;
    j["mca"] = rep.mca;
    write_text(fs::path(a.out) / "corruption.csv", csv);
  }
  if (occ) {
    const int k = *occ == rk::OcclusionMode::targeted ? 2 : 1;
    j["occlusion"] = {{"mode", rk::occlusion_name(*occ)},
                      {"k", k},
                      {"block_frac", a.block_frac},
                      {"accuracy", rk::occlusion_accuracy(model, ds, *occ, opts)}};
  }
  const std::string text = j.dump(2) + "\n";
  write_text(fs::path(a.out) / "eval.json", text);
  std::cout << text;
  return 0;
}

struct SweepArgs {
  std::string config, data, eval_data, out, lambda1 = "1", lambda2 = "1";
  std::uint64_t seed = 0;
};

int cmd_sweep(const SweepArgs& a) {
  rk::TrainConfig base = a.config.empty() ? rk::TrainConfig{} : rk::parse_config(read_text(a.config));
  const auto l1 = parse_list(a.lambda1), l2 = parse_list(a.lambda2);
  for (double v : l1)
    if (!(v >= 0)) throw std::invalid_argument("lambda1 values must be >= 0");
  for (double v : l2)
    if (!(v >= 0)) throw std::invalid_argument("lambda2 values must be >= 0");
  const rk::Dataset train_ds = rk::load_dataset(a.data);
  const rk::Dataset eval_ds = rk::load_dataset(a.eval_data.empty() ? a.data : a.eval_data);
  rk::EvalOptions opts;
  opts.seed = a.seed;
  opts.threads = static_cast<std::size_t>(base.threads);
  ensure_dir(a.out);
  std::ofstream csv(fs::path(a.out) / "sweep.csv");
  if (!csv) throw rk::FormatError(rk::FormatErrc::io, "cannot write sweep.csv in " + a.out);
  csv << rk::kSweepHeader << "\n";
  for (const auto& [x, y] : rk::sweep_pairs(l1, l2)) {
    const auto rows = rk::lambda_sweep(train_ds, eval_ds, base, {x}, {y}, opts);
    csv << rk::sweep_row(rows.front()) << "\n" << std::flush;
    std::cout << rk::sweep_row(rows.front()) << "\n";
  }
  return 0;
}

struct CorruptArgs {
  std::string data, out, kind;
  int severity = 1;
  std::uint64_t seed = 0;
};

int cmd_corrupt(const CorruptArgs& a) {
  rk::Dataset ds = rk::load_dataset(a.data);
  const rk::CorruptionSpec spec{rk::parse_corruption(a.kind), a.severity, std::nullopt};
  if (a.severity < 1 || a.severity > 5) throw std::invalid_argument("severity must lie in 1..5");
  ds.images = rk::corrupt_batch(ds.images, spec, rk::Rng(a.seed));
  ds.name += "-" + a.kind + "-" + std::to_string(a.severity);
  rk::save_dataset(a.out, ds);
  std::cout << "wrote " << ds.size() << " corrupted images to " << a.out << "\n";
  return 0;
}

struct MaskArgs {
  std::string out;
  std::size_t height = 16, width = 16;
  double gamma = 0.5, decay = 3.0;
  std::uint64_t seed = 0;
};

int cmd_fmix_mask(const MaskArgs& a) {
  rk::Rng rng(a.seed);
  const rk::FMixMask m = rk::fmix_mask(a.height, a.width, a.gamma, a.decay, rng);
  rk::write_file(a.out, rk::encode_tensor(m.mask));
  std::cout << "gamma " << m.gamma << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robustkit: robust training and evaluation toolkit"};
  app.set_version_flag("--version", std::string(rk::kToolkitVersion));
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate the synthetic shapes dataset");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--n", gen.n, "Number of images")->capture_default_str();
  c_gen->add_option("--classes", gen.classes, "Number of classes")->capture_default_str();
  c_gen->add_option("--size", gen.size, "Image side length")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "Seed")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model");
  c_train->add_option("--config", tr.config, "JSON config file");
  c_train->add_option("--manifest", tr.manifest, "Re-run from a manifest.json")->excludes("--config");
  c_train->add_option("--data", tr.data, "Dataset directory")->required();
  c_train->add_option("--out", tr.out, "Run directory")->required();
  c_train->add_option("--mode", tr.mode, "augrmixat | standard | pgdat");
  c_train->add_option("--seed", tr.seed, "Overrides the config seed");
  c_train->add_option("--threads", tr.threads, "Worker threads (1 = deterministic verification mode)");

  AttackArgs at;
  auto* c_attack = app.add_subcommand("attack", "Robust accuracy under an L-inf attack");
  c_attack->add_option("--model", at.model, "Checkpoint (.atc)")->required();
  c_attack->add_option("--data", at.data, "Dataset directory")->required();
  c_attack->add_option("--method", at.method, "fgsm | pgd | cw")->capture_default_str();
  c_attack->add_option("--eps", at.eps, "Budget")->capture_default_str();
  c_attack->add_option("--step", at.step, "Step size")->capture_default_str();
  c_attack->add_option("--iters", at.iters, "Iterations")->capture_default_str();
  c_attack->add_option("--source-model", at.source, "Craft on this checkpoint (transfer attack)");
  c_attack->add_option("--init", at.init, "Random start: gaussian | uniform")->capture_default_str();
  c_attack->add_flag("--no-random-start", at.no_random_start, "Start from the clean input");
  c_attack->add_option("--seed", at.seed, "Seed")->capture_default_str();
  c_attack->add_option("--out", at.out, "Directory for results.json")->capture_default_str();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Corruption and occlusion robustness");
  c_eval->add_option("--model", ev.model, "Checkpoint (.atc)")->required();
  c_eval->add_option("--data", ev.data, "Dataset directory")->required();
  c_eval->add_option("--corruption", ev.corruption, "all | corruption kind");
  c_eval->add_option("--occlusion", ev.occlusion, "untargeted | targeted");
  c_eval->add_option("--block-frac", ev.block_frac, "Occlusion block side fraction")->capture_default_str();
  c_eval->add_option("--seed", ev.seed, "Seed")->capture_default_str();
  c_eval->add_option("--threads", ev.threads, "Worker threads")->capture_default_str();
  c_eval->add_option("--out", ev.out, "Directory for eval.json / corruption.csv")->capture_default_str();

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "Lambda sensitivity sweep");
  c_sweep->add_option("--config", sw.config, "Base JSON config");
  c_sweep->add_option("--data", sw.data, "Training dataset directory")->required();
  c_sweep->add_option("--eval-data", sw.eval_data, "Evaluation dataset directory (default: --data)");
  c_sweep->add_option("--lambda1", sw.lambda1, "Comma-separated values")->capture_default_str();
  c_sweep->add_option("--lambda2", sw.lambda2, "Comma-separated values")->capture_default_str();
  c_sweep->add_option("--seed", sw.seed, "Evaluation seed")->capture_default_str();
  c_sweep->add_option("--out", sw.out, "Output directory")->required();

  CorruptArgs co;
  auto* c_corrupt = app.add_subcommand("corrupt", "Write a corrupted copy of a dataset");
  c_corrupt->add_option("--data", co.data, "Dataset directory")->required();
  c_corrupt->add_option("--out", co.out, "Output directory")->required();
  c_corrupt->add_option("--kind", co.kind, "Corruption kind")->required();
  c_corrupt->add_option("--severity", co.severity, "1..5")->capture_default_str();
  c_corrupt->add_option("--seed", co.seed, "Seed")->capture_default_str();

  MaskArgs mk;
  auto* c_mask = app.add_subcommand("fmix-mask", "Write one FMix mask as an AT1 tensor");
  c_mask->add_option("--out", mk.out, "Output .at1 file")->required();
  c_mask->add_option("--height", mk.height)->capture_default_str();
  c_mask->add_option("--width", mk.width)->capture_default_str();
  c_mask->add_option("--gamma", mk.gamma, "Target fraction of ones")->capture_default_str();
  c_mask->add_option("--decay", mk.decay)->capture_default_str();
  c_mask->add_option("--seed", mk.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (c_gen->parsed()) return cmd_gen_data(gen);
    if (c_train->parsed()) return cmd_train(tr);
    if (c_attack->parsed()) return cmd_attack(at);
    if (c_eval->parsed()) return cmd_eval(ev);
    if (c_sweep->parsed()) return cmd_sweep(sw);
    if (c_corrupt->parsed()) return cmd_corrupt(co);
    if (c_mask->parsed()) return cmd_fmix_mask(mk);
  } catch (const rk::DivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const rk::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const rk::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
