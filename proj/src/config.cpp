// SPDX-License-Identifier: Apache-2.0
#include "robustkit/config.hpp"

#include <json.hpp>

#include <set>

namespace rk {

using nlohmann::json;
using nlohmann::ordered_json;

AttackLoss parse_attack_loss(const std::string& name) {
  for (AttackLoss l : {AttackLoss::kl_consistency, AttackLoss::cross_entropy, AttackLoss::cw_margin})
    if (attack_loss_name(l) == name) return l;
  throw std::invalid_argument("unknown attack loss '" + name + "'; valid: kl_consistency, cross_entropy, cw_margin");
}

std::string init_kind_name(InitKind k) { return k == InitKind::gaussian ? "gaussian" : "uniform"; }

InitKind parse_init_kind(const std::string& name) {
  if (name == "gaussian") return InitKind::gaussian;
  if (name == "uniform") return InitKind::uniform;
  throw std::invalid_argument("unknown init '" + name + "'; valid: gaussian, uniform");
}

namespace {

// Reads known keys from one object and remembers which were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string prefix, std::vector<std::string>& unknown, std::vector<std::string>& bad)
      : obj_(obj), prefix_(std::move(prefix)), unknown_(unknown), bad_(bad) {}

  ~ObjectReader() {
    for (const auto& [k, _] : obj_.items())
      if (!seen_.count(k)) unknown_.push_back(prefix_ + k);
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const json* v = find(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v->is_boolean()) return fail(key);
    } else if constexpr (std::is_integral_v<T>) {
      if (!v->is_number_integer()) return fail(key);
      if (std::is_unsigned_v<T> && v->is_number_integer() && !v->is_number_unsigned()) return fail(key);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v->is_number()) return fail(key);
    } else {
      if (!v->is_string()) return fail(key);
    }
    out = v->get<T>();
  }

  template <class E, class Parse>
  void get_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    const json* v = find(key);
    if (!v) return;
    if (!v->is_string()) return fail(key);
    try {
      out = parse(v->get<std::string>());
    } catch (const std::invalid_argument&) {
      fail(key);
    }
  }

  template <class E, class Parse>
  void get_enum_list(const std::string& key, std::vector<E>& out, Parse parse) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) return fail(key);
    std::vector<E> items;
    for (const auto& e : *v) {
      if (!e.is_string()) return fail(key);
      try {
        items.push_back(parse(e.get<std::string>()));
      } catch (const std::invalid_argument&) {
        return fail(key);
      }
    }
    out = std::move(items);
  }

  void fail(const std::string& key) { bad_.push_back(prefix_ + key); }
  std::string path(const std::string& key) const { return prefix_ + key; }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& unknown_;
  std::vector<std::string>& bad_;
  std::set<std::string> seen_;
};

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

void read_config(const json& j, TrainConfig& cfg, const std::string& prefix, std::vector<std::string>& unknown,
                 std::vector<std::string>& bad) {
  if (!j.is_object()) {
    bad.push_back(prefix.empty() ? "<root>" : prefix.substr(0, prefix.size() - 1));
    return;
  }
  ObjectReader r(j, prefix, unknown, bad);
  r.get_enum("mode", cfg.mode, parse_mode);
  r.get("arch", cfg.arch);
  r.get("lambda1", cfg.lambda1);
  r.get("lambda2", cfg.lambda2);
  r.get("batch_size", cfg.batch_size);
  r.get("epochs", cfg.epochs);
  r.get("lr0", cfg.lr0);
  r.get("momentum", cfg.momentum);
  r.get("weight_decay", cfg.weight_decay);
  r.get("seed", cfg.seed);
  r.get("checkpoint_every", cfg.checkpoint_every);
  r.get("threads", cfg.threads);

  if (const json* a = r.find("attack")) {
    if (!a->is_object()) {
      r.fail("attack");
    } else {
      ObjectReader ar(*a, r.path("attack."), unknown, bad);
      ar.get("eps", cfg.attack.eps);
      ar.get("step", cfg.attack.step);
      ar.get("iters", cfg.attack.iters);
      ar.get_enum("loss", cfg.attack.loss, parse_attack_loss);
      ar.get("random_start", cfg.attack.random_start);
      ar.get_enum("init", cfg.attack.init, parse_init_kind);
      ar.get("init_sigma", cfg.attack.init_sigma);
    }
  }
  if (const json* a = r.find("augment")) {
    if (!a->is_object()) {
      r.fail("augment");
    } else {
      ObjectReader ar(*a, r.path("augment."), unknown, bad);
      ar.get("alpha", cfg.augment.alpha);
      ar.get("num_chains", cfg.augment.num_chains);
      ar.get("depth_min", cfg.augment.depth_min);
      ar.get("depth_max", cfg.augment.depth_max);
      ar.get("severity", cfg.augment.severity);
      ar.get("fill_value", cfg.augment.fill_value);
      ar.get_enum_list("ops", cfg.augment.ops, parse_op);
    }
  }
  if (const json* a = r.find("mix")) {
    if (!a->is_object()) {
      r.fail("mix");
    } else {
      ObjectReader ar(*a, r.path("mix."), unknown, bad);
      ar.get_enum_list("methods", cfg.mix.methods, parse_method);
      if (const json* g = ar.find("fixed_gamma")) {
        if (g->is_null())
          cfg.mix.fixed_gamma.reset();
        else if (g->is_number())
          cfg.mix.fixed_gamma = g->get<double>();
        else
          ar.fail("fixed_gamma");
      }
      ar.get("fmix_decay", cfg.mix.fmix_decay);
    }
  }
}

void check(std::vector<std::string>& unknown, std::vector<std::string>& bad) {
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + join(unknown), unknown);
  if (!bad.empty()) throw ConfigError("invalid values for config keys: " + join(bad), bad);
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what(), {});
  }
}

ordered_json config_object(const TrainConfig& c) {
  ordered_json ops = ordered_json::array(), methods = ordered_json::array();
  for (OpKind k : c.augment.ops) ops.push_back(op_name(k));
  for (MixMethod m : c.mix.methods) methods.push_back(method_name(m));
  return ordered_json{
      {"mode", mode_name(c.mode)},
      {"arch", c.arch},
      {"lambda1", c.lambda1},
      {"lambda2", c.lambda2},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"lr0", c.lr0},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"seed", c.seed},
      {"checkpoint_every", c.checkpoint_every},
      {"threads", c.threads},
      {"attack",
       {{"eps", c.attack.eps},
        {"step", c.attack.step},
        {"iters", c.attack.iters},
        {"loss", attack_loss_name(c.attack.loss)},
        {"random_start", c.attack.random_start},
        {"init", init_kind_name(c.attack.init)},
        {"init_sigma", c.attack.init_sigma}}},
      {"augment",
       {{"alpha", c.augment.alpha},
        {"num_chains", c.augment.num_chains},
        {"depth_min", c.augment.depth_min},
        {"depth_max", c.augment.depth_max},
        {"severity", c.augment.severity},
        {"fill_value", c.augment.fill_value},
        {"ops", ops}}},
      {"mix",
       {{"methods", methods},
        {"fixed_gamma", c.mix.fixed_gamma ? ordered_json(*c.mix.fixed_gamma) : ordered_json(nullptr)},
        {"fmix_decay", c.mix.fmix_decay}}},
  };
}

}  // namespace

TrainConfig parse_config(std::string_view json_text) {
  const json j = parse_json(json_text);
  TrainConfig cfg;
  std::vector<std::string> unknown, bad;
  read_config(j, cfg, "", unknown, bad);
  check(unknown, bad);
  cfg.validate();
  return cfg;
}

std::string config_to_json(const TrainConfig& cfg) { return config_object(cfg).dump(2) + "\n"; }

std::string manifest_to_json(const RunManifest& m) {
  ordered_json j{{"toolkit_version", m.toolkit_version},
                 {"config", config_object(m.config)},
                 {"seed", m.seed},
                 {"dataset_checksum", m.dataset_checksum}};
  return j.dump(2) + "\n";
}

RunManifest parse_manifest(std::string_view json_text) {
  const json j = parse_json(json_text);
  RunManifest m;
  std::vector<std::string> unknown, bad;
  if (!j.is_object()) throw ConfigError("manifest must be a JSON object", {"<root>"});
  {
    ObjectReader r(j, "", unknown, bad);
    r.get("toolkit_version", m.toolkit_version);
    r.get("seed", m.seed);
    r.get("dataset_checksum", m.dataset_checksum);
    if (const json* c = r.find("config"))
      read_config(*c, m.config, "config.", unknown, bad);
    else
      bad.push_back("config");
  }
  check(unknown, bad);
  m.config.seed = m.seed;
  m.config.validate();
  return m;
}

}  // namespace rk
