// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "robustkit/trainer.hpp"

namespace rk {

inline constexpr const char* kToolkitVersion = ROBUSTKIT_VERSION;

/// Schema violation. `keys()` holds the offending key paths (e.g. "attack.epz").
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& what, std::vector<std::string> keys)
      : std::invalid_argument(what), keys_(std::move(keys)) {}
  const std::vector<std::string>& keys() const noexcept { return keys_; }

 private:
  std::vector<std::string> keys_;
};

AttackLoss parse_attack_loss(const std::string& name);
std::string init_kind_name(InitKind k);
InitKind parse_init_kind(const std::string& name);

/// Parses a JSON training config. Absent keys keep their defaults; unknown
/// keys and wrongly typed values raise ConfigError; invariant violations
/// raise std::invalid_argument.
TrainConfig parse_config(std::string_view json_text);

/// Every field materialized, stable key order, 2-space indent.
std::string config_to_json(const TrainConfig& cfg);

struct RunManifest {
  std::string toolkit_version = kToolkitVersion;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::string dataset_checksum;
};

std::string manifest_to_json(const RunManifest& m);
RunManifest parse_manifest(std::string_view json_text);

}  // namespace rk
