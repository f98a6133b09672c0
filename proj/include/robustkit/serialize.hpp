// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "robustkit/model.hpp"
#include "robustkit/tensor.hpp"

namespace rk {

// AT1 tensor record:
//   "AT1\0" | u8 dtype (1=f32, 2=u8) | u8 ndim | 2 pad bytes | ndim x u64 LE dims | LE payload
// ATC checkpoint:
//   "ATC\0" | u16 LE entry count | entries of {u16 LE name length, UTF-8 name, AT1 record}

enum class DType : std::uint8_t { f32 = 1, u8 = 2 };

using ByteTensor = BasicTensor<std::uint8_t>;
using AnyTensor = std::variant<Tensor, ByteTensor>;

enum class FormatErrc { bad_magic, truncated, bad_dtype, shape_mismatch, missing_entry, io };

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

void append_tensor(std::vector<std::uint8_t>& out, const Tensor& t);
void append_tensor(std::vector<std::uint8_t>& out, const ByteTensor& t);

/// Parses one AT1 record starting at `pos`, advancing it.
AnyTensor parse_tensor(std::span<const std::uint8_t> bytes, std::size_t& pos);

std::vector<std::uint8_t> encode_tensor(const AnyTensor& t);
AnyTensor decode_tensor(std::span<const std::uint8_t> bytes);

using NamedTensors = std::vector<std::pair<std::string, AnyTensor>>;

std::vector<std::uint8_t> encode_container(const NamedTensors& entries);
NamedTensors decode_container(std::span<const std::uint8_t> bytes);

/// Architecture descriptor goes in a u8 entry named "arch", parameters in
/// "layer{i}.weight" / "layer{i}.bias".
std::vector<std::uint8_t> save_checkpoint(const LayerStack& stack);
LayerStack load_checkpoint(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Tensor read_f32_tensor(const std::filesystem::path& path);
ByteTensor read_u8_tensor(const std::filesystem::path& path);

}  // namespace rk
