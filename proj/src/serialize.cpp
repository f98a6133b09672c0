// SPDX-License-Identifier: Apache-2.0
#include "robustkit/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace rk {

namespace {

constexpr std::uint8_t kTensorMagic[4] = {0x41, 0x54, 0x31, 0x00};
constexpr std::uint8_t kCheckpointMagic[4] = {0x41, 0x54, 0x43, 0x00};

template <class U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t& pos) : bytes_(bytes), pos_(pos) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw FormatError(FormatErrc::truncated, std::string("truncated input while reading ") + what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class U>
  U le(const char* what) {
    auto s = take(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t& pos_;
};

void append_header(std::vector<std::uint8_t>& out, DType dtype, const Shape& shape) {
  if (shape.size() > 255) throw std::invalid_argument("tensor rank above 255");
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  out.push_back(0);
  out.push_back(0);
  for (std::size_t d : shape) put_le<std::uint64_t>(out, d);
}

}  // namespace

void append_tensor(std::vector<std::uint8_t>& out, const Tensor& t) {
  append_header(out, DType::f32, t.shape());
  out.reserve(out.size() + 4 * t.size());
  for (float v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
}

void append_tensor(std::vector<std::uint8_t>& out, const ByteTensor& t) {
  append_header(out, DType::u8, t.shape());
  out.insert(out.end(), t.data().begin(), t.data().end());
}

AnyTensor parse_tensor(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  Reader r(bytes, pos);
  auto magic = r.take(4, "tensor magic");
  if (std::memcmp(magic.data(), kTensorMagic, 4) != 0)
    throw FormatError(FormatErrc::bad_magic, "bad magic: not an AT1 tensor record");
  const auto dtype = r.le<std::uint8_t>("dtype");
  const auto ndim = r.le<std::uint8_t>("ndim");
  r.take(2, "padding");
  Shape shape(ndim);
  for (auto& d : shape) d = static_cast<std::size_t>(r.le<std::uint64_t>("dims"));
  const std::size_t remaining = bytes.size() - pos;
  const bool empty = std::find(shape.begin(), shape.end(), std::size_t{0}) != shape.end();
  std::size_t count = empty ? 0 : 1;
  for (std::size_t d : shape) {
    if (empty) break;
    if (count > remaining / d)
      throw FormatError(FormatErrc::truncated, "tensor dims exceed the available payload");
    count *= d;
  }
  if (dtype == static_cast<std::uint8_t>(DType::f32)) {
    auto payload = r.take(4 * count, "f32 payload");
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u = 0;
      for (std::size_t b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
      data[i] = std::bit_cast<float>(u);
    }
    return Tensor(std::move(shape), std::move(data));
  }
  if (dtype == static_cast<std::uint8_t>(DType::u8)) {
    auto payload = r.take(count, "u8 payload");
    return ByteTensor(std::move(shape), std::vector<std::uint8_t>(payload.begin(), payload.end()));
  }
  throw FormatError(FormatErrc::bad_dtype, "unknown dtype code " + std::to_string(dtype));
}

std::vector<std::uint8_t> encode_tensor(const AnyTensor& t) {
  std::vector<std::uint8_t> out;
  std::visit([&](const auto& x) { append_tensor(out, x); }, t);
  return out;
}

AnyTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  AnyTensor t = parse_tensor(bytes, pos);
  if (pos != bytes.size()) throw FormatError(FormatErrc::truncated, "trailing bytes after tensor record");
  return t;
}

std::vector<std::uint8_t> encode_container(const NamedTensors& entries) {
  if (entries.size() > 0xffff) throw std::invalid_argument("too many checkpoint entries");
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    if (name.size() > 0xffff) throw std::invalid_argument("entry name too long");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    std::visit([&](const auto& x) { append_tensor(out, x); }, t);
  }
  return out;
}

NamedTensors decode_container(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  Reader r(bytes, pos);
  auto magic = r.take(4, "checkpoint magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
    throw FormatError(FormatErrc::bad_magic, "bad magic: not an ATC checkpoint");
  const auto count = r.le<std::uint16_t>("entry count");
  NamedTensors out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto len = r.le<std::uint16_t>("name length");
    auto name = r.take(len, "entry name");
    std::string s(name.begin(), name.end());
    out.emplace_back(std::move(s), parse_tensor(bytes, pos));
  }
  if (pos != bytes.size()) throw FormatError(FormatErrc::truncated, "trailing bytes after checkpoint");
  return out;
}

std::vector<std::uint8_t> save_checkpoint(const LayerStack& stack) {
  const std::string arch = stack.architecture().describe();
  NamedTensors entries;
  entries.emplace_back("arch", ByteTensor({arch.size()}, std::vector<std::uint8_t>(arch.begin(), arch.end())));
  for (std::size_t i = 0; i < stack.params().size(); ++i) entries.emplace_back(stack.param_name(i), stack.params()[i]);
  return encode_container(entries);
}

LayerStack load_checkpoint(std::span<const std::uint8_t> bytes) {
  NamedTensors entries = decode_container(bytes);
  auto find = [&](const std::string& name) -> AnyTensor* {
    for (auto& [n, t] : entries)
      if (n == name) return &t;
    return nullptr;
  };
  AnyTensor* arch_entry = find("arch");
  if (!arch_entry || !std::holds_alternative<ByteTensor>(*arch_entry))
    throw FormatError(FormatErrc::missing_entry, "checkpoint has no architecture entry");
  const auto& raw = std::get<ByteTensor>(*arch_entry).vec();
  Architecture arch;
  try {
    arch = Architecture::parse(std::string(raw.begin(), raw.end()));
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatErrc::shape_mismatch, std::string("bad architecture: ") + e.what());
  }
  LayerStack stack(std::move(arch));
  for (std::size_t i = 0; i < stack.params().size(); ++i) {
    const std::string name = stack.param_name(i);
    AnyTensor* t = find(name);
    if (!t) throw FormatError(FormatErrc::missing_entry, "checkpoint is missing " + name);
    if (!std::holds_alternative<Tensor>(*t))
      throw FormatError(FormatErrc::bad_dtype, name + " must be f32");
    Tensor& p = std::get<Tensor>(*t);
    if (p.shape() != stack.params()[i].shape())
      throw FormatError(FormatErrc::shape_mismatch, name + " has shape " + shape_str(p.shape()) +
                                                        ", architecture expects " +
                                                        shape_str(stack.params()[i].shape()));
    stack.params()[i] = std::move(p);
  }
  return stack;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrc::io, "write failed for " + path.string());
}

Tensor read_f32_tensor(const std::filesystem::path& path) {
  AnyTensor t = decode_tensor(read_file(path));
  if (!std::holds_alternative<Tensor>(t)) throw FormatError(FormatErrc::bad_dtype, path.string() + " is not f32");
  return std::get<Tensor>(std::move(t));
}

ByteTensor read_u8_tensor(const std::filesystem::path& path) {
  AnyTensor t = decode_tensor(read_file(path));
  if (!std::holds_alternative<ByteTensor>(t))
    throw FormatError(FormatErrc::bad_dtype, path.string() + " is not u8");
  return std::get<ByteTensor>(std::move(t));
}

}  // namespace rk
