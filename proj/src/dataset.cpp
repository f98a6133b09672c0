// SPDX-License-Identifier: Apache-2.0
#include "robustkit/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "robustkit/rng.hpp"
#include "robustkit/serialize.hpp"

namespace rk {

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out;
  out.images = gather_rows(images, idx);
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) out.labels.push_back(labels.at(i));
  out.num_classes = num_classes;
  out.name = name;
  out.seed = seed;
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4) throw std::invalid_argument("dataset images must be [N,C,H,W], got " + shape_str(images.shape()));
  if (images.dim(0) != labels.size())
    throw std::invalid_argument("dataset has " + std::to_string(images.dim(0)) + " images but " +
                                std::to_string(labels.size()) + " labels");
  if (num_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
      throw std::invalid_argument("dataset label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
  for (float v : images.data())
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("dataset pixel outside [0, 1]");
}

namespace {

constexpr std::size_t kShapeCount = 6;

// Membership of pixel (y, x), in units of the image size, for each shape.
bool inside(std::size_t shape, double y, double x, double scale, bool vertical) {
  const double ay = std::abs(y), ax = std::abs(x);
  switch (shape) {
    case 0:  // disc
      return y * y + x * x <= scale * scale;
    case 1: {  // bar
      const double along = vertical ? ay : ax, across = vertical ? ax : ay;
      return along <= 1.1 * scale && across <= 0.3 * scale;
    }
    case 2:  // cross
      return (ax <= 1.1 * scale && ay <= 0.22 * scale) || (ay <= 1.1 * scale && ax <= 0.22 * scale);
    case 3: {  // ring
      const double r = std::sqrt(y * y + x * x);
      return r <= scale && r >= 0.55 * scale;
    }
    case 4:  // square outline
      return std::max(ay, ax) <= scale && std::max(ay, ax) >= 0.6 * scale;
    case 5:  // diagonal
      return std::abs(vertical ? y - x : y + x) <= 0.3 * scale && std::max(ay, ax) <= scale;
    default:
      return false;
  }
}

}  // namespace

Dataset make_shapes_dataset(std::size_t n, std::size_t num_classes, std::size_t size, std::uint64_t seed,
                            const ShapesOptions& opts) {
  if (num_classes < 2 || num_classes > kShapeCount)
    throw std::invalid_argument("shapes dataset supports 2.." + std::to_string(kShapeCount) + " classes");
  if (n < num_classes) throw std::invalid_argument("shapes dataset needs n >= number of classes");
  if (size < 8) throw std::invalid_argument("shapes dataset needs images of at least 8x8");
  if (!(opts.contrast_min >= 0.0 && opts.contrast_min <= opts.contrast_max && opts.contrast_max <= 1.0))
    throw std::invalid_argument("shapes contrast range must satisfy 0 <= min <= max <= 1");
  if (!(opts.noise_sigma >= 0.0)) throw std::invalid_argument("shapes noise_sigma must be >= 0");
  Rng rng(seed);
  Dataset ds;
  ds.num_classes = num_classes;
  ds.name = "shapes";
  ds.seed = seed;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % num_classes);
  for (std::size_t i = n; i-- > 1;) std::swap(ds.labels[i], ds.labels[rng.below(i + 1)]);
  ds.images = Tensor({n, 1, size, size});
  const double s = static_cast<double>(size);
  for (std::size_t i = 0; i < n; ++i) {
    Rng item = rng.child(i);
    const double background = item.uniform(0.15, 0.55);
    const double contrast = item.uniform(opts.contrast_min, opts.contrast_max);
    const double cy = s / 2.0 + item.uniform(-s / 8.0, s / 8.0);
    const double cx = s / 2.0 + item.uniform(-s / 8.0, s / 8.0);
    const double scale = item.uniform(0.2, 0.3) * s;
    const bool vertical = item.coin();
    const auto shape = static_cast<std::size_t>(ds.labels[i]);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
        double v = background + (inside(shape, dy, dx, scale, vertical) ? contrast : 0.0);
        v += opts.noise_sigma * item.normal();
        ds.images.at(i, 0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  }
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  ds.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError(FormatErrc::io, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "images.at1", encode_tensor(ds.images));
  ByteTensor labels({ds.labels.size()});
  for (std::size_t i = 0; i < ds.labels.size(); ++i) labels[i] = static_cast<std::uint8_t>(ds.labels[i]);
  write_file(dir / "labels.at1", encode_tensor(labels));
  nlohmann::ordered_json meta = {{"num_classes", ds.num_classes}, {"name", ds.name}, {"seed", ds.seed}};
  const std::string text = meta.dump(2) + "\n";
  write_file(dir / "meta.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.images = read_f32_tensor(dir / "images.at1");
  const ByteTensor labels = read_u8_tensor(dir / "labels.at1");
  if (labels.rank() != 1) throw FormatError(FormatErrc::shape_mismatch, "labels.at1 must be rank 1");
  ds.labels.assign(labels.data().begin(), labels.data().end());
  const auto raw = read_file(dir / "meta.json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(raw.begin(), raw.end());
    ds.num_classes = meta.at("num_classes").get<std::size_t>();
    ds.name = meta.value("name", std::string("dataset"));
    ds.seed = meta.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::io, "bad meta.json in " + dir.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

std::string dataset_checksum(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* name : {"images.at1", "labels.at1"})
    for (std::uint8_t b : read_file(dir / name)) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rk
