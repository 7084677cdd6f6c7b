#include "snncodec/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>

#include "snncodec/error.hpp"

namespace snncodec {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw FormatError(path.string() + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& bytes, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) bytes.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

void Dataset::validate() const {
  if (!images.defined() || images.rank() != 4) throw FormatError("dataset images must be [N, C, H, W]");
  if (labels.empty() || images.dim(0) != labels.size()) throw FormatError("dataset labels do not match images");
  if (class_count < 1) throw FormatError("dataset needs at least one class");
  for (int label : labels) {
    if (label < 0 || label >= class_count) throw FormatError("label " + std::to_string(label) + " out of range");
  }
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return gather(idx);
}

Dataset Dataset::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("gather: no indices");
  const std::size_t stride = channels() * height() * width();
  std::vector<double> values;
  values.reserve(indices.size() * stride);
  std::vector<int> picked;
  picked.reserve(indices.size());
  const auto src = images.values();
  for (std::size_t i : indices) {
    if (i >= size()) throw ContractError("gather: index out of range");
    values.insert(values.end(), src.begin() + static_cast<std::ptrdiff_t>(i * stride),
                  src.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
    picked.push_back(labels[i]);
  }
  return {Tensor({indices.size(), channels(), height(), width()}, std::move(values)), std::move(picked), class_count};
}

Dataset load_mnist(const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
  const auto img = read_bytes(image_path);
  const auto lab = read_bytes(label_path);
  if (read_be32(img, 0, image_path) != kImageMagic) throw FormatError(image_path.string() + ": bad image magic");
  if (read_be32(lab, 0, label_path) != kLabelMagic) throw FormatError(label_path.string() + ": bad label magic");
  const std::size_t n = read_be32(img, 4, image_path);
  const std::size_t rows = read_be32(img, 8, image_path);
  const std::size_t cols = read_be32(img, 12, image_path);
  const std::size_t n_labels = read_be32(lab, 4, label_path);
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(image_path.string() + ": empty IDX image set");
  if (n != n_labels) throw FormatError("IDX image and label counts differ");
  if (img.size() != 16 + n * rows * cols) throw FormatError(image_path.string() + ": truncated or oversized IDX body");
  if (lab.size() != 8 + n) throw FormatError(label_path.string() + ": truncated or oversized IDX body");

  std::vector<double> values(n * rows * cols);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = img[16 + i] / 255.0;
  std::vector<int> labels(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = lab[8 + i];
    max_label = std::max(max_label, labels[i]);
  }
  Dataset ds{Tensor({n, 1, rows, cols}, std::move(values)), std::move(labels), std::max(10, max_label + 1)};
  ds.validate();
  return ds;
}

void save_mnist(const Dataset& ds, const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
  ds.validate();
  if (ds.channels() != 1) throw FormatError("IDX images must have one channel");
  std::vector<std::uint8_t> img;
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, static_cast<std::uint32_t>(ds.height()));
  put_be32(img, static_cast<std::uint32_t>(ds.width()));
  for (double v : ds.images.values()) img.push_back(to_byte(v));
  std::vector<std::uint8_t> lab;
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int label : ds.labels) lab.push_back(static_cast<std::uint8_t>(label));
  write_bytes(image_path, img);
  write_bytes(label_path, lab);
}

Dataset load_cifar10(std::span<const std::filesystem::path> paths) {
  if (paths.empty()) throw FormatError("no CIFAR-10 files given");
  std::vector<double> values;
  std::vector<int> labels;
  for (const auto& path : paths) {
    const auto bytes = read_bytes(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw FormatError(path.string() + ": length is not a multiple of 3073");
    }
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
      if (bytes[off] > 9) throw FormatError(path.string() + ": label byte " + std::to_string(bytes[off]) + " > 9");
      labels.push_back(bytes[off]);
      for (std::size_t i = 1; i < kCifarRecord; ++i) values.push_back(bytes[off + i] / 255.0);
    }
  }
  const std::size_t n = labels.size();
  Dataset ds{Tensor({n, 3, kCifarSide, kCifarSide}, std::move(values)), std::move(labels), 10};
  ds.validate();
  return ds;
}

void save_cifar10(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  if (ds.channels() != 3 || ds.height() != kCifarSide || ds.width() != kCifarSide) {
    throw FormatError("CIFAR-10 records must be 3x32x32");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(ds.size() * kCifarRecord);
  const auto values = ds.images.values();
  const std::size_t stride = kCifarRecord - 1;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    bytes.push_back(static_cast<std::uint8_t>(ds.labels[i]));
    for (std::size_t j = 0; j < stride; ++j) bytes.push_back(to_byte(values[i * stride + j]));
  }
  write_bytes(path, bytes);
}

Dataset synth_blobs(std::size_t n, int classes, std::size_t side, std::uint64_t seed) {
  if (classes < 1 || n < static_cast<std::size_t>(classes)) throw ContractError("synth_blobs: need n >= classes >= 1");
  if (side < 2) throw ContractError("synth_blobs: side must be >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::normal_distribution<double> jitter(0.0, 0.15);
  // Class centers spread on a circle around the image center.
  const double mid = (static_cast<double>(side) - 1.0) / 2.0;
  const double radius = 0.3 * static_cast<double>(side);
  const double width = std::max(0.6, 0.12 * static_cast<double>(side));
  std::vector<double> values(n * side * side);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    labels[i] = label;
    const double angle = 2.0 * M_PI * label / classes;
    const double cy = classes == 1 ? mid : mid + radius * std::sin(angle) + jitter(rng);
    const double cx = classes == 1 ? mid : mid + radius * std::cos(angle) + jitter(rng);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const double blob = std::exp(-(dy * dy + dx * dx) / (2.0 * width * width));
        values[(i * side + y) * side + x] = std::clamp(blob + noise(rng), 0.0, 1.0);
      }
    }
  }
  Dataset ds{Tensor({n, 1, side, side}, std::move(values)), std::move(labels), classes};
  ds.validate();
  return ds;
}

std::vector<std::vector<std::size_t>> batches(const Dataset& ds, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw ContractError("batches: batch_size must be >= 1");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return out;
}

}  // namespace snncodec
