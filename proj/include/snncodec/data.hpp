#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "snncodec/tensor.hpp"

namespace snncodec {

/// Images [N, C, H, W] in [0, 1] with class labels. Immutable once built.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }

  void validate() const;
  /// First n samples (all if n >= size()).
  Dataset head(std::size_t n) const;
  /// Samples at the given indices, in that order.
  Dataset gather(std::span<const std::size_t> indices) const;
};

/// Big-endian IDX pair: images magic 2051, labels magic 2049. Pixels / 255.
Dataset load_mnist(const std::filesystem::path& image_path, const std::filesystem::path& label_path);
void save_mnist(const Dataset& ds, const std::filesystem::path& image_path, const std::filesystem::path& label_path);

/// Concatenated 3073-byte records: label byte then 3x32x32 planar pixels.
Dataset load_cifar10(std::span<const std::filesystem::path> paths);
void save_cifar10(const Dataset& ds, const std::filesystem::path& path);

/// One bright Gaussian blob per class at a class-specific location, plus
/// pixel noise. Labels cycle 0..classes-1. Deterministic in seed.
Dataset synth_blobs(std::size_t n, int classes, std::size_t side, std::uint64_t seed);

/// Index batches covering 0..N-1 once; seeded permutation when shuffle_seed is set.
std::vector<std::vector<std::size_t>> batches(const Dataset& ds, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed = std::nullopt);

}  // namespace snncodec
