#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "snncodec/data.hpp"
#include "snncodec/network.hpp"

namespace snncodec::cli {

enum class DatasetKind { Mnist, Cifar10, Blobs };

/// Everything a training run needs. Parsed from key=value text; every key
/// has a default and unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  std::size_t epochs = 3;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t calibration_samples = 64;
  double calibration_rms = 1.0;

  DatasetKind dataset = DatasetKind::Mnist;
  std::filesystem::path data_dir = "data/mnist-subset";
  std::vector<std::filesystem::path> cifar_train;
  std::vector<std::filesystem::path> cifar_test;
  std::size_t train_size = 2000;
  std::size_t test_size = 1000;
  std::size_t blobs_n = 400;
  std::size_t blobs_side = 12;
  std::size_t blobs_classes = 4;
  std::vector<std::uint64_t> seeds = {35, 1000, 0};

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Canonical text of every key, including defaults.
  std::string to_text() const;

  TrainOptions train_options() const;
};

struct Split {
  Dataset train;
  Dataset test;
};

/// Loads the configured dataset and fixes model input/class fields to it.
Split load_split(RunConfig& cfg);

}  // namespace snncodec::cli
