#pragma once

// Desk-scale spiking classifier used for the encoding ablations:
//
//   [conv3x3 C->F]  (front end, only when flags.lc)
//   encoder(mode)
//   conv3x3 -> LIF -> avgpool2 -> conv3x3 -> LIF -> avgpool2
//   linear -> LIF -> linear, averaged over T (integrating readout)
//
// Convolutions and linear layers run on the time axis folded into the batch.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "snncodec/config.hpp"
#include "snncodec/data.hpp"
#include "snncodec/encoder.hpp"
#include "snncodec/neuron.hpp"
#include "snncodec/tensor.hpp"

namespace snncodec {

struct AblationFlags {
  bool lt = true;  ///< learnable threshold decay logits
  bool lc = true;  ///< convolutional front end present
  bool sg = true;  ///< surrogate (vs exact-zero) spike backward

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

enum class NeuronVariant { Standard, Learnable };

/// Which spike operations follow flags.sg. With Encoder, the network's own
/// LIF layers always train with the surrogate.
enum class SurrogateScope { All, Encoder };

struct ModelConfig {
  EncoderMode mode = EncoderMode::Ttfs;
  AblationFlags flags;
  std::size_t steps = 4;
  std::size_t in_channels = 1;
  std::size_t image_size = 28;
  std::size_t front_channels = 16;
  std::size_t conv1_channels = 32;
  std::size_t conv2_channels = 32;
  std::size_t hidden = 128;
  NeuronVariant neuron = NeuronVariant::Standard;
  std::size_t class_count = 10;
  std::uint64_t seed = 0;
  double decay = 0.5;
  double v_th = 1.0;
  double theta0 = 1.0;
  double alpha = 4.0;
  double init_gain = 2.449489742783178;  // sqrt(6)
  SurrogateScope sg_scope = SurrogateScope::Encoder;

  void validate() const;
  /// Canonical key=value text; every key is always present.
  std::string to_text() const;
  /// Applies the recognised keys of kv on top of defaults; consumed keys are erased.
  static ModelConfig from_key_values(KeyValues& kv);
  std::uint64_t digest() const { return fnv1a64(to_text()); }

  /// Backward semantics for the encoder spike and for the network LIF layers.
  SpikeBackward encoder_backward() const;
  SpikeBackward neuron_backward() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double eval_accuracy = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct ForwardOptions {
  SpikeBackward encoder_bw;
  SpikeBackward neuron_bw;
  /// Reorders the encoder output along time before it enters the network.
  std::optional<std::vector<std::size_t>> time_permutation;
};

using NamedTensor = std::pair<std::string, Tensor>;

class Model {
 public:
  explicit Model(ModelConfig config);
  // Parameters are shared handles; copying would alias them.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  /// Every parameter tensor, trainable or frozen, in a fixed order.
  const std::vector<NamedTensor>& parameters() const { return params_; }
  Tensor parameter(const std::string& name) const;
  /// Parameters that sit before the encoder's spike generation.
  std::vector<std::string> pre_spike_parameter_names() const;

  /// Options derived from the config flags.
  ForwardOptions default_options() const;

  /// images[B, C, S, S] -> logits[B, K]
  Tensor forward(const Tensor& images, const ForwardOptions& options) const;
  Tensor forward(const Tensor& images) const { return forward(images, default_options()); }

  /// Encoder output [T, B, ...] for the given images.
  Tensor encode_images(const Tensor& images, const ForwardOptions& options) const;

  std::size_t epoch() const { return epoch_; }
  const std::vector<EpochMetrics>& history() const { return history_; }
  void record_epoch(const EpochMetrics& m);

  /// Rescales conv1, conv2 and fc weights so each layer's input current to
  /// its LIF neurons has the given RMS on `images`. Parameters before the
  /// encoder's spike generation are left untouched. Layers that receive no
  /// input activity keep their scale.
  void calibrate(const Tensor& images, double target_rms);

  /// Replaces parameter values by name (used by checkpoint loading).
  void assign(const std::string& name, const Tensor& values);

 private:
  Tensor logits_from_train(const Tensor& train, std::size_t batch, const ForwardOptions& options) const;

  ModelConfig config_;
  std::vector<NamedTensor> params_;
  EncoderParams encoder_;
  LifParams lif1_, lif2_, lif3_;
  std::size_t epoch_ = 0;
  std::vector<EpochMetrics> history_;
};

Model build_model(const ModelConfig& config);

struct TrainOptions {
  std::size_t epochs = 5;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  /// Before the first epoch of a fresh model, calibrate() on the first
  /// `calibration_samples` training images. Zero disables.
  std::size_t calibration_samples = 64;
  double calibration_rms = 1.0;
  /// Called after every epoch.
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// SGD with momentum on softmax cross-entropy; deterministic given seeds.
std::vector<EpochMetrics> train(Model& model, const Dataset& train_ds, const Dataset& eval_ds,
                                const TrainOptions& options);

/// Predicted class per sample (argmax, lowest index on ties).
std::vector<int> predict(const Model& model, const Dataset& ds, const ForwardOptions& options,
                         std::size_t batch_size = 64);

/// Fraction of labels matched by argmax(logits); ties go to the lowest index.
double accuracy_from_logits(const Tensor& logits, std::span<const int> labels);
double evaluate(const Model& model, const Dataset& ds);
double evaluate(const Model& model, const Dataset& ds, const ForwardOptions& options, std::size_t batch_size = 64);

/// Per-neuron spike counts of the encoder output, summed over time.
std::vector<double> encoder_spike_counts(const Model& model, const Tensor& images, const ForwardOptions& options);

struct Checkpoint {
  ModelConfig config;
  std::vector<NamedTensor> params;
  std::size_t epoch = 0;
  std::vector<EpochMetrics> history;
};

Checkpoint make_checkpoint(const Model& model);
Model model_from_checkpoint(const Checkpoint& ckpt);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header: magic "SNNCKPT1", u32 version, u64 config digest, config text;
/// then epoch, metric history and named little-endian f64 parameter blocks.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
/// Also rejects checkpoints whose config digest differs from `expected`.
Model load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace snncodec
