#include "snncodec/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "snncodec/error.hpp"

namespace snncodec {

namespace {

std::string_view neuron_name(NeuronVariant v) { return v == NeuronVariant::Learnable ? "learnable" : "standard"; }
std::string_view scope_name(SurrogateScope s) { return s == SurrogateScope::All ? "all" : "encoder"; }

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, double gain, std::mt19937_64& rng) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> draw(-bound, bound);
  const std::size_t n = shape_numel(shape);
  std::vector<double> values(n);
  for (double& v : values) v = draw(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

Tensor gather_images(const Dataset& ds, std::span<const std::size_t> idx) { return ds.gather(idx).images; }

std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(ds.labels[i]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (steps < 1) throw ConfigError("T must be >= 1");
  if (!flags.lc && mode == EncoderMode::Direct) {
    throw ConfigError("direct encoding needs the convolutional front end (lc=true)");
  }
  if (in_channels < 1 || front_channels < 1 || conv1_channels < 1 || conv2_channels < 1 || hidden < 1) {
    throw ConfigError("layer widths must be >= 1");
  }
  if (image_size < 4 || image_size % 4 != 0) throw ConfigError("image_size must be a positive multiple of 4");
  if (class_count < 1) throw ConfigError("class_count must be >= 1");
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("decay must lie in (0, 1)");
  if (!(v_th > 0.0) || !(theta0 > 0.0)) throw ConfigError("thresholds must be positive");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(init_gain > 0.0)) throw ConfigError("init_gain must be positive");
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "mode=" << to_string(mode) << '\n'
      << "lt=" << (flags.lt ? "true" : "false") << '\n'
      << "lc=" << (flags.lc ? "true" : "false") << '\n'
      << "sg=" << (flags.sg ? "true" : "false") << '\n'
      << "sg_scope=" << scope_name(sg_scope) << '\n'
      << "T=" << steps << '\n'
      << "in_channels=" << in_channels << '\n'
      << "image_size=" << image_size << '\n'
      << "front_channels=" << front_channels << '\n'
      << "conv1_channels=" << conv1_channels << '\n'
      << "conv2_channels=" << conv2_channels << '\n'
      << "hidden=" << hidden << '\n'
      << "neuron=" << neuron_name(neuron) << '\n'
      << "classes=" << class_count << '\n'
      << "seed=" << seed << '\n'
      << "decay=" << format_real(decay) << '\n'
      << "vth=" << format_real(v_th) << '\n'
      << "theta0=" << format_real(theta0) << '\n'
      << "alpha=" << format_real(alpha) << '\n'
      << "init_gain=" << format_real(init_gain) << '\n';
  return out.str();
}

ModelConfig ModelConfig::from_key_values(KeyValues& kv) {
  ModelConfig c;
  auto take = [&kv](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  if (auto v = take("mode")) {
    auto m = parse_encoder_mode(*v);
    if (!m) throw ConfigError("unknown encoder mode '" + *v + "'");
    c.mode = *m;
  }
  if (auto v = take("lt")) c.flags.lt = parse_bool("lt", *v);
  if (auto v = take("lc")) c.flags.lc = parse_bool("lc", *v);
  if (auto v = take("sg")) c.flags.sg = parse_bool("sg", *v);
  if (auto v = take("sg_scope")) {
    if (*v == "all") {
      c.sg_scope = SurrogateScope::All;
    } else if (*v == "encoder") {
      c.sg_scope = SurrogateScope::Encoder;
    } else {
      throw ConfigError("sg_scope must be 'all' or 'encoder'");
    }
  }
  if (auto v = take("T")) c.steps = parse_count("T", *v);
  if (auto v = take("in_channels")) c.in_channels = parse_count("in_channels", *v);
  if (auto v = take("image_size")) c.image_size = parse_count("image_size", *v);
  if (auto v = take("front_channels")) c.front_channels = parse_count("front_channels", *v);
  if (auto v = take("conv1_channels")) c.conv1_channels = parse_count("conv1_channels", *v);
  if (auto v = take("conv2_channels")) c.conv2_channels = parse_count("conv2_channels", *v);
  if (auto v = take("hidden")) c.hidden = parse_count("hidden", *v);
  if (auto v = take("neuron")) {
    if (*v == "standard") {
      c.neuron = NeuronVariant::Standard;
    } else if (*v == "learnable") {
      c.neuron = NeuronVariant::Learnable;
    } else {
      throw ConfigError("neuron must be 'standard' or 'learnable'");
    }
  }
  if (auto v = take("classes")) c.class_count = parse_count("classes", *v);
  if (auto v = take("seed")) c.seed = parse_seed("seed", *v);
  if (auto v = take("decay")) c.decay = parse_real("decay", *v);
  if (auto v = take("vth")) c.v_th = parse_real("vth", *v);
  if (auto v = take("theta0")) c.theta0 = parse_real("theta0", *v);
  if (auto v = take("alpha")) c.alpha = parse_real("alpha", *v);
  if (auto v = take("init_gain")) c.init_gain = parse_real("init_gain", *v);
  c.validate();
  return c;
}

SpikeBackward ModelConfig::encoder_backward() const {
  return flags.sg ? SpikeBackward::surrogate(alpha) : SpikeBackward::exact_zero();
}

SpikeBackward ModelConfig::neuron_backward() const {
  if (sg_scope == SurrogateScope::Encoder) return SpikeBackward::surrogate(alpha);
  return encoder_backward();
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const ModelConfig& c = config_;
  std::mt19937_64 rng(c.seed);
  const std::size_t enc_channels = c.flags.lc ? c.front_channels : c.in_channels;
  if (c.flags.lc) {
    params_.emplace_back("front.weight",
                         uniform_fan_in({c.front_channels, c.in_channels, 3, 3}, c.in_channels * 9, c.init_gain, rng));
  }
  encoder_ = EncoderParams::make(c.steps, enc_channels, c.flags.lt, c.theta0);
  params_.emplace_back("encoder.decay_logits", encoder_.decay_logits);

  params_.emplace_back("conv1.weight",
                       uniform_fan_in({c.conv1_channels, enc_channels, 3, 3}, enc_channels * 9, c.init_gain, rng));
  params_.emplace_back("conv2.weight", uniform_fan_in({c.conv2_channels, c.conv1_channels, 3, 3},
                                                      c.conv1_channels * 9, c.init_gain, rng));
  const std::size_t side = c.image_size / 4;
  const std::size_t flat = c.conv2_channels * side * side;
  params_.emplace_back("fc.weight", uniform_fan_in({c.hidden, flat}, flat, c.init_gain, rng));
  params_.emplace_back("fc.bias", Tensor::zeros({c.hidden}, true));
  params_.emplace_back("out.weight", uniform_fan_in({c.class_count, c.hidden}, c.hidden, c.init_gain, rng));
  params_.emplace_back("out.bias", Tensor::zeros({c.class_count}, true));

  auto make_lif = [&](const char* name, std::size_t channels) {
    if (c.neuron == NeuronVariant::Standard) return LifParams::standard(c.steps, c.decay, c.v_th);
    LifParams p = LifParams::make_learnable(c.steps, channels, c.decay, c.v_th);
    params_.emplace_back(std::string(name) + ".decay_logits", p.decay_logits);
    params_.emplace_back(std::string(name) + ".input_weights", p.input_weights);
    return p;
  };
  lif1_ = make_lif("lif1", c.conv1_channels);
  lif2_ = make_lif("lif2", c.conv2_channels);
  lif3_ = make_lif("lif3", c.hidden);
}

Tensor Model::parameter(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw ContractError("no parameter named " + name);
}

std::vector<std::string> Model::pre_spike_parameter_names() const {
  std::vector<std::string> out;
  if (config_.flags.lc) out.push_back("front.weight");
  out.push_back("encoder.decay_logits");
  return out;
}

ForwardOptions Model::default_options() const {
  return {config_.encoder_backward(), config_.neuron_backward(), std::nullopt};
}

void Model::record_epoch(const EpochMetrics& m) {
  history_.push_back(m);
  epoch_ = m.epoch;
}

void Model::assign(const std::string& name, const Tensor& values) {
  Tensor target = parameter(name);
  if (target.shape() != values.shape()) {
    throw FormatError("parameter " + name + " has shape " + shape_string(values.shape()) + ", expected " +
                      shape_string(target.shape()));
  }
  std::copy(values.values().begin(), values.values().end(), target.mutable_values().begin());
}

Tensor Model::encode_images(const Tensor& images, const ForwardOptions& options) const {
  const ModelConfig& c = config_;
  if (images.rank() != 4 || images.dim(1) != c.in_channels || images.dim(2) != c.image_size ||
      images.dim(3) != c.image_size) {
    throw DimensionError("model expects images [B, " + std::to_string(c.in_channels) + ", " +
                         std::to_string(c.image_size) + ", " + std::to_string(c.image_size) + "], got " +
                         shape_string(images.shape()));
  }
  const Tensor features = c.flags.lc ? conv2d(images, parameter("front.weight"), 1, 1) : images;
  Tensor train = encode(features, encoder_, c.mode, options.encoder_bw);
  if (options.time_permutation) train = permute_time(train, *options.time_permutation);
  return train;
}

Tensor Model::logits_from_train(const Tensor& train, std::size_t batch, const ForwardOptions& options) const {
  const ModelConfig& c = config_;
  const std::size_t steps = c.steps, folded = steps * batch, s1 = c.image_size, s2 = s1 / 2, s4 = s1 / 4;
  const std::size_t enc_channels = train.dim(2);

  Tensor x = conv2d(reshape(train, {folded, enc_channels, s1, s1}), parameter("conv1.weight"), 1, 1);
  x = lif_run(reshape(x, {steps, batch, c.conv1_channels, s1, s1}), lif1_, options.neuron_bw);
  x = avg_pool2d(reshape(x, {folded, c.conv1_channels, s1, s1}), 2);
  x = conv2d(x, parameter("conv2.weight"), 1, 1);
  x = lif_run(reshape(x, {steps, batch, c.conv2_channels, s2, s2}), lif2_, options.neuron_bw);
  x = avg_pool2d(reshape(x, {folded, c.conv2_channels, s2, s2}), 2);
  x = linear(reshape(x, {folded, c.conv2_channels * s4 * s4}), parameter("fc.weight"), parameter("fc.bias"));
  x = lif_run(reshape(x, {steps, batch, c.hidden}), lif3_, options.neuron_bw);
  x = linear(reshape(x, {folded, c.hidden}), parameter("out.weight"), parameter("out.bias"));
  return mean_leading(reshape(x, {steps, batch, c.class_count}));
}

void Model::calibrate(const Tensor& images, double target_rms) {
  if (!(target_rms > 0.0)) throw ContractError("calibrate: target RMS must be positive");
  NoGradGuard no_grad;
  const ModelConfig& c = config_;
  const ForwardOptions options = default_options();
  const std::size_t batch = images.dim(0), steps = c.steps, folded = steps * batch;
  const std::size_t s1 = c.image_size, s2 = s1 / 2, s4 = s1 / 4;

  auto rescale = [&](const char* name, Tensor current) {
    double sq = 0.0;
    for (double v : current.values()) sq += v * v;
    const double rms = std::sqrt(sq / static_cast<double>(current.numel()));
    if (rms == 0.0) return current;
    const double factor = target_rms / rms;
    Tensor w = parameter(name);
    for (double& v : w.mutable_values()) v *= factor;
    return scale(current, factor);
  };

  const Tensor train = encode_images(images, options);
  Tensor x = conv2d(reshape(train, {folded, train.dim(2), s1, s1}), parameter("conv1.weight"), 1, 1);
  x = rescale("conv1.weight", x);
  x = lif_run(reshape(x, {steps, batch, c.conv1_channels, s1, s1}), lif1_, options.neuron_bw);
  x = conv2d(avg_pool2d(reshape(x, {folded, c.conv1_channels, s1, s1}), 2), parameter("conv2.weight"), 1, 1);
  x = rescale("conv2.weight", x);
  x = lif_run(reshape(x, {steps, batch, c.conv2_channels, s2, s2}), lif2_, options.neuron_bw);
  x = avg_pool2d(reshape(x, {folded, c.conv2_channels, s2, s2}), 2);
  // fc.bias is still zero at calibration time, so the layer is linear in its weight.
  x = linear(reshape(x, {folded, c.conv2_channels * s4 * s4}), parameter("fc.weight"), parameter("fc.bias"));
  rescale("fc.weight", x);
}

Tensor Model::forward(const Tensor& images, const ForwardOptions& options) const {
  const Tensor train = encode_images(images, options);
  return logits_from_train(train, images.dim(0), options);
}

Model build_model(const ModelConfig& config) { return Model(config); }

// ---------------------------------------------------------------------------
// Training and evaluation

std::vector<EpochMetrics> train(Model& model, const Dataset& train_ds, const Dataset& eval_ds,
                                const TrainOptions& options) {
  const ModelConfig& c = model.config();
  for (const Dataset* ds : {&train_ds, &eval_ds}) {
    ds->validate();
    if (ds->channels() != c.in_channels || ds->height() != c.image_size || ds->width() != c.image_size) {
      throw ConfigError("dataset images do not match the model input shape");
    }
    if (static_cast<std::size_t>(ds->class_count) > c.class_count) {
      throw ConfigError("dataset has more classes than the model head");
    }
  }
  std::vector<Tensor> trainable;
  for (const auto& [name, t] : model.parameters()) {
    if (t.requires_grad()) trainable.push_back(t);
  }
  std::vector<std::vector<double>> velocity;
  for (const Tensor& t : trainable) velocity.emplace_back(t.numel(), 0.0);

  if (model.epoch() == 0 && options.calibration_samples > 0) {
    model.calibrate(train_ds.head(options.calibration_samples).images, options.calibration_rms);
  }

  const ForwardOptions fwd = model.default_options();
  std::vector<EpochMetrics> produced;
  for (std::size_t e = 0; e < options.epochs; ++e) {
    const std::size_t epoch = model.epoch() + 1;
    const auto plan = batches(train_ds, options.batch_size, options.seed * 1000003ull + epoch);
    double loss_total = 0.0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const auto& idx = plan[b];
      const auto labels = gather_labels(train_ds, idx);
      for (Tensor& t : trainable) t.zero_grad();
      const Tensor loss = softmax_cross_entropy(model.forward(gather_images(train_ds, idx), fwd), labels);
      if (!std::isfinite(loss.item())) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      backward(loss);
      loss_total += loss.item() * static_cast<double>(idx.size());
      for (std::size_t k = 0; k < trainable.size(); ++k) {
        auto values = trainable[k].mutable_values();
        const auto grad = trainable[k].grad();
        auto& vel = velocity[k];
        for (std::size_t i = 0; i < values.size(); ++i) {
          vel[i] = options.momentum * vel[i] + grad[i];
          values[i] -= options.lr * vel[i];
        }
      }
    }
    EpochMetrics m{epoch, loss_total / static_cast<double>(train_ds.size()), evaluate(model, eval_ds)};
    model.record_epoch(m);
    produced.push_back(m);
    if (options.on_epoch) options.on_epoch(m);
  }
  for (Tensor& t : trainable) t.zero_grad();
  return produced;
}

double accuracy_from_logits(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) throw DimensionError("accuracy: logits/labels mismatch");
  const std::size_t classes = logits.dim(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.values().subspan(i * classes, classes);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> predict(const Model& model, const Dataset& ds, const ForwardOptions& options,
                         std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<int> out;
  out.reserve(ds.size());
  for (const auto& idx : batches(ds, batch_size)) {
    const Tensor logits = model.forward(gather_images(ds, idx), options);
    const std::size_t classes = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto row = logits.values().subspan(i * classes, classes);
      out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

double evaluate(const Model& model, const Dataset& ds, const ForwardOptions& options, std::size_t batch_size) {
  const auto predicted = predict(model, ds, options, batch_size);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == ds.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

double evaluate(const Model& model, const Dataset& ds) { return evaluate(model, ds, model.default_options()); }

std::vector<double> encoder_spike_counts(const Model& model, const Tensor& images, const ForwardOptions& options) {
  NoGradGuard no_grad;
  const Tensor train = model.encode_images(images, options);
  const std::size_t steps = train.dim(0), stride = train.numel() / steps;
  std::vector<double> counts(stride, 0.0);
  const auto v = train.values();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < stride; ++i) counts[i] += v[t * stride + i];
  }
  return counts;
}

}  // namespace snncodec
