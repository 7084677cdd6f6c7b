#include "run_config.hpp"

#include <fstream>
#include <sstream>

#include "snncodec/error.hpp"

namespace snncodec::cli {

namespace {

std::vector<std::filesystem::path> parse_paths(const std::string& value) {
  std::vector<std::filesystem::path> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.emplace_back(item);
  }
  return out;
}

std::string join_paths(const std::vector<std::filesystem::path>& paths) {
  std::string out;
  for (std::size_t i = 0; i < paths.size(); ++i) out += (i ? "," : "") + paths[i].string();
  return out;
}

std::string_view dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::Mnist: return "mnist";
    case DatasetKind::Cifar10: return "cifar10";
    case DatasetKind::Blobs: return "blobs";
  }
  return "mnist";
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  KeyValues kv = parse_key_values(text);
  RunConfig cfg;
  auto take = [&kv](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  if (auto v = take("epochs")) cfg.epochs = parse_count("epochs", *v);
  if (auto v = take("lr")) cfg.lr = parse_real("lr", *v);
  if (auto v = take("momentum")) cfg.momentum = parse_real("momentum", *v);
  if (auto v = take("batch_size")) cfg.batch_size = parse_count("batch_size", *v);
  if (auto v = take("calibration_samples")) cfg.calibration_samples = parse_count("calibration_samples", *v);
  if (auto v = take("calibration_rms")) cfg.calibration_rms = parse_real("calibration_rms", *v);
  if (auto v = take("dataset")) {
    if (*v == "mnist") {
      cfg.dataset = DatasetKind::Mnist;
    } else if (*v == "cifar10") {
      cfg.dataset = DatasetKind::Cifar10;
    } else if (*v == "blobs") {
      cfg.dataset = DatasetKind::Blobs;
    } else {
      throw ConfigError("unknown dataset '" + *v + "'");
    }
  }
  if (auto v = take("data_dir")) cfg.data_dir = *v;
  if (auto v = take("cifar_train")) cfg.cifar_train = parse_paths(*v);
  if (auto v = take("cifar_test")) cfg.cifar_test = parse_paths(*v);
  if (auto v = take("train_size")) cfg.train_size = parse_count("train_size", *v);
  if (auto v = take("test_size")) cfg.test_size = parse_count("test_size", *v);
  if (auto v = take("blobs_n")) cfg.blobs_n = parse_count("blobs_n", *v);
  if (auto v = take("blobs_side")) cfg.blobs_side = parse_count("blobs_side", *v);
  if (auto v = take("blobs_classes")) cfg.blobs_classes = parse_count("blobs_classes", *v);
  if (auto v = take("seeds")) cfg.seeds = parse_seed_list("seeds", *v);

  // Model geometry follows the dataset unless given explicitly.
  switch (cfg.dataset) {
    case DatasetKind::Mnist:
      kv.try_emplace("in_channels", "1");
      kv.try_emplace("image_size", "28");
      kv.try_emplace("classes", "10");
      break;
    case DatasetKind::Cifar10:
      kv.try_emplace("in_channels", "3");
      kv.try_emplace("image_size", "32");
      kv.try_emplace("classes", "10");
      break;
    case DatasetKind::Blobs:
      kv.try_emplace("in_channels", "1");
      kv.try_emplace("image_size", std::to_string(cfg.blobs_side));
      kv.try_emplace("classes", std::to_string(cfg.blobs_classes));
      break;
  }
  cfg.model = ModelConfig::from_key_values(kv);
  if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << model.to_text() << "epochs=" << epochs << '\n'
      << "lr=" << format_real(lr) << '\n'
      << "momentum=" << format_real(momentum) << '\n'
      << "batch_size=" << batch_size << '\n'
      << "calibration_samples=" << calibration_samples << '\n'
      << "calibration_rms=" << format_real(calibration_rms) << '\n'
      << "dataset=" << dataset_name(dataset) << '\n'
      << "data_dir=" << data_dir.string() << '\n'
      << "cifar_train=" << join_paths(cifar_train) << '\n'
      << "cifar_test=" << join_paths(cifar_test) << '\n'
      << "train_size=" << train_size << '\n'
      << "test_size=" << test_size << '\n'
      << "blobs_n=" << blobs_n << '\n'
      << "blobs_side=" << blobs_side << '\n'
      << "blobs_classes=" << blobs_classes << '\n'
      << "seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i];
  out << '\n';
  return out.str();
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.epochs = epochs;
  o.lr = lr;
  o.momentum = momentum;
  o.batch_size = batch_size;
  o.seed = model.seed;
  o.calibration_samples = calibration_samples;
  o.calibration_rms = calibration_rms;
  return o;
}

Split load_split(RunConfig& cfg) {
  switch (cfg.dataset) {
    case DatasetKind::Mnist: {
      const auto& d = cfg.data_dir;
      Dataset train = load_mnist(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte");
      Dataset test = load_mnist(d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte");
      return {train.head(cfg.train_size), test.head(cfg.test_size)};
    }
    case DatasetKind::Cifar10: {
      if (cfg.cifar_train.empty() || cfg.cifar_test.empty()) {
        throw ConfigError("cifar10 needs cifar_train and cifar_test paths");
      }
      return {load_cifar10(cfg.cifar_train).head(cfg.train_size), load_cifar10(cfg.cifar_test).head(cfg.test_size)};
    }
    case DatasetKind::Blobs: {
      const int classes = static_cast<int>(cfg.blobs_classes);
      Dataset all = synth_blobs(cfg.blobs_n, classes, cfg.blobs_side, 7);
      Dataset test = synth_blobs(std::max<std::size_t>(cfg.blobs_n / 4, cfg.blobs_classes), classes, cfg.blobs_side, 8);
      return {all.head(cfg.train_size), test.head(cfg.test_size)};
    }
  }
  throw ConfigError("unknown dataset");
}

}  // namespace snncodec::cli
