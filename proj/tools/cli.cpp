#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include "run_config.hpp"
#include "snncodec/encoder.hpp"
#include "snncodec/error.hpp"
#include "snncodec/network.hpp"
#include "snncodec/oracle.hpp"

namespace snncodec::cli {

namespace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::ordered_json;

/// Raised for failed verifications; maps to exit code 1.
struct VerificationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

json config_json(const RunConfig& cfg) {
  json obj = json::object();
  for (const auto& [key, value] : parse_key_values(cfg.to_text())) obj[key] = value;
  return obj;
}

std::vector<double> parse_real_list(std::string_view key, const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_real(key, item));
  if (out.empty()) throw ConfigError(std::string(key) + ": empty list");
  return out;
}

// ---------------------------------------------------------------- oracle

struct OracleArgs {
  std::size_t steps = 4;
  double decay = 0.5;
  double v_th = 1.0;
  std::string format = "csv";
  std::size_t verify = 0;
  std::uint64_t seed = 0;
};

int cmd_oracle(const OracleArgs& a, std::ostream& out, std::ostream& log) {
  const auto start = Clock::now();
  const auto boundaries = oracle::enumerate_boundaries(a.steps, a.decay, a.v_th);
  out << (a.format == "table" ? oracle::boundaries_table(boundaries) : oracle::boundaries_csv(boundaries));
  if (a.verify == 0) return kExitOk;
  const auto report = oracle::verify_boundaries(a.steps, a.decay, a.v_th, a.verify, a.seed);
  log << "verify: " << report.agreements << " agreements, " << report.disagreements.size()
      << " disagreements in " << seconds_since(start) << " s\n";
  for (const auto& d : report.disagreements) {
    log << "  x=" << std::setprecision(17) << d.x << " simulated " << d.simulated.str() << " predicted "
        << d.predicted.str() << '\n';
  }
  if (!report.ok()) throw VerificationFailed("oracle and simulation disagree");
  return kExitOk;
}

// ---------------------------------------------------------------- encode

struct EncodeArgs {
  std::string mode = "ttfs";
  std::string input;
  std::optional<double> value;
  std::size_t steps = 4;
  std::string thresholds;
  double theta0 = 1.0;
  bool bernoulli = false;
  std::uint64_t seed = 0;
  std::string out_path;
};

/// Reads a [C, H, W] image: one row per line, values separated by commas or
/// whitespace, channels separated by blank lines.
Tensor read_image_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read input " + path);
  std::vector<std::vector<std::vector<double>>> channels(1);
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::vector<double> row;
    std::string token;
    while (fields >> token) row.push_back(parse_real("input", token));
    if (row.empty()) {
      if (!channels.back().empty()) channels.emplace_back();
      continue;
    }
    channels.back().push_back(std::move(row));
  }
  if (channels.back().empty()) channels.pop_back();
  if (channels.empty()) throw ConfigError("input " + path + " holds no values");
  const std::size_t h = channels[0].size();
  const std::size_t w = channels[0][0].size();
  std::vector<double> values;
  for (const auto& ch : channels) {
    if (ch.size() != h) throw ConfigError("input channels differ in height");
    for (const auto& row : ch) {
      if (row.size() != w) throw ConfigError("input rows differ in width");
      values.insert(values.end(), row.begin(), row.end());
    }
  }
  return Tensor({channels.size(), h, w}, std::move(values));
}

void write_spike_csv(const Tensor& train, bool real_valued, std::ostream& out) {
  const std::size_t steps = train.dim(0), c = train.dim(1), h = train.dim(2), w = train.dim(3);
  const auto& v = train.values();
  out << "t,channel,row,col,spike\n";
  std::size_t total = 0;
  std::size_t i = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t col = 0; col < w; ++col, ++i) {
          if (v[i] == 0.0) continue;
          out << t << ',' << ch << ',' << r << ',' << col << ',' << format_real(v[i]) << '\n';
          ++total;
        }
      }
    }
  }
  if (real_valued) out << "# real-valued\n";
  out << "# total=" << total << '\n';
}

int cmd_encode(const EncodeArgs& a, std::ostream& out) {
  const auto mode = parse_encoder_mode(a.mode);
  if (!mode) throw ConfigError("unknown encoder mode '" + a.mode + "'");
  if (a.input.empty() == !a.value.has_value()) throw ConfigError("give exactly one of --input or --value");
  const Tensor image = a.value ? Tensor({1, 1, 1}, {*a.value}) : read_image_text(a.input);
  const std::size_t channels = image.dim(0);

  Tensor train;
  if (a.bernoulli) {
    if (*mode != EncoderMode::Rate) throw ConfigError("--bernoulli applies to rate mode only");
    train = encode_bernoulli_rate(image, a.steps, a.seed);
  } else {
    EncoderParams params;
    if (!a.thresholds.empty()) {
      const auto ladder = parse_real_list("thresholds", a.thresholds);
      if (ladder.size() != a.steps) throw ConfigError("--thresholds needs exactly T values");
      params = EncoderParams::from_thresholds(ladder, channels);
    } else {
      params = EncoderParams::make(a.steps, channels, false, a.theta0);
    }
    NoGradGuard no_grad;
    train = encode(image, params, *mode, SpikeBackward::exact_zero());
  }
  train = reshape(train, {a.steps, image.dim(0), image.dim(1), image.dim(2)});

  const bool real_valued = *mode == EncoderMode::Direct;
  if (a.out_path.empty()) {
    write_spike_csv(train, real_valued, out);
  } else {
    std::ofstream file(a.out_path);
    if (!file) throw ConfigError("cannot write " + a.out_path);
    write_spike_csv(train, real_valued, file);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- train / eval

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string checkpoint = "snncodec.ckpt";
  std::string metrics;
};

/// Config text from file plus --set key=value lines (later wins).
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  if (!overrides.empty()) {
    KeyValues kv = parse_key_values(text);
    for (const auto& o : overrides) {
      const KeyValues one = parse_key_values(o);
      for (const auto& [k, v] : one) kv[k] = v;
    }
    text.clear();
    for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
  }
  return RunConfig::parse(text);
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& log) {
  RunConfig cfg = load_run_config(a.config, a.overrides);
  Split split = load_split(cfg);
  cfg.model.validate();

  std::ofstream metrics_file;
  if (!a.metrics.empty()) {
    metrics_file.open(a.metrics);
    if (!metrics_file) throw ConfigError("cannot write " + a.metrics);
  }
  std::ostream& sink = a.metrics.empty() ? out : metrics_file;
  sink << json{{"type", "config"}, {"config", config_json(cfg)}}.dump() << '\n';

  const auto start = Clock::now();
  Model model = build_model(cfg.model);
  TrainOptions options = cfg.train_options();
  options.on_epoch = [&](const EpochMetrics& m) {
    sink << json{{"type", "epoch"}, {"epoch", m.epoch}, {"train_loss", m.train_loss},
                 {"eval_accuracy", m.eval_accuracy}}
                .dump()
         << '\n';
    sink.flush();
    log << "epoch " << m.epoch << " loss " << m.train_loss << " acc " << m.eval_accuracy << " ("
        << seconds_since(start) << " s)\n";
  };
  const auto history = train(model, split.train, split.test, options);
  save_checkpoint(model, a.checkpoint);
  const double final_acc = history.empty() ? evaluate(model, split.test) : history.back().eval_accuracy;
  sink << json{{"type", "final"}, {"epochs", model.epoch()}, {"eval_accuracy", final_acc},
               {"eval_samples", split.test.size()}, {"checkpoint", a.checkpoint}}
              .dump()
       << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::vector<std::string> overrides;
  std::string dataset;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<std::string> overrides = a.overrides;
  if (!a.dataset.empty()) overrides.push_back("dataset=" + a.dataset);
  RunConfig cfg = load_run_config(a.config, overrides);
  Model model = load_checkpoint(a.checkpoint);
  const Split split = load_split(cfg);
  const double acc = evaluate(model, split.test);
  out << json{{"type", "eval"}, {"eval_accuracy", acc}, {"eval_samples", split.test.size()},
              {"epoch", model.epoch()}}
             .dump()
      << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string grid = "lt,lc,sg";
  std::string seeds;
  std::vector<std::size_t> front_channels;
};

struct Cell {
  std::string block;
  std::size_t front_channels;
  std::string label;
  AblationFlags flags;
  std::vector<double> accuracy;  // per seed
};

std::vector<std::uint64_t> resolve_seeds(const std::string& text, const std::vector<std::uint64_t>& configured) {
  if (text.empty()) return configured;
  if (text.find(',') != std::string::npos) return parse_seed_list("seeds", text);
  const std::size_t n = parse_count("seeds", text);
  if (n < 1 || n > configured.size()) {
    throw ConfigError("--seeds " + text + ": between 1 and " + std::to_string(configured.size()) +
                      " configured seeds, or a comma-separated list");
  }
  return {configured.begin(), configured.begin() + static_cast<std::ptrdiff_t>(n)};
}

/// Cumulative ladder: all flags off, then each grid flag switched on in order.
std::vector<std::pair<std::string, AblationFlags>> ladder(const std::string& grid) {
  std::vector<std::pair<std::string, AblationFlags>> rows;
  AblationFlags flags{false, false, false};
  std::string label;
  rows.emplace_back("base", flags);
  std::stringstream in(grid);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "lt") {
      flags.lt = true;
    } else if (item == "lc") {
      flags.lc = true;
    } else if (item == "sg") {
      flags.sg = true;
    } else {
      throw ConfigError("unknown grid flag '" + item + "'");
    }
    for (char& ch : item) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    label += (label.empty() ? "" : "+") + item;
    rows.emplace_back(label, flags);
  }
  return rows;
}

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& log) {
  RunConfig cfg = load_run_config(a.config, a.overrides);
  const Split split = load_split(cfg);
  const auto seeds = resolve_seeds(a.seeds, cfg.seeds);

  std::vector<Cell> cells;
  for (const auto& [label, flags] : ladder(a.grid)) {
    cells.push_back({"main", cfg.model.front_channels, label, flags, {}});
  }
  for (std::size_t fc : a.front_channels) {
    if (fc == cfg.model.front_channels) continue;
    for (const auto& [label, flags] : ladder(a.grid)) {
      if (!flags.lc) continue;  // the front end is absent, so its width is moot
      cells.push_back({"front" + std::to_string(fc), fc, label, flags, {}});
    }
  }
  for (auto& c : cells) c.accuracy.assign(seeds.size(), 0.0);
  for (const auto& c : cells) {
    ModelConfig mc = cfg.model;
    mc.flags = c.flags;
    mc.front_channels = c.front_channels;
    mc.validate();
  }

  const std::size_t jobs = cells.size() * seeds.size();
  const std::size_t workers = std::clamp<std::size_t>(worker_limit(), 1, jobs);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr failure;
  const auto start = Clock::now();

  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      Cell& cell = cells[job / seeds.size()];
      const std::size_t s = job % seeds.size();
      try {
        ModelConfig mc = cfg.model;
        mc.flags = cell.flags;
        mc.front_channels = cell.front_channels;
        mc.seed = seeds[s];
        Model model = build_model(mc);
        TrainOptions options = cfg.train_options();
        options.seed = seeds[s];
        const auto history = train(model, split.train, split.test, options);
        cell.accuracy[s] = history.empty() ? evaluate(model, split.test) : history.back().eval_accuracy;
        std::lock_guard lock(log_mutex);
        log << cell.block << ' ' << cell.label << " seed " << seeds[s] << ": " << cell.accuracy[s] << " ("
            << seconds_since(start) << " s)\n";
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  out << "block,front_channels,row,lt,lc,sg,mean_accuracy";
  for (auto s : seeds) out << ",acc_seed_" << s;
  out << '\n';
  for (const auto& c : cells) {
    const double mean = std::accumulate(c.accuracy.begin(), c.accuracy.end(), 0.0) / c.accuracy.size();
    out << c.block << ',' << c.front_channels << ',' << c.label << ',' << c.flags.lt << ',' << c.flags.lc << ','
        << c.flags.sg << ',' << format_real(mean);
    for (double acc : c.accuracy) out << ',' << format_real(acc);
    out << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- shuffle-eval

struct ShuffleArgs {
  std::string checkpoint;
  std::string config;
  std::vector<std::string> overrides;
  std::size_t seeds = 10;
  std::uint64_t first_seed = 0;
};

int cmd_shuffle_eval(const ShuffleArgs& a, std::ostream& out) {
  RunConfig cfg = load_run_config(a.config, a.overrides);
  const Split split = load_split(cfg);
  const Model model = a.checkpoint.empty() ? build_model(cfg.model) : load_checkpoint(a.checkpoint);
  const ForwardOptions base = model.default_options();
  const double before = evaluate(model, split.test, base);

  out << "seed,permutation,before,after\n";
  double total_after = 0.0;
  for (std::size_t i = 0; i < a.seeds; ++i) {
    const std::uint64_t seed = a.first_seed + i;
    ForwardOptions shuffled = base;
    shuffled.time_permutation = time_permutation(model.config().steps, seed);
    const double after = evaluate(model, split.test, shuffled);
    total_after += after;
    std::string perm;
    for (auto p : *shuffled.time_permutation) perm += std::to_string(p);
    out << seed << ',' << perm << ',' << format_real(before) << ',' << format_real(after) << '\n';
  }
  if (a.seeds > 0) {
    const double mean_after = total_after / static_cast<double>(a.seeds);
    out << "# mean_before=" << format_real(before) << " mean_after=" << format_real(mean_after)
        << " drop=" << format_real(before - mean_after) << '\n';
  }
  return kExitOk;
}

}  // namespace

unsigned worker_limit() {
  if (const char* env = std::getenv("SNNCODEC_THREADS"); env && *env) {
    const std::size_t n = parse_count("SNNCODEC_THREADS", env);
    return n < 1 ? 1u : static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log) {
  CLI::App app{"Spiking-network encoding laboratory", "snncodec"};
  app.require_subcommand(1);

  OracleArgs oa;
  auto* oracle_cmd = app.add_subcommand("oracle", "Firing-pattern boundaries for constant input");
  oracle_cmd->add_option("--t", oa.steps, "Time steps")->capture_default_str();
  oracle_cmd->add_option("--decay", oa.decay, "Membrane decay L")->capture_default_str();
  oracle_cmd->add_option("--vth", oa.v_th, "Firing threshold")->capture_default_str();
  oracle_cmd->add_option("--format", oa.format, "Output format")
      ->check(CLI::IsMember({"csv", "table"}))
      ->capture_default_str();
  oracle_cmd->add_option("--verify", oa.verify, "Cross-check against simulation on N random inputs");
  oracle_cmd->add_option("--seed", oa.seed, "Sampling seed")->capture_default_str();

  EncodeArgs ea;
  auto* encode_cmd = app.add_subcommand("encode", "Dump an encoded spike train as CSV");
  encode_cmd->add_option("--mode", ea.mode, "direct, rate, phase or ttfs")->capture_default_str();
  encode_cmd->add_option("--input", ea.input, "Text image: rows per line, blank line between channels");
  encode_cmd->add_option("--value", ea.value, "Encode a single scalar");
  encode_cmd->add_option("--t", ea.steps, "Time steps")->capture_default_str();
  encode_cmd->add_option("--thresholds", ea.thresholds, "Comma-separated threshold ladder");
  encode_cmd->add_option("--theta0", ea.theta0, "Initial threshold (halves each step)")->capture_default_str();
  encode_cmd->add_flag("--bernoulli", ea.bernoulli, "Stochastic rate coding");
  encode_cmd->add_option("--seed", ea.seed, "Bernoulli seed")->capture_default_str();
  encode_cmd->add_option("--out", ea.out_path, "Output file (default stdout)");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train one model; JSONL metrics and a checkpoint");
  train_cmd->add_option("--config", ta.config, "key=value run config");
  train_cmd->add_option("--set", ta.overrides, "Override one config key (key=value)");
  train_cmd->add_option("--checkpoint", ta.checkpoint, "Checkpoint output path")->capture_default_str();
  train_cmd->add_option("--metrics", ta.metrics, "JSONL output file (default stdout)");

  EvalArgs va;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the configured test split");
  eval_cmd->add_option("--checkpoint", va.checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--config", va.config, "key=value run config (dataset keys)");
  eval_cmd->add_option("--set", va.overrides, "Override one config key (key=value)");
  eval_cmd->add_option("--dataset", va.dataset, "mnist, cifar10 or blobs");

  AblateArgs aa;
  auto* ablate_cmd = app.add_subcommand("ablate", "Ablation ladder; CSV of mean accuracies");
  ablate_cmd->add_option("--config", aa.config, "key=value run config");
  ablate_cmd->add_option("--set", aa.overrides, "Override one config key (key=value)");
  ablate_cmd->add_option("--grid", aa.grid, "Flags switched on cumulatively")->capture_default_str();
  ablate_cmd->add_option("--seeds", aa.seeds, "Seed count or comma-separated seeds");
  ablate_cmd->add_option("--front-channels", aa.front_channels, "Extra block per front-end width");

  ShuffleArgs sa;
  auto* shuffle_cmd = app.add_subcommand("shuffle-eval", "Accuracy before and after temporal shuffling");
  shuffle_cmd->add_option("--checkpoint", sa.checkpoint, "Checkpoint path (default: untrained model)");
  shuffle_cmd->add_option("--config", sa.config, "key=value run config");
  shuffle_cmd->add_option("--set", sa.overrides, "Override one config key (key=value)");
  shuffle_cmd->add_option("--seeds", sa.seeds, "Number of shuffle seeds")->capture_default_str();
  shuffle_cmd->add_option("--first-seed", sa.first_seed, "First shuffle seed")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, log);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (oracle_cmd->parsed()) return cmd_oracle(oa, out, log);
    if (encode_cmd->parsed()) return cmd_encode(ea, out);
    if (train_cmd->parsed()) return cmd_train(ta, out, log);
    if (eval_cmd->parsed()) return cmd_eval(va, out);
    if (ablate_cmd->parsed()) return cmd_ablate(aa, out, log);
    if (shuffle_cmd->parsed()) return cmd_shuffle_eval(sa, out);
  } catch (const VerificationFailed& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const NumericError& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const TrainingError& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace snncodec::cli
