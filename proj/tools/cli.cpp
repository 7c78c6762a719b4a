#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <CLI11.hpp>

#include "abfp/analysis.hpp"
#include "abfp/data.hpp"
#include "abfp/io.hpp"
#include "abfp/nn.hpp"

namespace abfp::cli {

namespace {

struct KeyInfo {
  const char* name;
  const char* help;
};

// Long flag names double as config-file keys.
const std::vector<KeyInfo>& key_table() {
  static const std::vector<KeyInfo> keys{
      {"tiles", "comma-separated tile widths n"},
      {"gains", "comma-separated gains G >= 1"},
      {"bits", "comma-separated bitwidth triples bW/bX/bY"},
      {"noise-lsb", "comma-separated ADC noise widths in output bins (0 = off)"},
      {"seed", "base random seed"},
      {"reps", "repetitions per grid cell"},
      {"out", "output file (CSV report or checkpoint)"},
      {"method", "finetune method: qat | dnf | float32"},
      {"epochs", "training epochs"},
      {"batch", "training mini-batch size"},
      {"lr", "SGD learning rate"},
      {"momentum", "SGD momentum"},
      {"weight-decay", "SGD weight decay"},
      {"select-layers", "DNF layer selection: all | top-<k>"},
      {"checkpoint", "input model checkpoint"},
      {"plan", "read the DNF plan from this JSON file instead of capturing it"},
      {"plan-out", "write the captured DNF plan to this JSON file"},
      {"log", "training log CSV (default <out>.log.csv)"},
      {"hidden", "comma-separated hidden widths of the MLP"},
      {"samples", "synthetic blob samples"},
      {"dim", "synthetic blob dimension"},
      {"separation", "distance between blob means"},
      {"data-seed", "seed of the synthetic dataset"},
      {"eval-batch", "evaluation batch size"},
      {"capture-batch", "rows used to capture noise histograms and profiles"},
      {"bins", "histogram bins"},
      {"out-features", "appendix weight rows"},
      {"in-features", "appendix contraction length"},
      {"tokens", "appendix input rows"},
      {"histograms", "appendix: also write one histogram JSON per cell"},
      {"threads", "worker threads (0 = hardware concurrency); never changes results"},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const std::string t = trim(text);
  const char* end = t.data() + t.size();
  const auto res = std::from_chars(t.data(), end, v);
  if (t.empty() || res.ec != std::errc() || res.ptr != end) {
    throw std::invalid_argument("invalid value '" + text + "' for " + key);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite value for " + key);
  }
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& part : split(text, ',')) out.push_back(parse_number<T>(key, part));
  if (out.empty()) throw std::invalid_argument(key + " needs at least one value");
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw std::invalid_argument("invalid boolean '" + text + "' for " + key);
}

void apply(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "tiles") {
    c.tiles = parse_list<int>(key, value);
    for (int t : c.tiles) {
      if (t < 1) throw std::invalid_argument("tiles must be >= 1");
    }
  } else if (key == "gains") {
    c.gains = parse_list<double>(key, value);
    for (double g : c.gains) {
      if (!(g >= 1.0)) throw std::invalid_argument("gains must be >= 1");
    }
  } else if (key == "bits") {
    c.bits.clear();
    for (const auto& part : split(value, ',')) c.bits.push_back(parse_bits(part));
    if (c.bits.empty()) throw std::invalid_argument("bits needs at least one triple");
  } else if (key == "noise-lsb") {
    c.noise_lsbs = parse_list<double>(key, value);
    for (double w : c.noise_lsbs) {
      if (!(w >= 0.0)) throw std::invalid_argument("noise-lsb must be >= 0");
    }
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "reps") {
    c.reps = parse_number<int>(key, value);
    if (c.reps < 1) throw std::invalid_argument("reps must be >= 1");
  } else if (key == "out") {
    c.out = trim(value);
  } else if (key == "method") {
    c.method = parse_method(trim(value));
  } else if (key == "epochs") {
    c.epochs = parse_number<int>(key, value);
    if (c.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  } else if (key == "batch") {
    c.batch = parse_number<std::size_t>(key, value);
    if (c.batch < 1) throw std::invalid_argument("batch must be >= 1");
  } else if (key == "lr") {
    c.lr = parse_number<float>(key, value);
    if (!(c.lr > 0.0f)) throw std::invalid_argument("lr must be > 0");
  } else if (key == "momentum") {
    c.momentum = parse_number<float>(key, value);
  } else if (key == "weight-decay") {
    c.weight_decay = parse_number<float>(key, value);
  } else if (key == "select-layers") {
    c.select_layers = LayerSelection::parse(trim(value));
  } else if (key == "checkpoint") {
    c.checkpoint = trim(value);
  } else if (key == "plan") {
    c.plan = trim(value);
  } else if (key == "plan-out") {
    c.plan_out = trim(value);
  } else if (key == "log") {
    c.log = trim(value);
  } else if (key == "hidden") {
    c.hidden = parse_list<std::size_t>(key, value);
  } else if (key == "samples") {
    c.samples = parse_number<std::size_t>(key, value);
  } else if (key == "dim") {
    c.dim = parse_number<std::size_t>(key, value);
  } else if (key == "separation") {
    c.separation = parse_number<double>(key, value);
  } else if (key == "data-seed") {
    c.data_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "eval-batch") {
    c.eval_batch = parse_number<std::size_t>(key, value);
  } else if (key == "capture-batch") {
    c.capture_batch = parse_number<std::size_t>(key, value);
    if (c.capture_batch < 1) throw std::invalid_argument("capture-batch must be >= 1");
  } else if (key == "bins") {
    c.bins = parse_number<int>(key, value);
    if (c.bins < 1) throw std::invalid_argument("bins must be >= 1");
  } else if (key == "out-features") {
    c.out_features = parse_number<std::size_t>(key, value);
  } else if (key == "in-features") {
    c.in_features = parse_number<std::size_t>(key, value);
  } else if (key == "tokens") {
    c.tokens = parse_number<std::size_t>(key, value);
  } else if (key == "histograms") {
    c.histograms = parse_bool(key, value);
  } else if (key == "threads") {
    c.threads = parse_number<unsigned>(key, value);
    if (c.threads == 0) c.threads = std::max(1u, std::thread::hardware_concurrency());
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

RunConfig defaults_for(const std::string& sub) {
  RunConfig c;
  if (sub == "appendix-error") {
    c.noise_lsbs = {0.0, 1.0};
    c.reps = 10;
  } else if (sub == "finetune") {
    c.tiles = {4};
    c.gains = {8};
    c.bits = {QuantSpec::make(6, 6, 8)};
    c.noise_lsbs = {1.0};
  }
  return c;
}

DeviceConfig single_device(const RunConfig& c) {
  if (c.tiles.size() != 1 || c.gains.size() != 1 || c.bits.size() != 1 || c.noise_lsbs.size() != 1) {
    throw std::invalid_argument("this command takes exactly one tile, gain, bits and noise-lsb value");
  }
  return DeviceConfig::make(c.tiles[0], c.gains[0], c.bits[0], NoiseModel{c.noise_lsbs[0]}, c.seed);
}

void require_out(const RunConfig& c) {
  if (c.out.empty()) throw std::invalid_argument("--out is required");
}

std::filesystem::path log_path(const RunConfig& c) {
  if (!c.log.empty()) return c.log;
  return std::filesystem::path(c.out.string() + ".log.csv");
}

Dataset make_dataset(const RunConfig& c) {
  return make_blobs(BlobSpec{c.samples, c.dim, c.separation, c.data_seed});
}

Model load_model(const RunConfig& c, const Dataset& data) {
  if (c.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
  Model m = load_checkpoint(c.checkpoint);
  if (m.input_features() != data.features.cols()) {
    throw std::invalid_argument("checkpoint expects " + std::to_string(m.input_features()) +
                                " input features but the dataset has " +
                                std::to_string(data.features.cols()));
  }
  return m;
}

Matrix leading_rows(const Dataset& data, std::size_t n) {
  std::vector<std::size_t> idx(std::min(n, data.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return data.subset(idx).features;
}

std::string cell_prefix(int tile, double gain, const QuantSpec& q, double noise) {
  return std::to_string(tile) + "," + format_number(gain) + "," + std::to_string(q.bits_w) + "," +
         std::to_string(q.bits_x) + "," + std::to_string(q.bits_y) + "," + format_number(noise);
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.epochs;
  t.batch = c.batch;
  t.sgd = SgdParams{c.lr, c.momentum, c.weight_decay};
  t.seed = c.seed;
  return t;
}

}  // namespace

QuantSpec parse_bits(const std::string& text) {
  const auto parts = split(trim(text), '/');
  if (parts.size() != 3) throw std::invalid_argument("bits must look like bW/bX/bY, got '" + text + "'");
  int b[3];
  for (int k = 0; k < 3; ++k) {
    b[k] = parse_number<int>("bits", parts[k]);
    if (b[k] < 2 || b[k] > 24) throw std::invalid_argument("bitwidths must be in [2, 24], got '" + text + "'");
  }
  return QuantSpec::make(b[0], b[1], b[2]);
}

std::string format_bits(const QuantSpec& q) {
  return std::to_string(q.bits_w) + "/" + std::to_string(q.bits_x) + "/" + std::to_string(q.bits_y);
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& k : key_table()) v.emplace_back(k.name);
    return v;
  }();
  return names;
}

RunConfig resolve_config(const std::string& subcommand,
                         const std::map<std::string, std::string>& file_values,
                         const std::map<std::string, std::string>& flag_values) {
  RunConfig c = defaults_for(subcommand);
  for (const auto& [k, v] : file_values) apply(c, k, v);
  for (const auto& [k, v] : flag_values) apply(c, k, v);
  return c;
}

void cmd_train_float32(const RunConfig& c, std::ostream& log) {
  require_out(c);
  const Dataset data = make_dataset(c);
  Model model = make_mlp(c.dim, c.hidden, 2, c.seed);
  std::ostringstream csv;
  csv << "epoch,loss,accuracy\n";
  const TrainResult res = train_float32(std::move(model), data, train_config(c),
                                        [&](const Model& m, EpochRecord& rec) {
                                          const double acc = evaluate_accuracy(
                                              m, data, ExecutionMode::float32(), c.eval_batch);
                                          csv << rec.epoch << "," << format_number(rec.loss) << ","
                                              << format_number(acc) << "\n";
                                          rec.abfp_accuracy = acc;
                                        });
  save_checkpoint(res.model, c.out);
  write_text_file(log_path(c), csv.str());
  log << "float32 accuracy " << format_number(res.log.back().abfp_accuracy) << "\n";
}

void cmd_sweep(const RunConfig& c, std::ostream& log) {
  require_out(c);
  const Dataset data = make_dataset(c);
  const Model model = load_model(c, data);
  std::ostringstream csv;
  csv << "tile,gain,b_w,b_x,b_y,noise_lsb,rep,accuracy\n";
  std::uint64_t row = 0;
  for (int tile : c.tiles) {
    for (double gain : c.gains) {
      for (const QuantSpec& q : c.bits) {
        for (double noise : c.noise_lsbs) {
          for (int rep = 0; rep < c.reps; ++rep, ++row) {
            ExecutionMode mode = ExecutionMode::abfp(
                DeviceConfig::make(tile, gain, q, NoiseModel{noise}, combine_seed(c.seed, row)));
            mode.threads = c.threads;
            const double acc = evaluate_accuracy(model, data, mode, c.eval_batch);
            csv << cell_prefix(tile, gain, q, noise) << "," << rep << "," << format_number(acc) << "\n";
          }
        }
      }
    }
  }
  write_text_file(c.out, csv.str());
  log << "wrote " << row << " rows to " << c.out.string() << "\n";
}

void cmd_appendix_error(const RunConfig& c, std::ostream& log) {
  require_out(c);
  if (c.bits.size() != 1) throw std::invalid_argument("appendix-error takes exactly one bits triple");
  AppendixConfig a;
  a.tiles = c.tiles;
  a.gains = c.gains;
  a.noise_lsbs = c.noise_lsbs;
  a.reps = c.reps;
  a.seed = c.seed;
  a.quant = c.bits[0];
  a.out_features = c.out_features;
  a.in_features = c.in_features;
  a.tokens = c.tokens;
  a.histograms = c.histograms;
  a.histogram_bins = c.bins;
  a.threads = c.threads;
  const AppendixReport report = appendix_experiment(a);

  std::ostringstream csv;
  csv << "tile,gain,b_w,b_x,b_y,noise_lsb,rep,mean,std,min,max\n";
  for (const auto& cell : report.cells) {
    const NoiseStats& s = cell.stats;
    csv << cell_prefix(cell.tile, cell.gain, cell.quant, cell.noise_lsb) << "," << cell.rep << ","
        << format_number(s.mean) << "," << format_number(s.std) << "," << format_number(s.min) << ","
        << format_number(s.max) << "\n";
  }
  if (c.histograms) {
    const std::filesystem::path dir = c.out.string() + ".hist";
    std::filesystem::create_directories(dir);
    for (const auto& cell : report.cells) {
      const std::string name = "tile" + std::to_string(cell.tile) + "_gain" + format_number(cell.gain) +
                               "_noise" + format_number(cell.noise_lsb) + "_rep" +
                               std::to_string(cell.rep) + ".json";
      write_text_file(dir / name, histogram_to_json(*cell.histogram));
    }
  }
  write_text_file(c.out, csv.str());
  log << "wrote " << report.cells.size() << " cells to " << c.out.string() << "\n";
}

void cmd_profile(const RunConfig& c, std::ostream& log) {
  require_out(c);
  const Dataset data = make_dataset(c);
  const Model model = load_model(c, data);
  const Matrix batch = leading_rows(data, c.capture_batch);
  std::ostringstream csv;
  csv << "tile,gain,b_w,b_x,b_y,noise_lsb,layer,name,mean,std,min,max\n";
  for (double gain : c.gains) {
    for (int tile : c.tiles) {
      for (const QuantSpec& q : c.bits) {
        for (double noise : c.noise_lsbs) {
          const DeviceConfig dev = DeviceConfig::make(tile, gain, q, NoiseModel{noise}, c.seed);
          const NoiseProfile p = layer_noise_profile(model, batch, dev, c.threads);
          const auto idx = model.matmul_layers();
          for (std::size_t k = 0; k < p.layers.size(); ++k) {
            const NoiseStats& s = p.layers[k];
            csv << cell_prefix(tile, gain, q, noise) << "," << idx[k] << "," << s.label << ","
                << format_number(s.mean) << "," << format_number(s.std) << "," << format_number(s.min)
                << "," << format_number(s.max) << "\n";
          }
        }
      }
    }
  }
  write_text_file(c.out, csv.str());
  log << "wrote profile to " << c.out.string() << "\n";
}

void cmd_finetune(const RunConfig& c, std::ostream& log) {
  require_out(c);
  const DeviceConfig device = single_device(c);
  const Dataset data = make_dataset(c);
  Model model = load_model(c, data);
  ExecutionMode eval_mode = ExecutionMode::abfp(device);
  eval_mode.threads = c.threads;
  const double before = evaluate_accuracy(model, data, eval_mode, c.eval_batch);

  std::ostringstream csv;
  csv << "epoch,loss,abfp_accuracy\n";
  const EpochCallback on_epoch = [&](const Model& m, EpochRecord& rec) {
    rec.abfp_accuracy = evaluate_accuracy(m, data, eval_mode, c.eval_batch);
    csv << rec.epoch << "," << format_number(rec.loss) << "," << format_number(rec.abfp_accuracy)
        << "\n";
  };
  const TrainConfig tc = train_config(c);
  TrainResult res;
  switch (c.method) {
    case FinetuneMethod::Float32:
      res = train_float32(std::move(model), data, tc, on_epoch);
      break;
    case FinetuneMethod::Qat:
      res = train_qat(std::move(model), data, device, tc, on_epoch);
      break;
    case FinetuneMethod::Dnf: {
      DnfPlan plan = c.plan.empty()
                         ? capture_dnf_plan(model, leading_rows(data, c.capture_batch), device, c.bins,
                                            c.select_layers, c.threads)
                         : plan_from_json(read_text_file(c.plan));
      if (!c.plan_out.empty()) write_text_file(c.plan_out, plan_to_json(plan));
      res = train_dnf(std::move(model), data, plan, tc, on_epoch);
      break;
    }
  }
  save_checkpoint(res.model, c.out);
  write_text_file(log_path(c), csv.str());
  log << to_string(c.method) << ": abfp accuracy " << format_number(before) << " -> "
      << format_number(res.log.back().abfp_accuracy) << "\n";
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ABFP simulator: tiled analog GEMM with gain and ADC noise, QAT and DNF finetuning"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config_file;
    bool histograms = false;
    CLI::Option* histograms_flag = nullptr;
  };
  const std::vector<std::pair<std::string, std::string>> names{
      {"sweep", "ABFP-mode accuracy of a checkpoint over a tile x gain x bits grid"},
      {"appendix-error", "random-operand differential error experiment"},
      {"profile", "per-layer differential noise statistics of a checkpoint"},
      {"finetune", "QAT or DNF finetuning of a checkpoint"},
      {"train-float32", "train the toy MLP in float32 on Gaussian blobs"},
  };
  std::vector<std::unique_ptr<Sub>> subs;
  for (const auto& [name, help] : names) {
    auto s = std::make_unique<Sub>();
    s->app = app.add_subcommand(name, help);
    s->app->add_option("--config", s->config_file, "flat key = value file; flags override it");
    for (const auto& k : key_table()) {
      const std::string key = k.name;
      if (key == "histograms") {
        s->histograms_flag = s->app->add_flag("--histograms", s->histograms, k.help);
      } else {
        s->options[key] = s->app->add_option("--" + key, s->values[key], k.help);
      }
    }
    subs.push_back(std::move(s));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    for (const auto& s : subs) {
      if (!s->app->parsed()) continue;
      const std::string name = s->app->get_name();
      std::map<std::string, std::string> flags;
      for (const auto& [key, opt] : s->options) {
        if (opt->count() > 0) flags[key] = s->values[key];
      }
      if (s->histograms_flag->count() > 0) flags["histograms"] = "true";
      std::map<std::string, std::string> file;
      if (!s->config_file.empty()) file = parse_config_text(read_text_file(s->config_file));
      const RunConfig cfg = resolve_config(name, file, flags);
      if (name == "sweep") {
        cmd_sweep(cfg, out);
      } else if (name == "appendix-error") {
        cmd_appendix_error(cfg, out);
      } else if (name == "profile") {
        cmd_profile(cfg, out);
      } else if (name == "finetune") {
        cmd_finetune(cfg, out);
      } else {
        cmd_train_float32(cfg, out);
      }
    }
  } catch (const std::exception& e) {
    err << "abfp: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"abfp"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace abfp::cli
