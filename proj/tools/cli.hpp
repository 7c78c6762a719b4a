#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abfp/finetune.hpp"
#include "abfp/numerics.hpp"

namespace abfp::cli {

/// Every setting a subcommand may read. Keys in config files and long flag
/// names are the same (e.g. `noise-lsb`).
struct RunConfig {
  std::vector<int> tiles{8, 32, 128};
  std::vector<double> gains{1, 2, 4, 8, 16};
  std::vector<QuantSpec> bits{QuantSpec::make(8, 8, 8)};
  std::vector<double> noise_lsbs{0.0};
  std::uint64_t seed = 0;
  int reps = 1;
  std::filesystem::path out;

  // Model and data.
  std::filesystem::path checkpoint;
  std::vector<std::size_t> hidden{32};
  std::size_t samples = 512;
  std::size_t dim = 16;
  double separation = 4.0;
  std::uint64_t data_seed = 1;
  std::size_t eval_batch = 256;

  // Training.
  FinetuneMethod method = FinetuneMethod::Dnf;
  int epochs = 20;
  std::size_t batch = 32;
  float lr = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 0.0f;
  LayerSelection select_layers;
  std::filesystem::path plan;
  std::filesystem::path plan_out;
  std::filesystem::path log;
  std::size_t capture_batch = 128;
  int bins = 100;

  // Appendix experiment.
  std::size_t out_features = 768;
  std::size_t in_features = 768;
  std::size_t tokens = 400;
  bool histograms = false;

  unsigned threads = 1;
};

/// "bW/bX/bY" with each width in [2, 24].
QuantSpec parse_bits(const std::string& text);
std::string format_bits(const QuantSpec& q);

/// Flat `key = value` lines; '#' starts a comment; blank lines ignored.
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// Defaults for one subcommand, then file values, then flag values.
RunConfig resolve_config(const std::string& subcommand,
                         const std::map<std::string, std::string>& file_values,
                         const std::map<std::string, std::string>& flag_values);

/// Names of all recognised keys.
const std::vector<std::string>& known_keys();

void cmd_train_float32(const RunConfig& cfg, std::ostream& log);
void cmd_sweep(const RunConfig& cfg, std::ostream& log);
void cmd_appendix_error(const RunConfig& cfg, std::ostream& log);
void cmd_profile(const RunConfig& cfg, std::ostream& log);
void cmd_finetune(const RunConfig& cfg, std::ostream& log);

/// Full command-line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace abfp::cli
