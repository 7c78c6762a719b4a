#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abfp/abfp.hpp"
#include "abfp/matrix.hpp"
#include "abfp/nn.hpp"

namespace abfp {

/// Elementwise ABFP output minus float32 output for one product.
struct DifferentialSample {
  Matrix delta;
  DeviceConfig config;
  std::string label;
};

struct NoiseStats {
  std::string label;
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // population (denominator N)
  double min = 0.0;
  double max = 0.0;
};

/// Per-layer differential-noise statistics of one model at one device setting.
struct NoiseProfile {
  DeviceConfig config;
  std::vector<NoiseStats> layers;
};

/// Equal-width histogram with +0.5 smoothing per bin.
class Histogram {
 public:
  static constexpr double kSmoothing = 0.5;

  Histogram() = default;

  /// Validates and derives smoothed counts and probabilities. Edges must be
  /// strictly increasing, or all equal (a point mass).
  Histogram(std::vector<double> edges, std::vector<std::uint64_t> raw_counts, bool smoothing = true);

  [[nodiscard]] std::size_t bins() const { return raw_counts_.size(); }
  [[nodiscard]] const std::vector<double>& edges() const { return edges_; }
  [[nodiscard]] const std::vector<std::uint64_t>& raw_counts() const { return raw_counts_; }
  [[nodiscard]] const std::vector<double>& smoothed() const { return smoothed_; }
  [[nodiscard]] const std::vector<double>& probabilities() const { return probabilities_; }
  [[nodiscard]] bool smoothing() const { return smoothing_; }
  [[nodiscard]] std::uint64_t total() const;
  [[nodiscard]] bool is_point_mass() const { return edges_.front() == edges_.back(); }

  /// A single-bin histogram whose whole mass sits at `value`.
  static Histogram point_mass(double value);

  friend bool operator==(const Histogram&, const Histogram&) = default;

 private:
  std::vector<double> edges_;
  std::vector<std::uint64_t> raw_counts_;
  std::vector<double> smoothed_;
  std::vector<double> probabilities_;
  bool smoothing_ = true;
};

DifferentialSample differential_error(const Matrix& w, const Matrix& x, const DeviceConfig& cfg,
                                      const MatmulOptions& options = {}, std::string label = {});

/// Throws std::invalid_argument on empty data.
NoiseStats summary_stats(std::span<const float> delta, std::string label = {});
NoiseStats summary_stats(const DifferentialSample& d);

/// `bins` equal-width bins over [min, max] (last bin right-closed); a
/// constant sample is widened to value +- 0.5.
Histogram build_histogram(std::span<const float> data, int bins = 100);
Histogram build_histogram(const DifferentialSample& d, int bins = 100);

/// Random-operand sweep over tile width, gain and ADC noise: Laplace weights
/// (out x in), standard normal inputs (tokens x in), ABFP vs float32 product.
struct AppendixConfig {
  std::vector<int> tiles{8, 32, 128};
  std::vector<double> gains{1, 2, 4, 8, 16};
  std::vector<double> noise_lsbs{0.0, 1.0};
  int reps = 10;
  std::uint64_t seed = 0;
  QuantSpec quant = QuantSpec::make(8, 8, 8);
  std::size_t out_features = 768;
  std::size_t in_features = 768;
  std::size_t tokens = 16 * 25;
  bool histograms = false;
  int histogram_bins = 100;
  unsigned threads = 1;
};

struct AppendixCell {
  int tile = 0;
  double gain = 1.0;
  QuantSpec quant;
  double noise_lsb = 0.0;
  int rep = 0;
  NoiseStats stats;
  std::optional<Histogram> histogram;
};

struct AppendixReport {
  AppendixConfig config;
  /// Ordered by tile, gain, noise, rep (as listed in the config).
  std::vector<AppendixCell> cells;

  /// Mean over reps of the per-rep variance of delta for one cell.
  [[nodiscard]] double mean_variance(int tile, double gain, double noise_lsb) const;
  /// Mean over reps of the per-rep std of delta for one cell.
  [[nodiscard]] double mean_std(int tile, double gain, double noise_lsb) const;
};

AppendixReport appendix_experiment(const AppendixConfig& config);

/// Feeds each matmul layer's float32-path input to both its float32 and ABFP
/// versions and records statistics of (ABFP - float32). Only the float32
/// branch feeds forward.
NoiseProfile layer_noise_profile(const Model& model, const Matrix& batch, const DeviceConfig& cfg,
                                 unsigned threads = 1);

/// The per-layer deltas behind layer_noise_profile, keyed by layer index.
struct LayerDelta {
  std::size_t layer = 0;
  std::string name;
  Matrix delta;
};
/// ABFP minus float32 output of each matmul layer on the float32 activations,
/// bias added, before Bf16 rounding.
std::vector<LayerDelta> layer_deltas(const Model& model, const Matrix& batch,
                                     const DeviceConfig& cfg, unsigned threads = 1);

}  // namespace abfp
