#include "abfp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "abfp/error.hpp"

namespace abfp {

namespace {

constexpr std::uint64_t kWeightTag = 0xA11CE;
constexpr std::uint64_t kInputTag = 0xB0B;
constexpr std::uint64_t kDeviceTag = 0xADC;

Matrix subtract(const Matrix& a, const Matrix& b) {
  Matrix d(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) d.data()[k] = a.data()[k] - b.data()[k];
  return d;
}

}  // namespace

Histogram::Histogram(std::vector<double> edges, std::vector<std::uint64_t> raw_counts,
                     bool smoothing)
    : edges_(std::move(edges)), raw_counts_(std::move(raw_counts)), smoothing_(smoothing) {
  if (raw_counts_.empty() || edges_.size() != raw_counts_.size() + 1) {
    throw std::invalid_argument("histogram needs B >= 1 counts and B + 1 edges");
  }
  for (double e : edges_) {
    if (!std::isfinite(e)) throw std::invalid_argument("histogram edges must be finite");
  }
  const bool point = edges_.front() == edges_.back();
  for (std::size_t k = 1; k < edges_.size(); ++k) {
    const bool ok = point ? edges_[k] == edges_[0] : edges_[k] > edges_[k - 1];
    if (!ok) throw std::invalid_argument("histogram edges must be strictly increasing");
  }
  smoothed_.resize(raw_counts_.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < raw_counts_.size(); ++k) {
    smoothed_[k] = static_cast<double>(raw_counts_[k]) + (smoothing_ ? kSmoothing : 0.0);
    sum += smoothed_[k];
  }
  if (!(sum > 0.0)) throw std::invalid_argument("histogram has no mass");
  probabilities_.resize(smoothed_.size());
  for (std::size_t k = 0; k < smoothed_.size(); ++k) probabilities_[k] = smoothed_[k] / sum;
}

std::uint64_t Histogram::total() const {
  return std::accumulate(raw_counts_.begin(), raw_counts_.end(), std::uint64_t{0});
}

Histogram Histogram::point_mass(double value) { return Histogram({value, value}, {1}, true); }

DifferentialSample differential_error(const Matrix& w, const Matrix& x, const DeviceConfig& cfg,
                                      const MatmulOptions& options, std::string label) {
  const Matrix reference = matmul_f32(w, x);
  const Matrix approx = abfp_matmul(w, x, cfg, options);
  return {subtract(approx, reference), cfg, std::move(label)};
}

NoiseStats summary_stats(std::span<const float> delta, std::string label) {
  if (delta.empty()) throw std::invalid_argument("summary_stats of an empty tensor");
  NoiseStats s;
  s.label = std::move(label);
  s.count = delta.size();
  s.min = s.max = delta[0];
  // Welford's update; the population variance is m2 / N.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (float f : delta) {
    const double v = f;
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = std::clamp(mean, s.min, s.max);
  s.std = std::sqrt(std::max(0.0, m2 / static_cast<double>(n)));
  return s;
}

NoiseStats summary_stats(const DifferentialSample& d) { return summary_stats(d.delta.data(), d.label); }

Histogram build_histogram(std::span<const float> data, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  if (data.empty()) throw std::invalid_argument("histogram of an empty tensor");
  const auto [mn, mx] = std::minmax_element(data.begin(), data.end());
  double lo = *mn;
  double hi = *mx;
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const auto b = static_cast<std::size_t>(bins);
  const double width = (hi - lo) / static_cast<double>(b);
  std::vector<double> edges(b + 1);
  for (std::size_t k = 0; k < b; ++k) edges[k] = lo + width * static_cast<double>(k);
  edges[b] = hi;
  std::vector<std::uint64_t> counts(b, 0);
  for (float f : data) {
    const double v = f;
    auto k = static_cast<std::size_t>(std::clamp(std::floor((v - lo) / width), 0.0,
                                                 static_cast<double>(b - 1)));
    // Keep values on the correct side of the stored edges despite rounding
    // in (v - lo) / width.
    while (k > 0 && v < edges[k]) --k;
    while (k + 1 < b && v >= edges[k + 1]) ++k;
    ++counts[k];
  }
  return Histogram(std::move(edges), std::move(counts), true);
}

Histogram build_histogram(const DifferentialSample& d, int bins) {
  return build_histogram(d.delta.data(), bins);
}

double AppendixReport::mean_variance(int tile, double gain, double noise_lsb) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : cells) {
    if (c.tile == tile && c.gain == gain && c.noise_lsb == noise_lsb) {
      sum += c.stats.std * c.stats.std;
      ++n;
    }
  }
  if (n == 0) throw std::out_of_range("no such appendix cell");
  return sum / n;
}

double AppendixReport::mean_std(int tile, double gain, double noise_lsb) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : cells) {
    if (c.tile == tile && c.gain == gain && c.noise_lsb == noise_lsb) {
      sum += c.stats.std;
      ++n;
    }
  }
  if (n == 0) throw std::out_of_range("no such appendix cell");
  return sum / n;
}

AppendixReport appendix_experiment(const AppendixConfig& config) {
  if (config.reps < 1) throw std::invalid_argument("appendix experiment needs reps >= 1");
  AppendixReport report;
  report.config = config;
  const std::size_t n_tiles = config.tiles.size();
  const std::size_t n_gains = config.gains.size();
  const std::size_t n_noise = config.noise_lsbs.size();
  const auto reps = static_cast<std::size_t>(config.reps);
  report.cells.resize(n_tiles * n_gains * n_noise * reps);
  auto cell_index = [&](std::size_t t, std::size_t g, std::size_t z, std::size_t r) {
    return ((t * n_gains + g) * n_noise + z) * reps + r;
  };

  for (std::size_t r = 0; r < reps; ++r) {
    // Operands are shared by every tile/gain/noise cell of one repetition.
    Matrix w(config.out_features, config.in_features);
    CounterStream wrng(config.seed, {kWeightTag, static_cast<std::uint32_t>(r), 0, 0});
    for (float& v : w.data()) v = static_cast<float>(wrng.laplace());
    Matrix tokens(config.tokens, config.in_features);
    CounterStream xrng(config.seed, {kInputTag, static_cast<std::uint32_t>(r), 0, 0});
    for (float& v : tokens.data()) v = static_cast<float>(xrng.normal());
    const Matrix x = tokens.transposed();
    const Matrix reference = matmul_f32(w, x);
    const std::uint64_t device_seed = combine_seed(config.seed ^ kDeviceTag, r);

    for (std::size_t t = 0; t < n_tiles; ++t) {
      const int n = config.tiles[t];
      std::vector<DeviceConfig> configs;
      for (double g : config.gains) {
        for (double z : config.noise_lsbs) {
          configs.push_back(DeviceConfig::make(n, g, config.quant, NoiseModel{z}, device_seed));
        }
      }
      const auto ew = EncodedOperand::rows_of(w, n, config.quant.bits_w);
      const auto ex = EncodedOperand::cols_of(x, n, config.quant.bits_x);
      MatmulOptions opts;
      opts.threads = config.threads;
      const auto outputs = abfp_matmul_multi(ew, ex, configs, opts);
      for (std::size_t g = 0; g < n_gains; ++g) {
        for (std::size_t z = 0; z < n_noise; ++z) {
          const Matrix delta = subtract(outputs[g * n_noise + z], reference);
          AppendixCell& cell = report.cells[cell_index(t, g, z, r)];
          cell.tile = n;
          cell.gain = config.gains[g];
          cell.quant = configs[g * n_noise + z].quant;
          cell.noise_lsb = config.noise_lsbs[z];
          cell.rep = static_cast<int>(r);
          cell.stats = summary_stats(delta.data());
          if (config.histograms) cell.histogram = build_histogram(delta.data(), config.histogram_bins);
        }
      }
    }
  }
  return report;
}

std::vector<LayerDelta> layer_deltas(const Model& model, const Matrix& batch,
                                     const DeviceConfig& cfg, unsigned threads) {
  ExecutionMode fmode = ExecutionMode::float32();
  fmode.threads = threads;
  ExecutionMode amode = ExecutionMode::abfp(cfg);
  amode.threads = threads;
  const ForwardRecord rec = forward(model, batch, fmode);
  std::vector<LayerDelta> out;
  for (std::size_t i : model.matmul_layers()) {
    const Layer& l = model.layers()[i];
    const Matrix& x = rec.inputs[i];
    const Matrix y = layer_forward(l, i, x, fmode);
    const Matrix y_abfp = layer_forward(l, i, x, amode);
    out.push_back({i, l.name, subtract(y_abfp, y)});
  }
  return out;
}

NoiseProfile layer_noise_profile(const Model& model, const Matrix& batch, const DeviceConfig& cfg,
                                 unsigned threads) {
  NoiseProfile p;
  p.config = cfg;
  for (auto& d : layer_deltas(model, batch, cfg, threads)) {
    p.layers.push_back(summary_stats(d.delta.data(), d.name));
  }
  return p;
}

}  // namespace abfp
