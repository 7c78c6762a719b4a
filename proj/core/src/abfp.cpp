#include "abfp/abfp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>

#include "abfp/error.hpp"

namespace abfp {

namespace {

std::atomic<std::uint64_t> g_core_calls{0};

void count_call() { g_core_calls.fetch_add(1, std::memory_order_relaxed); }

std::size_t tiles_for(std::size_t length, int n) {
  return (length + static_cast<std::size_t>(n) - 1) / static_cast<std::size_t>(n);
}

// Scale and codes for one tile; `out` has room for the padded tile width.
float encode_into(std::span<const float> v, int bits, std::span<std::int32_t> out) {
  float max_abs = 0.0f;
  for (float e : v) {
    if (!std::isfinite(e)) throw DomainError("ABFP encode of a non-finite value");
    max_abs = std::max(max_abs, std::abs(e));
  }
  std::fill(out.begin(), out.end(), 0);
  if (max_abs == 0.0f) return 0.0f;
  const float scale = Bf16::ceil(max_abs).to_float();
  const double limit = static_cast<double>(code_limit(bits));
  const double s = scale;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double q = round_half_even(static_cast<double>(v[k]) * limit / s);
    out[k] = static_cast<std::int32_t>(std::clamp(q, -limit, limit));
  }
  return scale;
}

// Output stage of one partial: gain, noise, ADC quantization and clamp.
struct OutputStage {
  double numer = 0.0;  // G * L_Y
  double denom = 0.0;  // L_W * L_X * n
  double limit = 0.0;  // L_Y, the clamp tau_Y = n in bin units
  double grid = 0.0;   // n, so value = code * grid / limit
  double gain = 1.0;
  double lsb_width = 0.0;

  explicit OutputStage(const DeviceConfig& cfg)
      : numer(cfg.gain * static_cast<double>(code_limit(cfg.quant.bits_y))),
        denom(static_cast<double>(code_limit(cfg.quant.bits_w)) *
              static_cast<double>(code_limit(cfg.quant.bits_x)) * cfg.tile_width),
        limit(static_cast<double>(code_limit(cfg.quant.bits_y))),
        grid(static_cast<double>(cfg.tile_width)),
        gain(cfg.gain),
        lsb_width(cfg.noise.lsb_width) {}

  [[nodiscard]] PartialOutput apply(std::int64_t dot, double noise_bins, float scale) const {
    // G * w.x / (n * delta_Y) with w.x = dot / (L_W * L_X), plus E / (n * delta_Y).
    const double t = static_cast<double>(dot) * numer / denom + noise_bins;
    const double r = round_half_even(t);
    PartialOutput p;
    p.saturated = std::abs(r) > limit;
    const double code = std::clamp(r, -limit, limit);
    p.code = static_cast<std::int64_t>(code);
    p.value = code * grid / limit;
    p.scale = scale;
    return p;
  }

  [[nodiscard]] float term(const PartialOutput& p) const {
    return static_cast<float>(p.value * static_cast<double>(p.scale) / gain);
  }
};

// Noise in units of one output bin: w * (u - 1/2).
double noise_bins(CounterStream& rng, double lsb_width) {
  if (lsb_width == 0.0) return 0.0;
  return lsb_width * (rng.uniform() - 0.5);
}

template <typename Acc>
Acc int_dot(const std::int32_t* a, const std::int32_t* b, int n) {
  Acc s = 0;
  for (int k = 0; k < n; ++k) s += static_cast<Acc>(a[k]) * static_cast<Acc>(b[k]);
  return s;
}

bool fits_int32(const DeviceConfig& cfg) {
  const double bound = static_cast<double>(code_limit(cfg.quant.bits_w)) *
                       static_cast<double>(code_limit(cfg.quant.bits_x)) * cfg.tile_width;
  return bound <= static_cast<double>(std::numeric_limits<std::int32_t>::max());
}

void check_operands(const EncodedOperand& w, const EncodedOperand& x, const DeviceConfig& cfg) {
  if (w.length() != x.length()) {
    throw ShapeError("abfp_matmul contraction mismatch: " + std::to_string(w.length()) +
                     " vs " + std::to_string(x.length()));
  }
  if (w.tile_width() != cfg.tile_width || x.tile_width() != cfg.tile_width) {
    throw ShapeError("encoded tile width does not match the device tile width");
  }
  if (w.bits() != cfg.quant.bits_w || x.bits() != cfg.quant.bits_x) {
    throw ShapeError("encoded bitwidths do not match the device QuantSpec");
  }
}

template <typename Fn>
void parallel_rows(std::size_t rows, unsigned threads, Fn&& fn) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(rows, 1)));
  if (workers <= 1) {
    fn(std::size_t{0}, rows);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (rows + workers - 1) / workers;
  for (unsigned t = 0; t < workers; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(rows, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
}

template <typename Acc>
void matmul_kernel(const EncodedOperand& w, const EncodedOperand& x,
                   std::span<const DeviceConfig> configs, std::span<Matrix> outputs,
                   const MatmulOptions& options) {
  const int n = w.tile_width();
  const std::size_t tiles = w.tiles();
  std::vector<OutputStage> stages;
  stages.reserve(configs.size());
  for (const auto& c : configs) stages.emplace_back(c);

  parallel_rows(w.vectors(), options.threads, [&](std::size_t row_begin, std::size_t row_end) {
    std::vector<std::int64_t> dots(tiles);
    std::vector<float> scales(tiles);
    for (std::size_t i = row_begin; i < row_end; ++i) {
      const std::int32_t* wrow = w.codes(i).data();
      for (std::size_t b = 0; b < x.vectors(); ++b) {
        const std::int32_t* xcol = x.codes(b).data();
        for (std::size_t j = 0; j < tiles; ++j) {
          dots[j] = int_dot<Acc>(wrow + j * n, xcol + j * n, n);
          // Product of two Bf16 values: 16 significant bits, exact in float32.
          scales[j] = w.scale(i, j) * x.scale(b, j);
        }
        for (std::size_t c = 0; c < configs.size(); ++c) {
          const OutputStage& stage = stages[c];
          float acc = 0.0f;
          for (std::size_t j = 0; j < tiles; ++j) {
            if (scales[j] == 0.0f) continue;  // contributes exactly zero
            double e = 0.0;
            if (stage.lsb_width != 0.0) {
              CounterStream rng(configs[c].seed,
                                {options.layer_id, static_cast<std::uint32_t>(i),
                                 static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(b)});
              e = noise_bins(rng, stage.lsb_width);
            }
            acc += stage.term(stage.apply(dots[j], e, scales[j]));
          }
          outputs[c](i, b) = acc;
        }
      }
    }
  });
}

}  // namespace

DeviceConfig DeviceConfig::make(int tile_width, double gain, QuantSpec quant, NoiseModel noise,
                                 std::uint64_t seed) {
  DeviceConfig cfg;
  cfg.tile_width = tile_width;
  cfg.gain = gain;
  cfg.quant = QuantSpec::make(quant.bits_w, quant.bits_x, quant.bits_y);
  cfg.quant.tau_y = static_cast<double>(tile_width);
  cfg.noise = noise;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void DeviceConfig::validate() const {
  if (tile_width < 1) throw DomainError("tile width must be >= 1");
  if (!(gain >= 1.0) || !std::isfinite(gain)) throw DomainError("gain must be a finite value >= 1");
  if (!(noise.lsb_width >= 0.0) || !std::isfinite(noise.lsb_width)) {
    throw DomainError("noise lsb_width must be finite and >= 0");
  }
  (void)QuantSpec::make(quant.bits_w, quant.bits_x, quant.bits_y);
  if (quant.tau_y != static_cast<double>(tile_width)) {
    throw DomainError("QuantSpec tau_y must equal the tile width");
  }
}

double AbfpVector::decoded(std::size_t k) const {
  return static_cast<double>(codes.at(k)) / static_cast<double>(code_limit(bits)) *
         static_cast<double>(scale.to_float());
}

AbfpVector encode_vector(std::span<const float> v, int bits, std::size_t padded_length) {
  if (v.empty()) throw ShapeError("cannot encode an empty vector");
  AbfpVector out;
  out.bits = bits;
  out.codes.assign(std::max(v.size(), padded_length), 0);
  out.scale = Bf16::from_float(encode_into(v, bits, out.codes));
  return out;
}

double sample_error(CounterStream& rng, int n, double delta_y, const NoiseModel& model) {
  if (!(model.lsb_width >= 0.0)) throw DomainError("noise lsb_width must be >= 0");
  return noise_bins(rng, model.lsb_width) * (static_cast<double>(n) * delta_y);
}

PartialOutput abfp_dot(const AbfpVector& w, const AbfpVector& x, const DeviceConfig& cfg,
                       CounterStream& rng) {
  count_call();
  const auto n = static_cast<std::size_t>(cfg.tile_width);
  if (w.size() != n || x.size() != n) {
    throw ShapeError("abfp_dot expects tiles of length " + std::to_string(n));
  }
  if (w.bits != cfg.quant.bits_w || x.bits != cfg.quant.bits_x) {
    throw ShapeError("abfp_dot operand bitwidths do not match the device QuantSpec");
  }
  const OutputStage stage(cfg);
  const std::int64_t dot = fits_int32(cfg)
                               ? int_dot<std::int32_t>(w.codes.data(), x.codes.data(), cfg.tile_width)
                               : int_dot<std::int64_t>(w.codes.data(), x.codes.data(), cfg.tile_width);
  const double e = noise_bins(rng, cfg.noise.lsb_width);
  return stage.apply(dot, e, w.scale.to_float() * x.scale.to_float());
}

float accumulate_f32(std::span<const PartialOutput> partials, double gain) {
  float acc = 0.0f;
  for (const auto& p : partials) {
    acc += static_cast<float>(p.value * static_cast<double>(p.scale) / gain);
  }
  return acc;
}

Bf16 accumulate(std::span<const PartialOutput> partials, double gain) {
  if (partials.empty()) throw std::invalid_argument("accumulate needs at least one partial");
  return Bf16::from_float(accumulate_f32(partials, gain));
}

EncodedOperand EncodedOperand::rows_of(const Matrix& w, int tile_width, int bits) {
  if (tile_width < 1) throw DomainError("tile width must be >= 1");
  (void)code_limit(bits);
  EncodedOperand e;
  e.vectors_ = w.rows();
  e.length_ = w.cols();
  e.tile_width_ = tile_width;
  e.bits_ = bits;
  e.tiles_ = tiles_for(w.cols(), tile_width);
  const std::size_t n = static_cast<std::size_t>(tile_width);
  e.codes_.assign(e.vectors_ * e.tiles_ * n, 0);
  e.scales_.assign(e.vectors_ * e.tiles_, 0.0f);
  for (std::size_t i = 0; i < e.vectors_; ++i) {
    const auto row = w.row(i);
    for (std::size_t j = 0; j < e.tiles_; ++j) {
      const std::size_t begin = j * n;
      const std::size_t len = std::min(n, e.length_ - begin);
      std::span<std::int32_t> out(e.codes_.data() + (i * e.tiles_ + j) * n, n);
      e.scales_[i * e.tiles_ + j] = encode_into(row.subspan(begin, len), bits, out);
    }
  }
  return e;
}

EncodedOperand EncodedOperand::cols_of(const Matrix& x, int tile_width, int bits) {
  return rows_of(x.transposed(), tile_width, bits);
}

AbfpVector EncodedOperand::tile(std::size_t vec, std::size_t t) const {
  AbfpVector v;
  v.bits = bits_;
  const auto all = codes(vec);
  const auto n = static_cast<std::size_t>(tile_width_);
  v.codes.assign(all.begin() + static_cast<std::ptrdiff_t>(t * n),
                 all.begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
  v.scale = Bf16::from_float(scale(vec, t));
  return v;
}

Matrix abfp_matmul(const Matrix& w, const Matrix& x, const DeviceConfig& cfg,
                   const MatmulOptions& options) {
  if (w.cols() != x.rows()) {
    throw ShapeError("abfp_matmul shape mismatch: " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()) + " * " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()));
  }
  cfg.validate();
  const auto ew = EncodedOperand::rows_of(w, cfg.tile_width, cfg.quant.bits_w);
  const auto ex = EncodedOperand::cols_of(x, cfg.tile_width, cfg.quant.bits_x);
  return abfp_matmul(ew, ex, cfg, options);
}

Matrix abfp_matmul(const EncodedOperand& w, const EncodedOperand& x, const DeviceConfig& cfg,
                   const MatmulOptions& options) {
  auto out = abfp_matmul_multi(w, x, std::span<const DeviceConfig>(&cfg, 1), options);
  return std::move(out.front());
}

std::vector<Matrix> abfp_matmul_multi(const EncodedOperand& w, const EncodedOperand& x,
                                      std::span<const DeviceConfig> configs,
                                      const MatmulOptions& options) {
  count_call();
  if (configs.empty()) return {};
  bool wide = false;
  for (const auto& c : configs) {
    c.validate();
    check_operands(w, x, c);
    wide = wide || !fits_int32(c);
  }
  if (w.tiles() > std::numeric_limits<std::uint32_t>::max() ||
      w.vectors() > std::numeric_limits<std::uint32_t>::max() ||
      x.vectors() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("abfp_matmul dimensions exceed the stream coordinate range");
  }
  std::vector<Matrix> outputs(configs.size(), Matrix(w.vectors(), x.vectors()));
  if (w.length() == 0) return outputs;
  if (wide) {
    matmul_kernel<std::int64_t>(w, x, configs, outputs, options);
  } else {
    matmul_kernel<std::int32_t>(w, x, configs, outputs, options);
  }
  return outputs;
}

std::uint64_t core_call_count() { return g_core_calls.load(std::memory_order_relaxed); }

}  // namespace abfp
