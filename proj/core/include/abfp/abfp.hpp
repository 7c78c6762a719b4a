#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "abfp/matrix.hpp"
#include "abfp/numerics.hpp"
#include "abfp/rng.hpp"

namespace abfp {

/// Additive ADC error, uniform over `lsb_width` output bins:
/// E ~ U(-w*n*delta_Y/2, +w*n*delta_Y/2). w = 0 disables noise; w = 1 is one
/// full bin (+-0.5 LSB).
struct NoiseModel {
  double lsb_width = 0.0;

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

/// A virtual analog tile: dot products of length `tile_width`, gain applied
/// before the ADC, and the output clamp tau_Y = tile_width.
struct DeviceConfig {
  int tile_width = 8;
  double gain = 1.0;
  QuantSpec quant;
  NoiseModel noise;
  std::uint64_t seed = 0;

  /// Validates and binds quant.tau_y to the tile width.
  static DeviceConfig make(int tile_width, double gain, QuantSpec quant,
                           NoiseModel noise = {}, std::uint64_t seed = 0);
  void validate() const;

  /// One output bin (LSB) in normalized units: n * delta_Y.
  [[nodiscard]] double output_bin() const { return tile_width * quant.delta_y(); }

  friend bool operator==(const DeviceConfig&, const DeviceConfig&) = default;
};

/// One tile of a vector in ABFP form: integer codes sharing a Bf16 scale.
/// Decoded element k is codes[k] * delta(bits) * scale.
struct AbfpVector {
  std::vector<std::int32_t> codes;
  Bf16 scale;
  int bits = 8;

  [[nodiscard]] std::size_t size() const { return codes.size(); }
  [[nodiscard]] double decoded(std::size_t k) const;
};

/// Encodes v as one ABFP vector, zero padded to `padded_length` when that is
/// larger than v.size().
///
/// The scale is the smallest Bf16 >= max|v| so the normalized vector never
/// leaves [-1, 1]; codes are round_half_even(v * L / scale) with
/// L = 2^(bits-1) - 1, evaluated in float64 so exact ties stay ties.
/// An all-zero vector gets scale 0 and zero codes.
AbfpVector encode_vector(std::span<const float> v, int bits, std::size_t padded_length = 0);

/// One draw of the ADC error for a tile of width n. Exactly 0 when the model
/// is disabled.
double sample_error(CounterStream& rng, int n, double delta_y, const NoiseModel& model);

/// Result of one analog dot product.
/// `code` is the ADC output in units of one output bin, |code| <= 2^(bY-1)-1;
/// `value` = code * n * delta_Y lies on the output grid within [-n, n];
/// `scale` = s^w * s^x, exact in float32.
struct PartialOutput {
  std::int64_t code = 0;
  double value = 0.0;
  float scale = 0.0f;
  bool saturated = false;
};

/// y^q = Q(G * w^q . x^q + E; n*delta_Y, n). Draws at most one value from rng.
/// Throws ShapeError unless both vectors have length cfg.tile_width and their
/// bitwidths match cfg.quant.
PartialOutput abfp_dot(const AbfpVector& w, const AbfpVector& x, const DeviceConfig& cfg,
                       CounterStream& rng);

/// Sum of value * scale / G over the partials in order, in float32.
float accumulate_f32(std::span<const PartialOutput> partials, double gain);
/// accumulate_f32 rounded to Bf16. Throws std::invalid_argument if empty.
Bf16 accumulate(std::span<const PartialOutput> partials, double gain);

/// A matrix encoded tile by tile along its contraction axis. Encoded weights
/// are immutable and can be shared between calls and threads.
class EncodedOperand {
 public:
  /// Each row of `w` split into ceil(cols/n) tiles (weights, N_r x N_c).
  static EncodedOperand rows_of(const Matrix& w, int tile_width, int bits);
  /// Each column of `x` split into ceil(rows/n) tiles (inputs, N_c x N_b).
  static EncodedOperand cols_of(const Matrix& x, int tile_width, int bits);

  [[nodiscard]] std::size_t vectors() const { return vectors_; }
  [[nodiscard]] std::size_t tiles() const { return tiles_; }
  [[nodiscard]] std::size_t length() const { return length_; }
  [[nodiscard]] int tile_width() const { return tile_width_; }
  [[nodiscard]] int bits() const { return bits_; }

  [[nodiscard]] std::span<const std::int32_t> codes(std::size_t vec) const {
    return {codes_.data() + vec * tiles_ * tile_width_, tiles_ * tile_width_};
  }
  [[nodiscard]] float scale(std::size_t vec, std::size_t tile) const {
    return scales_[vec * tiles_ + tile];
  }
  [[nodiscard]] AbfpVector tile(std::size_t vec, std::size_t tile) const;

 private:
  std::size_t vectors_ = 0;
  std::size_t tiles_ = 0;
  std::size_t length_ = 0;
  int tile_width_ = 1;
  int bits_ = 8;
  std::vector<std::int32_t> codes_;
  std::vector<float> scales_;
};

struct MatmulOptions {
  /// First stream coordinate; distinguishes layers sharing a seed.
  std::uint64_t layer_id = 0;
  /// Worker threads over output rows. Results do not depend on this.
  unsigned threads = 1;
};

/// Tiled ABFP product W (N_r x N_c) times X (N_c x N_b).
///
/// Output (i, b) accumulates ceil(N_c/n) partial dots in ascending tile order
/// in float32. The partial for (i, j, b) draws its noise from
/// derive_stream(cfg.seed, {layer_id, i, j, b}), so results are bit-identical
/// for any thread count or evaluation order. The returned accumulators are
/// float32; rounding to Bf16 is left to the caller.
Matrix abfp_matmul(const Matrix& w, const Matrix& x, const DeviceConfig& cfg,
                   const MatmulOptions& options = {});
Matrix abfp_matmul(const EncodedOperand& w, const EncodedOperand& x, const DeviceConfig& cfg,
                   const MatmulOptions& options = {});

/// Evaluates several device configurations that share tile width and input
/// bitwidths over the same encoded operands. Element k equals
/// abfp_matmul(w, x, configs[k], options).
std::vector<Matrix> abfp_matmul_multi(const EncodedOperand& w, const EncodedOperand& x,
                                      std::span<const DeviceConfig> configs,
                                      const MatmulOptions& options = {});

/// Number of abfp_dot / abfp_matmul* invocations made by this process.
std::uint64_t core_call_count();

}  // namespace abfp
