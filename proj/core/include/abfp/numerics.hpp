#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace abfp {

/// Software bfloat16: 1 sign bit, 8 exponent bits, 7 explicit fraction bits.
///
/// Encoding from float32 rounds the low 16 bits of the binary32 pattern to
/// nearest, ties to even. Subnormals are kept. NaN, infinity and finite values
/// that would round to infinity are rejected with DomainError so that no
/// non-finite value enters the simulator.
class Bf16 {
 public:
  constexpr Bf16() = default;

  static constexpr Bf16 from_bits(std::uint16_t bits) {
    Bf16 b;
    b.bits_ = bits;
    return b;
  }

  static Bf16 from_float(float x);

  /// Smallest Bf16 that is >= x (x finite).
  static Bf16 ceil(float x);

  [[nodiscard]] float to_float() const;
  [[nodiscard]] constexpr std::uint16_t bits() const { return bits_; }

  friend constexpr bool operator==(Bf16 a, Bf16 b) { return a.bits_ == b.bits_; }

 private:
  std::uint16_t bits_ = 0;
};

inline Bf16 to_bf16(float x) { return Bf16::from_float(x); }
inline float from_bf16(Bf16 b) { return b.to_float(); }

/// Round-trips a float through Bf16.
inline float round_bf16(float x) { return Bf16::from_float(x).to_float(); }

/// Rounds every element of `values` to the nearest Bf16 in place.
void round_bf16_inplace(std::span<float> values);

/// Nearest integer, exact halves to the even neighbour.
double round_half_even(double x);

/// Largest code magnitude of a symmetric signed quantizer: 2^(bits-1) - 1.
std::int64_t code_limit(int bits);

/// Bin size 1 / (2^(bits-1) - 1). Throws DomainError for bits < 2 or > 24.
double delta(int bits);

/// clamp(round_half_even(v / delta) * delta; tau).
///
/// When 1/delta is an integer level count (the usual case, delta = delta(b))
/// the division is carried out as a multiplication by that integer so that
/// exact ties such as 0.5 * 127 = 63.5 are seen as ties.
double quantize(double v, double delta, double tau);
std::vector<double> quantize(std::span<const double> v, double delta, double tau);

/// Bitwidths of weights, inputs and outputs with their derived bins.
/// tau_w = tau_x = 1; tau_y is the tile width once bound to a DeviceConfig
/// (0 while unbound).
struct QuantSpec {
  int bits_w = 8;
  int bits_x = 8;
  int bits_y = 8;
  double tau_y = 0.0;

  static QuantSpec make(int bits_w, int bits_x, int bits_y);

  [[nodiscard]] double delta_w() const { return delta(bits_w); }
  [[nodiscard]] double delta_x() const { return delta(bits_x); }
  [[nodiscard]] double delta_y() const { return delta(bits_y); }
  static constexpr double tau_w = 1.0;
  static constexpr double tau_x = 1.0;

  friend bool operator==(const QuantSpec&, const QuantSpec&) = default;
};

/// Output width needed for a lossless G=1 output: b_W + b_X + log2(n) - 1.
double lossless_output_bits(int bits_w, int bits_x, int tile_width);

}  // namespace abfp
