#include "abfp/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "abfp/error.hpp"

namespace abfp {

namespace {

constexpr int kMinBits = 2;
constexpr int kMaxBits = 24;

void check_bits(int bits) {
  if (bits < kMinBits || bits > kMaxBits) {
    throw DomainError("bitwidth " + std::to_string(bits) + " outside [2, 24]");
  }
}

}  // namespace

Bf16 Bf16::from_float(float x) {
  if (!std::isfinite(x)) {
    throw DomainError("bfloat16 encode of a non-finite value");
  }
  const auto u = std::bit_cast<std::uint32_t>(x);
  const std::uint32_t lsb = (u >> 16) & 1u;
  const std::uint32_t rounded = u + 0x7FFFu + lsb;
  const auto bits = static_cast<std::uint16_t>(rounded >> 16);
  if ((bits & 0x7F80u) == 0x7F80u) {
    throw DomainError("bfloat16 encode overflows to infinity");
  }
  return from_bits(bits);
}

Bf16 Bf16::ceil(float x) {
  Bf16 b = from_float(x);
  const float back = b.to_float();
  if (back >= x) {
    return b;
  }
  // Moving one ulp toward +inf: magnitude up for positives, down for negatives.
  std::uint16_t bits = b.bits();
  if (bits == 0x8000u) {
    bits = 0x0001u;
  } else if (bits & 0x8000u) {
    --bits;
  } else {
    ++bits;
  }
  if ((bits & 0x7F80u) == 0x7F80u) {
    throw DomainError("bfloat16 ceil overflows to infinity");
  }
  return from_bits(bits);
}

float Bf16::to_float() const {
  return std::bit_cast<float>(static_cast<std::uint32_t>(bits_) << 16);
}

void round_bf16_inplace(std::span<float> values) {
  for (float& v : values) v = round_bf16(v);
}

double round_half_even(double x) {
  // nearbyint honours the current rounding mode; the simulator never changes
  // it from FE_TONEAREST, which is ties-to-even.
  return std::nearbyint(x);
}

std::int64_t code_limit(int bits) {
  check_bits(bits);
  return (std::int64_t{1} << (bits - 1)) - 1;
}

double delta(int bits) {
  return 1.0 / static_cast<double>(code_limit(bits));
}

double quantize(double v, double delta, double tau) {
  if (!(delta > 0.0) || !(tau > 0.0)) {
    throw DomainError("quantize requires delta > 0 and tau > 0");
  }
  if (!std::isfinite(v)) {
    throw DomainError("quantize of a non-finite value");
  }
  const double inv = 1.0 / delta;
  const double levels = std::nearbyint(inv);
  double steps;
  if (levels >= 1.0 && std::abs(inv - levels) <= 1e-9 * levels) {
    steps = v * levels;
    const double q = round_half_even(steps) / levels;
    return std::clamp(q, -tau, tau);
  }
  steps = v / delta;
  return std::clamp(round_half_even(steps) * delta, -tau, tau);
}

std::vector<double> quantize(std::span<const double> v, double delta, double tau) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(),
                 [&](double e) { return quantize(e, delta, tau); });
  return out;
}

QuantSpec QuantSpec::make(int bits_w, int bits_x, int bits_y) {
  check_bits(bits_w);
  check_bits(bits_x);
  check_bits(bits_y);
  QuantSpec q;
  q.bits_w = bits_w;
  q.bits_x = bits_x;
  q.bits_y = bits_y;
  return q;
}

double lossless_output_bits(int bits_w, int bits_x, int tile_width) {
  if (tile_width < 1) throw DomainError("tile width must be >= 1");
  return bits_w + bits_x + std::log2(static_cast<double>(tile_width)) - 1.0;
}

}  // namespace abfp
