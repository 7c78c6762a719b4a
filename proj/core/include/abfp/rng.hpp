#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace abfp {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3"). Pure: the same counter and key always give the same
/// four words.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Where a stream is used. `layer` is mixed into the key with the seed; the
/// other three index the Philox counter directly, so distinct coordinates
/// never share a block.
struct StreamCoordinates {
  std::uint64_t layer = 0;
  std::uint32_t row = 0;
  std::uint32_t tile = 0;
  std::uint32_t batch = 0;
};

/// A reproducible stream of random bits addressed by (seed, coordinates).
///
/// The fourth counter word is the block index within the stream, so a stream
/// yields 2^32 blocks of four words before wrapping. Satisfies
/// UniformRandomBitGenerator.
class CounterStream {
 public:
  using result_type = std::uint32_t;

  CounterStream(std::uint64_t seed, StreamCoordinates coords);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u32(); }

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer on [0, bound), bound > 0, without modulo bias.
  std::uint64_t uniform_index(std::uint64_t bound);
  /// Standard normal (Box-Muller, one value per call).
  double normal();
  /// Standard Laplace (location 0, scale 1) by inverse CDF.
  double laplace();

 private:
  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 4> block_{};
  unsigned used_ = 4;
};

CounterStream derive_stream(std::uint64_t seed, StreamCoordinates coords);

/// SplitMix64 finaliser; used to fold small integers into seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t value);

}  // namespace abfp
