#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "abfp/matrix.hpp"

namespace abfp {

struct Dataset {
  Matrix features;  // samples x dim
  std::vector<int> labels;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  /// Rows `indices` of this dataset, in that order.
  [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const;
};

/// Two-class Gaussian blobs: class c has mean (2c-1) * separation/2 * u for a
/// fixed random unit vector u, and isotropic unit-variance noise. Samples
/// alternate classes. Deterministic in `seed`.
struct BlobSpec {
  std::size_t samples = 512;
  std::size_t dim = 16;
  double separation = 4.0;
  std::uint64_t seed = 1;
};

Dataset make_blobs(const BlobSpec& spec);

/// Fisher-Yates permutation of [0, n) drawn from (seed, epoch).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

}  // namespace abfp
