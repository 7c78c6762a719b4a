#include "abfp/data.hpp"

#include <cmath>
#include <numeric>

#include "abfp/rng.hpp"

namespace abfp {

namespace {
constexpr std::uint64_t kBlobTag = 0xB10B;
constexpr std::uint64_t kShuffleTag = 0x5AFF1E;
}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = Matrix(indices.size(), features.cols());
  out.labels.resize(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = features.row(indices[k]);
    std::copy(src.begin(), src.end(), out.features.row(k).begin());
    out.labels[k] = labels[indices[k]];
  }
  return out;
}

Dataset make_blobs(const BlobSpec& spec) {
  CounterStream dir_rng(spec.seed, {kBlobTag, 0, 0, 0});
  std::vector<double> u(spec.dim);
  double norm = 0.0;
  for (double& e : u) {
    e = dir_rng.normal();
    norm += e * e;
  }
  norm = std::sqrt(norm);
  for (double& e : u) e /= norm;

  Dataset d;
  d.features = Matrix(spec.samples, spec.dim);
  d.labels.resize(spec.samples);
  CounterStream rng(spec.seed, {kBlobTag, 1, 0, 0});
  for (std::size_t s = 0; s < spec.samples; ++s) {
    const int label = static_cast<int>(s % 2);
    const double sign = label == 0 ? -1.0 : 1.0;
    d.labels[s] = label;
    for (std::size_t k = 0; k < spec.dim; ++k) {
      d.features(s, k) = static_cast<float>(sign * 0.5 * spec.separation * u[k] + rng.normal());
    }
  }
  return d;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  CounterStream rng(seed, {kShuffleTag, static_cast<std::uint32_t>(epoch), 0, 0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace abfp
