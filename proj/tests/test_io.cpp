#include <cmath>
#include <filesystem>
#include <random>
#include <unistd.h>

#include <gtest/gtest.h>

#include "abfp/error.hpp"
#include "abfp/io.hpp"

using namespace abfp;

namespace {

Model sample_model() {
  Model m(2 * 4 * 4);
  m.add_conv2d("conv", 2, 4, 4, 3, 3, 1, 1).add_relu("relu").add_linear("head", 5);
  m.init_parameters(7);
  m.layers()[2].bias[1] = -0.125f;
  return m;
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const Model m = sample_model();
  const auto bytes = serialize_checkpoint(m);
  const Model back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back, m);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ABFP");
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / ("abfp_io_" + std::to_string(::getpid()) + ".ckpt");
  const Model m = sample_model();
  save_checkpoint(m, path);
  EXPECT_EQ(load_checkpoint(path), m);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
}

TEST(Checkpoint, CorruptedMagicFails) {
  auto bytes = serialize_checkpoint(sample_model());
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, WrongVersionFails) {
  auto bytes = serialize_checkpoint(sample_model());
  bytes[4] = 9;
  EXPECT_THROW(deserialize_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, TruncationFailsAtEveryLength) {
  const auto bytes = serialize_checkpoint(sample_model());
  for (std::size_t n = 0; n < bytes.size(); n += 7) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(n));
    EXPECT_THROW(deserialize_checkpoint(cut), FormatError) << n;
  }
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(extra), FormatError);
}

TEST(Checkpoint, RandomCorruptionNeverCrashes) {
  const auto bytes = serialize_checkpoint(sample_model());
  std::mt19937 rng(3);
  for (int t = 0; t < 2000; ++t) {
    auto b = bytes;
    b[rng() % b.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    try {
      const Model m = deserialize_checkpoint(b);
      m.validate();
    } catch (const FormatError&) {
    }
  }
}

TEST(HistogramJson, HundredBinsRoundTripExactly) {
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;
  std::mt19937_64 rng(4);
  double e = -1.2345678901234567;
  for (int k = 0; k <= 100; ++k) {
    edges.push_back(e);
    e += std::uniform_real_distribution<double>(1e-3, 0.1)(rng);
  }
  for (int k = 0; k < 100; ++k) counts.push_back(rng() % 1000);
  const Histogram h(edges, counts);
  const Histogram back = histogram_from_json(histogram_to_json(h));
  EXPECT_EQ(back, h);
  EXPECT_EQ(back.probabilities(), h.probabilities());
  EXPECT_EQ(histogram_to_json(back), histogram_to_json(h));
  EXPECT_THROW(histogram_from_json("{\"edges\": [0, 1]}"), FormatError);
  EXPECT_THROW(histogram_from_json("not json"), FormatError);
}

TEST(PlanJson, RoundTrip) {
  DnfPlan p;
  p.config = DeviceConfig::make(4, 8.0, QuantSpec::make(6, 6, 8), NoiseModel{1.0}, 17);
  p.layers.push_back({0, "fc1", 0.25, true, Histogram({-1.0, 0.0, 1.5}, {3, 4})});
  p.layers.push_back({2, "fc2", 0.0, false, Histogram::point_mass(0.0)});
  EXPECT_EQ(plan_from_json(plan_to_json(p)), p);
}

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(1.0), "1");
  EXPECT_EQ(format_number(-2.5e-7), "-2.5e-07");
  std::mt19937_64 rng(5);
  for (int k = 0; k < 1000; ++k) {
    const double v = std::normal_distribution<double>(0, 1e3)(rng);
    EXPECT_EQ(std::stod(format_number(v)), v);
  }
  EXPECT_THROW(format_number(std::nan("")), DomainError);
}
