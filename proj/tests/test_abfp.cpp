#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "abfp/abfp.hpp"
#include "abfp/error.hpp"
#include "oracles.hpp"

using namespace abfp;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, float sd = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, sd);
  Matrix m(r, c);
  for (float& v : m.data()) v = n(rng);
  return m;
}

DeviceConfig device(int n, double gain, int bw, int bx, int by, double noise = 0.0,
                    std::uint64_t seed = 0) {
  return DeviceConfig::make(n, gain, QuantSpec::make(bw, bx, by), NoiseModel{noise}, seed);
}

double frobenius_rel(const Matrix& a, const Matrix& ref) {
  double num = 0, den = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = double{a.data()[k]} - ref.data()[k];
    num += d * d;
    den += double{ref.data()[k]} * ref.data()[k];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(DeviceConfig, BindsOutputClampAndValidates) {
  const DeviceConfig c = device(8, 2.0, 8, 8, 8);
  EXPECT_EQ(c.quant.tau_y, 8.0);
  EXPECT_DOUBLE_EQ(c.output_bin(), 8.0 / 127.0);
  EXPECT_THROW(device(0, 1.0, 8, 8, 8), DomainError);
  EXPECT_THROW(device(8, 0.5, 8, 8, 8), DomainError);
  EXPECT_THROW(device(8, 1.0, 8, 8, 8, -1.0), DomainError);
}

TEST(Encode, Examples) {
  const std::vector<float> a{0.5f, -0.25f};
  const AbfpVector e = encode_vector(a, 8);
  EXPECT_EQ(e.scale.to_float(), 0.5f);
  EXPECT_EQ(e.codes, (std::vector<std::int32_t>{127, -64}));

  const std::vector<float> z{0, 0, 0};
  const AbfpVector ez = encode_vector(z, 8);
  EXPECT_EQ(ez.scale.to_float(), 0.0f);
  EXPECT_EQ(ez.codes, (std::vector<std::int32_t>{0, 0, 0}));

  const std::vector<float> one{1.0f};
  const AbfpVector e1 = encode_vector(one, 2);
  EXPECT_EQ(e1.scale.to_float(), 1.0f);
  EXPECT_EQ(e1.codes, (std::vector<std::int32_t>{1}));
  EXPECT_DOUBLE_EQ(e1.decoded(0), 1.0);
}

TEST(Encode, PadsShortTiles) {
  const std::vector<float> a{0.5f, -0.25f};
  const AbfpVector e = encode_vector(a, 8, 4);
  EXPECT_EQ(e.codes, (std::vector<std::int32_t>{127, -64, 0, 0}));
}

TEST(Encode, InvariantsOnRandomVectors) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 10.0f);
  for (int t = 0; t < 2000; ++t) {
    const int bits = 2 + t % 15;
    std::vector<float> v(1 + t % 17);
    float mx = 0;
    for (float& x : v) {
      x = n(rng);
      mx = std::max(mx, std::abs(x));
    }
    const AbfpVector e = encode_vector(v, bits);
    ASSERT_GE(e.scale.to_float(), mx);
    ASSERT_GT(e.scale.to_float(), 0.0f);
    const auto lim = code_limit(bits);
    double max_err = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      ASSERT_LE(std::abs(e.codes[k]), lim);
      max_err = std::max(max_err, std::abs(e.decoded(k) - v[k]));
    }
    ASSERT_LE(max_err, e.scale.to_float() * delta(bits) / 2 * (1 + 1e-9));
  }
}

TEST(Encode, RejectsNonFinite) {
  const std::vector<float> v{1.0f, std::nanf("")};
  EXPECT_THROW(encode_vector(v, 8), DomainError);
}

TEST(SampleError, DisabledIsExactlyZero) {
  CounterStream s(1, {});
  for (int k = 0; k < 1000; ++k) ASSERT_EQ(sample_error(s, 128, delta(8), NoiseModel{0.0}), 0.0);
}

TEST(SampleError, SupportBound) {
  CounterStream s(2, {});
  for (int k = 0; k < 100000; ++k) {
    const double e = sample_error(s, 2, delta(8), NoiseModel{1.0});
    ASSERT_LE(std::abs(e), 1.0 / 127.0);
  }
}

TEST(SampleError, VarianceMatchesUniformBin) {
  CounterStream s(3, {});
  const int n = 1000000;
  double sum = 0, sq = 0;
  for (int k = 0; k < n; ++k) {
    const double e = sample_error(s, 128, delta(8), NoiseModel{1.0});
    sum += e;
    sq += e * e;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  const double expected = std::pow(128.0 / 127.0, 2) / 12.0;
  EXPECT_LT(std::abs(var / expected - 1.0), 0.01);
  EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(var / n));
}

TEST(AbfpDot, Examples) {
  const std::vector<float> wv{0.5f, -0.25f}, xv{1.0f, 1.0f};
  const AbfpVector w = encode_vector(wv, 8), x = encode_vector(xv, 8);
  CounterStream rng(0, {});

  const PartialOutput p1 = abfp_dot(w, x, device(2, 1.0, 8, 8, 8), rng);
  EXPECT_EQ(p1.code, 32);
  EXPECT_DOUBLE_EQ(p1.value, 64.0 / 127.0);
  EXPECT_EQ(p1.scale, 0.5f);
  EXPECT_FALSE(p1.saturated);
  const std::vector<PartialOutput> one{p1};
  EXPECT_FLOAT_EQ(accumulate_f32(one, 1.0), 32.0f / 127.0f);

  const PartialOutput p4 = abfp_dot(w, x, device(2, 4.0, 8, 8, 8), rng);
  EXPECT_DOUBLE_EQ(p4.value, 252.0 / 127.0);
  const std::vector<PartialOutput> four{p4};
  EXPECT_NEAR(accumulate_f32(four, 4.0), 0.24803, 1e-5);

  const std::vector<float> ones{1.0f, 1.0f};
  const AbfpVector o = encode_vector(ones, 8);
  const PartialOutput ps = abfp_dot(o, o, device(2, 2.0, 8, 8, 8), rng);
  EXPECT_TRUE(ps.saturated);
  EXPECT_DOUBLE_EQ(ps.value, 2.0);
  const std::vector<PartialOutput> sat{ps};
  EXPECT_EQ(accumulate_f32(sat, 2.0), 1.0f);
}

TEST(AbfpDot, UsageErrors) {
  const std::vector<float> a{1, 2}, b{1, 2, 3};
  CounterStream rng(0, {});
  EXPECT_THROW(abfp_dot(encode_vector(a, 8), encode_vector(b, 8), device(2, 1, 8, 8, 8), rng), ShapeError);
  EXPECT_THROW(abfp_dot(encode_vector(a, 6), encode_vector(a, 8), device(2, 1, 8, 8, 8), rng), ShapeError);
}

TEST(Accumulate, Examples) {
  auto part = [](double v, float s) {
    PartialOutput p;
    p.value = v;
    p.scale = s;
    return p;
  };
  const std::vector<PartialOutput> a{part(0.5, 1.0f)};
  EXPECT_EQ(accumulate(a, 1.0).to_float(), 0.5f);
  const std::vector<PartialOutput> b{part(0.5, 1.0f), part(-0.5, 1.0f)};
  EXPECT_EQ(accumulate(b, 1.0).to_float(), 0.0f);
  const std::vector<PartialOutput> c(4, part(1.0, 1.0f));
  EXPECT_EQ(accumulate(c, 2.0).to_float(), 2.0f);
  EXPECT_THROW(accumulate(std::span<const PartialOutput>{}, 1.0), std::invalid_argument);
}

TEST(AbfpMatmul, ScalarExample) {
  const Matrix w(1, 1, 0.5f), x(1, 1, 0.5f);
  const Matrix y = abfp_matmul(w, x, device(1, 1.0, 8, 8, 8));
  EXPECT_NEAR(y(0, 0), 0.25, 0.25 * 1.0 / 127.0);
}

TEST(AbfpMatmul, IdentityWeightsReproduceGridInputs) {
  Matrix w(4, 4);
  for (int k = 0; k < 4; ++k) w(k, k) = 1.0f;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> code(-127, 127);
  for (int t = 0; t < 200; ++t) {
    Matrix x(4, 3);
    for (float& v : x.data()) v = static_cast<float>(code(rng)) / 127.0f;
    x(t % 4, t % 3) = 1.0f;  // keep column scales on a power of two
    const Matrix y = abfp_matmul(w, x, device(4, 1.0, 8, 8, 8));
    for (std::size_t c = 0; c < 3; ++c) {
      float scale = 0.0f;
      for (std::size_t r = 0; r < 4; ++r) scale = std::max(scale, std::abs(x(r, c)));
      const float bin = 4.0f / 127.0f * Bf16::ceil(scale).to_float();
      for (std::size_t r = 0; r < 4; ++r) ASSERT_LE(std::abs(y(r, c) - x(r, c)), bin);
    }
  }
}

TEST(AbfpMatmul, HighPrecisionLimit) {
  const Matrix w = random_matrix(32, 32, 7), x = random_matrix(32, 32, 8);
  const Matrix ref = matmul_f32(w, x);
  for (int n : {4, 8, 32}) {
    const Matrix y = abfp_matmul(w, x, device(n, 1.0, 16, 16, 16));
    EXPECT_LT(frobenius_rel(y, ref), 1e-3) << "n=" << n;
  }
}

TEST(AbfpMatmul, MatchesRationalOracle) {
  const auto rep = abfp::testing::gemm_oracle_trials(200, 21);
  EXPECT_EQ(rep.trials, 200);
  EXPECT_EQ(rep.mismatching_trials, 0);
}

TEST(AbfpMatmul, OracleLargerGainsAndWideOutputs) {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 100; ++t) {
    const int b = 2 + t % 5;
    const QuantSpec q = QuantSpec::make(b, b, 4 + t % 13);
    const int gain = 1 << (t % 5);
    const auto w = abfp::testing::random_dyadic(5, 7, b, rng);
    const auto x = abfp::testing::random_dyadic(7, 3, b, rng);
    const Matrix expected = abfp::testing::oracle_abfp_matmul(w, x, 3, gain, q);
    const Matrix got = abfp_matmul(w.to_matrix(), x.to_matrix(), DeviceConfig::make(3, gain, q));
    ASSERT_EQ(got, expected) << "trial " << t;
  }
}

TEST(AbfpMatmul, GainPrecisionBound) {
  std::mt19937_64 rng(9);
  std::normal_distribution<float> n(0.0f, 1.0f);
  const int tile = 8;
  for (double gain : {1.0, 2.0, 4.0, 8.0}) {
    const DeviceConfig cfg = device(tile, gain, 8, 8, 8);
    const double bound = tile * cfg.quant.delta_y() / (2 * gain);
    CounterStream s(0, {});
    int checked = 0;
    for (int t = 0; t < 5000; ++t) {
      std::vector<float> a(tile), b(tile);
      for (float& v : a) v = n(rng);
      for (float& v : b) v = n(rng);
      const AbfpVector w = encode_vector(a, 8), x = encode_vector(b, 8);
      double raw = 0.0;
      for (int k = 0; k < tile; ++k) raw += static_cast<double>(w.codes[k]) * x.codes[k];
      raw *= delta(8) * delta(8);
      if (std::abs(gain * raw) > tile) continue;
      const PartialOutput p = abfp_dot(w, x, cfg, s);
      ASSERT_LE(std::abs(p.value / gain - raw), bound * (1 + 1e-12));
      ++checked;
    }
    EXPECT_GT(checked, 1000);
  }
}

TEST(AbfpMatmul, SaturationMonotoneInGain) {
  std::mt19937_64 rng(10);
  std::normal_distribution<float> n(0.0f, 1.0f);
  CounterStream s(0, {});
  for (int t = 0; t < 3000; ++t) {
    std::vector<float> a(4), b(4);
    for (float& v : a) v = n(rng);
    for (float& v : b) v = n(rng);
    const AbfpVector w = encode_vector(a, 6), x = encode_vector(b, 6);
    bool was = false;
    for (double g : {1.0, 1.5, 2.0, 4.0, 8.0, 16.0}) {
      const bool sat = abfp_dot(w, x, device(4, g, 6, 6, 8), s).saturated;
      ASSERT_TRUE(!was || sat);
      was = sat;
    }
  }
}

TEST(AbfpMatmul, SingleTileIdentity) {
  const Matrix w = random_matrix(3, 5, 11), x = random_matrix(5, 2, 12);
  const DeviceConfig cfg = device(8, 2.0, 8, 8, 8);
  const Matrix y = abfp_matmul(w, x, cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t b = 0; b < 2; ++b) {
      std::vector<float> col(5);
      for (std::size_t k = 0; k < 5; ++k) col[k] = x(k, b);
      CounterStream s(0, {});
      const PartialOutput p = abfp_dot(encode_vector(w.row(i), 8, 8), encode_vector(col, 8, 8), cfg, s);
      ASSERT_EQ(y(i, b), static_cast<float>(p.value * p.scale / 2.0));
    }
  }
}

TEST(AbfpMatmul, DeterministicAcrossThreadCounts) {
  const Matrix w = random_matrix(37, 50, 13), x = random_matrix(50, 9, 14);
  const DeviceConfig cfg = device(8, 4.0, 8, 8, 8, 1.0, 99);
  const Matrix y1 = abfp_matmul(w, x, cfg, {3, 1});
  for (unsigned threads : {2u, 3u, 8u}) EXPECT_EQ(abfp_matmul(w, x, cfg, {3, threads}), y1);
  EXPECT_EQ(abfp_matmul(w, x, cfg, {3, 1}), y1);
  DeviceConfig other = cfg;
  other.seed = 100;
  EXPECT_NE(abfp_matmul(w, x, other, {3, 1}), y1);
  EXPECT_NE(abfp_matmul(w, x, cfg, {4, 1}), y1);
  DeviceConfig quiet = cfg;
  quiet.noise = NoiseModel{0.0};
  EXPECT_NE(abfp_matmul(w, x, quiet, {3, 1}), y1);
}

TEST(AbfpMatmul, EncodedAndMultiMatchPlainCalls) {
  const Matrix w = random_matrix(20, 33, 15), x = random_matrix(33, 6, 16);
  std::vector<DeviceConfig> cfgs;
  for (double g : {1.0, 2.0, 16.0}) {
    for (double noise : {0.0, 1.0}) cfgs.push_back(device(8, g, 8, 8, 6, noise, 5));
  }
  const auto ew = EncodedOperand::rows_of(w, 8, 8);
  const auto ex = EncodedOperand::cols_of(x, 8, 8);
  EXPECT_EQ(ew.tiles(), 5u);
  EXPECT_EQ(ex.vectors(), 6u);
  const auto multi = abfp_matmul_multi(ew, ex, cfgs, {2, 1});
  ASSERT_EQ(multi.size(), cfgs.size());
  for (std::size_t k = 0; k < cfgs.size(); ++k) {
    EXPECT_EQ(multi[k], abfp_matmul(w, x, cfgs[k], {2, 1}));
    EXPECT_EQ(abfp_matmul(ew, ex, cfgs[k], {2, 1}), multi[k]);
  }
}

TEST(AbfpMatmul, ZeroInputGivesZero) {
  const Matrix w = random_matrix(4, 9, 17);
  const Matrix y = abfp_matmul(w, Matrix(9, 3), device(4, 2.0, 8, 8, 8, 1.0, 3));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(AbfpMatmul, ShapeMismatchThrows) {
  EXPECT_THROW(abfp_matmul(Matrix(2, 3), Matrix(4, 2), device(4, 1, 8, 8, 8)), ShapeError);
  const auto ew = EncodedOperand::rows_of(Matrix(2, 4, 1.0f), 4, 6);
  const auto ex = EncodedOperand::cols_of(Matrix(4, 2, 1.0f), 4, 8);
  EXPECT_THROW(abfp_matmul(ew, ex, device(4, 1, 8, 8, 8)), ShapeError);
}

TEST(AbfpMatmul, CountsCoreCalls) {
  const auto before = core_call_count();
  abfp_matmul(Matrix(2, 2, 1.0f), Matrix(2, 2, 1.0f), device(2, 1, 8, 8, 8));
  EXPECT_GT(core_call_count(), before);
}
