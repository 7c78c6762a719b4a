// Acceptance suite: prints one PASS/FAIL line per criterion, exits nonzero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "abfp/abfp.hpp"
#include "abfp/analysis.hpp"
#include "abfp/data.hpp"
#include "abfp/finetune.hpp"
#include "abfp/nn.hpp"
#include "abfp/numerics.hpp"
#include "cli.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace abfp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome quantizer_oracle() {
  const auto t0 = Clock::now();
  const auto s = abfp::testing::quantizer_oracle_sweep(2, 8, 20000, 11);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = s.mismatches == 0 && s.idempotence_violations == 0 && s.bound_violations == 0 && secs < 1.0;
  o.detail = std::to_string(s.checked) + " points, mismatches=" + std::to_string(s.mismatches) +
             " idempotence=" + std::to_string(s.idempotence_violations) +
             " bound=" + std::to_string(s.bound_violations) + fmt(", %.3f s", secs);
  return o;
}

Outcome gemm_oracle() {
  const auto rep = abfp::testing::gemm_oracle_trials(200, 12);
  Outcome o;
  o.pass = rep.trials == 200 && rep.mismatching_trials == 0;
  o.detail = std::to_string(rep.trials) + " trials, " + std::to_string(rep.elements) +
             " elements, mismatching trials=" + std::to_string(rep.mismatching_trials);
  return o;
}

Outcome noise_model() {
  const std::size_t draws = 1'000'000;
  const int n = 128;
  const double dy = delta(8);
  CounterStream rng(13, {0, 0, 0, 0});
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    const double e = sample_error(rng, n, dy, NoiseModel{1.0});
    const double d = e - mean;
    mean += d / static_cast<double>(k + 1);
    m2 += d * (e - mean);
  }
  const double var = m2 / static_cast<double>(draws - 1);
  const double expected = std::pow(128.0 / 127.0, 2) / 12.0;
  const double rel = std::abs(var / expected - 1.0);
  const double se = std::sqrt(var / static_cast<double>(draws));
  Outcome o;
  o.pass = rel < 0.01 && std::abs(mean) < 3.0 * se;
  o.detail = fmt("var=%.6g", var) + fmt(" expected=%.6g", expected) + fmt(" rel.err=%.2e", rel) +
             fmt(" mean=%.3e", mean) + fmt(" (3se=%.3e)", 3 * se);
  return o;
}

Outcome appendix_reproduction() {
  AppendixConfig cfg;
  cfg.seed = 14;
  cfg.threads = std::max(1u, std::thread::hardware_concurrency());
  const auto t0 = Clock::now();
  const AppendixReport r = appendix_experiment(cfg);
  const double secs = seconds_since(t0);
  const double s8g1 = r.mean_std(8, 1, 0), s8g16 = r.mean_std(8, 16, 0);
  const double s128g8 = r.mean_std(128, 8, 0), s128g1 = r.mean_std(128, 1, 0);
  const bool a = s8g1 < s8g16;
  const bool b = s128g8 < s128g1;
  int noisy_cells = 0;
  int total_cells = 0;
  std::string worst;
  double worst_ratio = 1e300;
  for (int t : cfg.tiles) {
    for (double g : cfg.gains) {
      const double on = r.mean_variance(t, g, 1.0), off = r.mean_variance(t, g, 0.0);
      ++total_cells;
      if (on > off) ++noisy_cells;
      if (on / off < worst_ratio) {
        worst_ratio = on / off;
        worst = "tile " + std::to_string(t) + " G=" + fmt("%g", g);
      }
    }
  }
  const bool c = noisy_cells == total_cells;
  Outcome o;
  o.pass = a && b && c;
  o.detail = std::string("(a) ") + (a ? "ok" : "FAIL") + fmt(" std t8 G1=%.4g", s8g1) +
             fmt(" < G16=%.4g", s8g16) + "; (b) " + (b ? "ok" : "FAIL") +
             fmt(" std t128 G8=%.4g", s128g8) + fmt(" < G1=%.4g", s128g1) + "; (c) " +
             (c ? "ok " : "FAIL ") + std::to_string(noisy_cells) + "/" + std::to_string(total_cells) +
             " cells var(noise) > var(no noise), smallest ratio " + fmt("%.6f", worst_ratio) + " at " +
             worst + fmt("; %.1f s", secs);
  return o;
}

Outcome output_bits() {
  const double bits = lossless_output_bits(8, 8, 128);
  Outcome o;
  o.pass = bits == 22.0;
  o.detail = fmt("b_W + b_X + log2(n) - 1 = %g", bits);
  return o;
}

Outcome gradient_checks() {
  const auto lin = abfp::testing::grad_check_layer(LayerKind::Linear, 50, 61);
  const auto conv = abfp::testing::grad_check_layer(LayerKind::Conv2d, 50, 62);
  const auto relu = abfp::testing::grad_check_layer(LayerKind::Relu, 50, 63);
  const auto ce = abfp::testing::grad_check_softmax_ce(50, 64);
  const double worst =
      std::max({lin.worst_relative, conv.worst_relative, relu.worst_relative, ce.worst_relative});
  Outcome o;
  o.pass = worst <= 1e-4 && lin.instances == 50 && conv.instances == 50 && relu.instances == 50 &&
           ce.instances == 50;
  o.detail = fmt("worst relative: linear %.2e", lin.worst_relative) +
             fmt(", conv2d %.2e", conv.worst_relative) + fmt(", relu %.2e", relu.worst_relative) +
             fmt(", softmax-ce %.2e", ce.worst_relative) + " (50 instances each)";
  return o;
}

Outcome dnf_sampler() {
  std::mt19937_64 rng(71);
  double min_p = 1.0;
  int passed = 0;
  for (int h = 0; h < 20; ++h) {
    const int bins = std::uniform_int_distribution<int>(2, 100)(rng);
    std::vector<double> edges{std::normal_distribution<double>(0.0, 1.0)(rng)};
    for (int k = 0; k < bins; ++k) {
      edges.push_back(edges.back() + std::uniform_real_distribution<double>(0.01, 1.0)(rng));
    }
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(bins));
    for (auto& c : counts) {
      c = std::uniform_real_distribution<double>(0, 1)(rng) < 0.2
              ? 0
              : std::uniform_int_distribution<std::uint64_t>(1, 500)(rng);
    }
    const Histogram hist(edges, counts);
    CounterStream stream(72, {static_cast<std::uint64_t>(h), 0, 0, 0});
    const std::size_t draws = 100'000;
    const auto xs = sample_dnf_noise(hist, draws, stream);
    std::vector<double> observed(counts.size(), 0.0);
    for (float x : xs) {
      auto k = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), double{x}) -
                                        edges.begin());
      k = std::clamp<std::size_t>(k, 1, counts.size()) - 1;
      observed[k] += 1.0;
    }
    double chi2 = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const double expected = hist.probabilities()[k] * static_cast<double>(draws);
      chi2 += (observed[k] - expected) * (observed[k] - expected) / expected;
    }
    const double p = abfp::testing::chi_square_pvalue(chi2, static_cast<double>(counts.size() - 1));
    min_p = std::min(min_p, p);
    if (p > 0.01) ++passed;
  }
  Outcome o;
  o.pass = passed == 20;
  o.detail = std::to_string(passed) + "/20 histograms pass, smallest p-value " + fmt("%.4f", min_p);
  return o;
}

Outcome end_to_end_recovery() {
  const auto t0 = Clock::now();
  const Dataset data = make_blobs(BlobSpec{512, 16, 4.0, 81});
  const std::vector<std::size_t> hidden{32};
  TrainConfig tc;
  tc.seed = 82;
  const Model trained = train_float32(make_mlp(16, hidden, 2, 83), data, tc).model;
  const double f32 = evaluate_accuracy(trained, data, ExecutionMode::float32());

  const DeviceConfig dev = DeviceConfig::make(4, 8.0, QuantSpec::make(6, 6, 8), NoiseModel{1.0}, 84);
  const ExecutionMode abfp_mode = ExecutionMode::abfp(dev);
  const double before = evaluate_accuracy(trained, data, abfp_mode);

  const auto tq = Clock::now();
  const TrainResult qat = train_qat(trained, data, dev, tc);
  const double qat_secs = seconds_since(tq);
  const double after_qat = evaluate_accuracy(qat.model, data, abfp_mode);

  std::vector<std::size_t> first(128);
  std::iota(first.begin(), first.end(), std::size_t{0});
  const DnfPlan plan = capture_dnf_plan(trained, data.subset(first).features, dev);
  const std::uint64_t calls_before = core_call_count();
  const auto td = Clock::now();
  const TrainResult dnf = train_dnf(trained, data, plan, tc);
  const double dnf_secs = seconds_since(td);
  const std::uint64_t dnf_calls = core_call_count() - calls_before;
  const double after_dnf = evaluate_accuracy(dnf.model, data, abfp_mode);

  const double steps = static_cast<double>(tc.epochs) * std::ceil(512.0 / static_cast<double>(tc.batch));
  Outcome o;
  o.pass = f32 >= 0.95 && before < f32 && after_qat >= before && after_dnf >= before &&
           dnf_calls == 0 && tc.epochs <= 20 && seconds_since(t0) < 120.0;
  o.detail = fmt("float32 %.4f", f32) + fmt(", ABFP before %.4f", before) +
             fmt(", after QAT %.4f", after_qat) + fmt(", after DNF %.4f", after_dnf) +
             "; core calls inside DNF training = " + std::to_string(dnf_calls) +
             fmt("; per-step QAT %.3f ms", 1e3 * qat_secs / steps) +
             fmt(" vs DNF %.3f ms", 1e3 * dnf_secs / steps);
  return o;
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] =
        std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  return files;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("abfp_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::string failure;
  auto run_all = [&](const fs::path& dir, const std::string& threads) {
    fs::create_directories(dir);
    auto p = [&](const char* name) { return (dir / name).string(); };
    const std::vector<std::vector<std::string>> commands{
        {"train-float32", "--out", p("m.ckpt"), "--epochs", "5", "--seed", "3"},
        {"sweep", "--checkpoint", p("m.ckpt"), "--tiles", "4,8", "--gains", "1,8", "--bits",
         "6/6/8,8/8/8", "--noise-lsb", "0,1", "--reps", "2", "--seed", "4", "--out", p("sweep.csv")},
        {"appendix-error", "--tiles", "8,32", "--gains", "1,4", "--reps", "2", "--out-features", "48",
         "--in-features", "96", "--tokens", "40", "--histograms", "--seed", "5", "--out", p("appendix.csv")},
        {"profile", "--checkpoint", p("m.ckpt"), "--tiles", "4", "--gains", "1,16", "--noise-lsb", "1",
         "--seed", "6", "--out", p("profile.csv")},
        {"finetune", "--checkpoint", p("m.ckpt"), "--method", "qat", "--epochs", "3", "--seed", "7",
         "--out", p("qat.ckpt")},
        {"finetune", "--checkpoint", p("m.ckpt"), "--method", "dnf", "--epochs", "3", "--seed", "8",
         "--plan-out", p("plan.json"), "--out", p("dnf.ckpt")},
    };
    for (auto args : commands) {
      args.push_back("--threads");
      args.push_back(threads);
      std::ostringstream out, err;
      if (cli::run(args, out, err) != 0) failure = args[0] + ": " + err.str();
    }
    return read_tree(dir);
  };
  const auto a = run_all(root / "a", "1");
  const auto b = run_all(root / "b", "1");
  const auto c = run_all(root / "c", "4");
  fs::remove_all(root);
  Outcome o;
  o.pass = failure.empty() && a.size() >= 10 && a == b && a == c;
  std::size_t bytes = 0;
  for (const auto& [k, v] : a) bytes += v.size();
  o.detail = failure.empty() ? std::to_string(a.size()) + " artifacts (" + std::to_string(bytes) +
                                   " bytes) across 5 subcommands; rerun identical: " +
                                   (a == b ? "yes" : "no") +
                                   ", threads 1 vs 4 identical: " + (a == c ? "yes" : "no")
                             : "command failed: " + failure;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"quantizer oracle", quantizer_oracle},
      {"ABFP GEMM oracle", gemm_oracle},
      {"noise model statistics", noise_model},
      {"appendix error-distribution reproduction", appendix_reproduction},
      {"output-bit formula", output_bits},
      {"gradient checks", gradient_checks},
      {"DNF sampler fidelity", dnf_sampler},
      {"end-to-end recovery", end_to_end_recovery},
      {"CLI determinism", cli_determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
