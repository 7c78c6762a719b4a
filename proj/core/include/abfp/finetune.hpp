#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "abfp/abfp.hpp"
#include "abfp/analysis.hpp"
#include "abfp/data.hpp"
#include "abfp/nn.hpp"
#include "abfp/rng.hpp"

namespace abfp {

enum class FinetuneMethod { Float32, Qat, Dnf };

const char* to_string(FinetuneMethod m);
/// "float32" | "qat" | "dnf"; throws std::invalid_argument otherwise.
FinetuneMethod parse_method(const std::string& name);

/// Which matmul layers receive differential noise during DNF.
struct LayerSelection {
  enum class Kind { All, TopK };
  Kind kind = Kind::All;
  std::size_t k = 0;

  static LayerSelection all() { return {}; }
  static LayerSelection top_k(std::size_t k) { return {Kind::TopK, k}; }
  /// "all" or "top-<k>" / "top<k>" / "<k>".
  static LayerSelection parse(const std::string& text);
  [[nodiscard]] std::string to_string() const;
};

struct TrainConfig {
  int epochs = 20;
  std::size_t batch = 32;
  SgdParams sgd{0.05f, 0.9f, 0.0f};
  std::uint64_t seed = 1;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;            // mean training loss over the epoch
  double abfp_accuracy = -1.0;  // filled in by callers that evaluate; < 0 if not evaluated
};

/// Called after every epoch with the current parameters.
using EpochCallback = std::function<void(const Model&, EpochRecord&)>;

struct TrainResult {
  Model model;
  std::vector<EpochRecord> log;
};

/// Per-layer differential-noise histogram captured once before finetuning.
struct LayerNoisePlan {
  std::size_t layer = 0;
  std::string name;
  double std = 0.0;
  bool selected = false;
  Histogram histogram;

  friend bool operator==(const LayerNoisePlan&, const LayerNoisePlan&) = default;
};

struct DnfPlan {
  DeviceConfig config;
  std::vector<LayerNoisePlan> layers;

  [[nodiscard]] std::vector<std::size_t> selected_layers() const;
  /// Every matmul layer of `model` with a point-mass-at-zero histogram.
  static DnfPlan zero_noise(const Model& model);

  friend bool operator==(const DnfPlan&, const DnfPlan&) = default;
};

/// Histograms (`bins` bins, +0.5 smoothing) of each matmul layer's
/// ABFP - float32 output difference on one batch, plus the layer selection
/// (all, or the k layers with the largest delta std).
DnfPlan capture_dnf_plan(const Model& model, const Matrix& batch, const DeviceConfig& cfg,
                         int bins = 100, LayerSelection selection = LayerSelection::all(),
                         unsigned threads = 1);

/// `count` independent draws: bin by inverse CDF, then uniform within the bin.
std::vector<float> sample_dnf_noise(const Histogram& hist, std::size_t count, CounterStream& rng);

/// Mini-batch SGD on the float32 forward pass (activations rounded to Bf16).
TrainResult train_float32(Model model, const Dataset& data, const TrainConfig& cfg,
                          const EpochCallback& on_epoch = {});

/// Float32 forward with fresh histogram noise added to each selected layer's
/// output on every pass; straight backward (the noise is a constant).
/// Never calls into the ABFP core.
TrainResult train_dnf(Model model, const Dataset& data, const DnfPlan& plan, const TrainConfig& cfg,
                      const EpochCallback& on_epoch = {});

/// Forward through the simulated device (fresh ADC noise each pass),
/// straight-through backward.
TrainResult train_qat(Model model, const Dataset& data, const DeviceConfig& device,
                      const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Fraction of correctly classified samples. In Abfp mode the device seed is
/// re-derived per evaluation batch so batches draw independent noise.
double evaluate_accuracy(const Model& model, const Dataset& data, const ExecutionMode& mode,
                         std::size_t batch = 256);

}  // namespace abfp
