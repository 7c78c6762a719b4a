#include "abfp/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace abfp {

namespace {

constexpr std::uint64_t kDnfTag = 0xD1F;
constexpr std::uint64_t kQatTag = 0x9A7;
constexpr std::uint64_t kEvalTag = 0xE7A1;

using StepFn = std::function<LossResult(Model&, const Dataset&, std::uint64_t step, GradientSet&)>;

TrainResult run_epochs(Model model, const Dataset& data, const TrainConfig& cfg, const StepFn& step_fn,
                       const EpochCallback& on_epoch) {
  if (cfg.epochs < 1) throw std::invalid_argument("training needs epochs >= 1");
  if (cfg.batch < 1) throw std::invalid_argument("training needs batch >= 1");
  if (!(cfg.sgd.lr > 0.0f)) throw std::invalid_argument("learning rate must be > 0");
  model.validate();
  TrainResult result;
  SgdOptimizer opt(cfg.sgd);
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(data.size(), cfg.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch);
      const Dataset batch = data.subset(std::span(order).subspan(begin, end - begin));
      GradientSet grads;
      const LossResult loss = step_fn(model, batch, step++, grads);
      opt.step(model, grads);
      loss_sum += loss.loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / static_cast<double>(std::max<std::size_t>(seen, 1));
    if (on_epoch) on_epoch(model, rec);
    result.log.push_back(rec);
  }
  result.model = std::move(model);
  return result;
}

LossResult forward_backward(const Model& model, const Dataset& batch, const ExecutionMode& mode,
                            const OutputHook& hook, GradientSet& grads) {
  const ForwardRecord rec = forward(model, batch.features, mode, hook);
  LossResult loss = loss_softmax_ce(rec.output, batch.labels);
  grads = backward_ste(model, rec, loss.grad);
  return loss;
}

}  // namespace

const char* to_string(FinetuneMethod m) {
  switch (m) {
    case FinetuneMethod::Float32: return "float32";
    case FinetuneMethod::Qat: return "qat";
    case FinetuneMethod::Dnf: return "dnf";
  }
  return "unknown";
}

FinetuneMethod parse_method(const std::string& name) {
  if (name == "float32") return FinetuneMethod::Float32;
  if (name == "qat") return FinetuneMethod::Qat;
  if (name == "dnf") return FinetuneMethod::Dnf;
  throw std::invalid_argument("unknown finetune method '" + name + "' (expected qat, dnf or float32)");
}

LayerSelection LayerSelection::parse(const std::string& text) {
  if (text == "all") return all();
  std::string digits = text;
  if (digits.rfind("top-", 0) == 0) {
    digits = digits.substr(4);
  } else if (digits.rfind("top", 0) == 0) {
    digits = digits.substr(3);
  }
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw std::invalid_argument("layer selection must be 'all' or 'top-<k>', got '" + text + "'");
  }
  const auto k = static_cast<std::size_t>(std::stoull(digits));
  if (k == 0) throw std::invalid_argument("layer selection top-k needs k >= 1");
  return top_k(k);
}

std::string LayerSelection::to_string() const {
  return kind == Kind::All ? "all" : "top-" + std::to_string(k);
}

std::vector<std::size_t> DnfPlan::selected_layers() const {
  std::vector<std::size_t> out;
  for (const auto& l : layers) {
    if (l.selected) out.push_back(l.layer);
  }
  return out;
}

DnfPlan DnfPlan::zero_noise(const Model& model) {
  DnfPlan plan;
  for (std::size_t i : model.matmul_layers()) {
    plan.layers.push_back({i, model.layers()[i].name, 0.0, true, Histogram::point_mass(0.0)});
  }
  return plan;
}

DnfPlan capture_dnf_plan(const Model& model, const Matrix& batch, const DeviceConfig& cfg, int bins,
                         LayerSelection selection, unsigned threads) {
  DnfPlan plan;
  plan.config = cfg;
  for (auto& d : layer_deltas(model, batch, cfg, threads)) {
    LayerNoisePlan lp;
    lp.layer = d.layer;
    lp.name = d.name;
    lp.std = summary_stats(d.delta.data()).std;
    lp.histogram = build_histogram(d.delta.data(), bins);
    plan.layers.push_back(std::move(lp));
  }
  if (selection.kind == LayerSelection::Kind::All) {
    for (auto& l : plan.layers) l.selected = true;
  } else {
    std::vector<std::size_t> order(plan.layers.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Ties keep layer order.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return plan.layers[a].std > plan.layers[b].std;
    });
    for (std::size_t k = 0; k < std::min(selection.k, order.size()); ++k) {
      plan.layers[order[k]].selected = true;
    }
  }
  return plan;
}

std::vector<float> sample_dnf_noise(const Histogram& hist, std::size_t count, CounterStream& rng) {
  const auto& p = hist.probabilities();
  const auto& edges = hist.edges();
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  std::vector<float> out(count);
  for (float& v : out) {
    const double u = rng.uniform() * cdf.back();
    auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    k = std::min(k, p.size() - 1);
    const double lo = edges[k];
    const double hi = edges[k + 1];
    v = static_cast<float>(lo + (hi - lo) * rng.uniform());
  }
  return out;
}

TrainResult train_float32(Model model, const Dataset& data, const TrainConfig& cfg,
                          const EpochCallback& on_epoch) {
  const ExecutionMode mode = ExecutionMode::float32();
  return run_epochs(
      std::move(model), data, cfg,
      [&](Model& m, const Dataset& batch, std::uint64_t, GradientSet& grads) {
        return forward_backward(m, batch, mode, {}, grads);
      },
      on_epoch);
}

TrainResult train_dnf(Model model, const Dataset& data, const DnfPlan& plan, const TrainConfig& cfg,
                      const EpochCallback& on_epoch) {
  std::vector<const LayerNoisePlan*> by_layer(model.layers().size(), nullptr);
  for (const auto& l : plan.layers) {
    if (l.layer >= by_layer.size() || !model.layers()[l.layer].has_matmul()) {
      throw std::invalid_argument("DNF plan refers to layer " + std::to_string(l.layer) +
                                  " which is not a matmul layer of this model");
    }
    if (l.selected) by_layer[l.layer] = &l;
  }
  const ExecutionMode mode = ExecutionMode::float32();
  return run_epochs(
      std::move(model), data, cfg,
      [&](Model& m, const Dataset& batch, std::uint64_t step, GradientSet& grads) {
        const OutputHook add_noise = [&](std::size_t layer, Matrix& y) {
          const LayerNoisePlan* lp = by_layer[layer];
          if (lp == nullptr) return;
          CounterStream rng(cfg.seed, {kDnfTag, static_cast<std::uint32_t>(step),
                                       static_cast<std::uint32_t>(layer), 0});
          const auto xi = sample_dnf_noise(lp->histogram, y.size(), rng);
          for (std::size_t k = 0; k < y.size(); ++k) y.data()[k] += xi[k];
        };
        return forward_backward(m, batch, mode, add_noise, grads);
      },
      on_epoch);
}

TrainResult train_qat(Model model, const Dataset& data, const DeviceConfig& device,
                      const TrainConfig& cfg, const EpochCallback& on_epoch) {
  device.validate();
  return run_epochs(
      std::move(model), data, cfg,
      [&](Model& m, const Dataset& batch, std::uint64_t step, GradientSet& grads) {
        DeviceConfig pass = device;
        pass.seed = combine_seed(device.seed ^ kQatTag, step);
        return forward_backward(m, batch, ExecutionMode::abfp(pass), {}, grads);
      },
      on_epoch);
}

double evaluate_accuracy(const Model& model, const Dataset& data, const ExecutionMode& mode,
                         std::size_t batch) {
  if (data.size() == 0) throw std::invalid_argument("accuracy of an empty dataset");
  if (batch == 0) batch = data.size();
  std::size_t correct = 0;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::uint64_t chunk = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch, ++chunk) {
    const std::size_t end = std::min(data.size(), begin + batch);
    const Dataset part = data.subset(std::span(idx).subspan(begin, end - begin));
    ExecutionMode m = mode;
    if (m.kind == ExecutionMode::Kind::Abfp) m.device.seed = combine_seed(mode.device.seed ^ kEvalTag, chunk);
    const auto pred = argmax_rows(forward(model, part.features, m).output);
    for (std::size_t k = 0; k < pred.size(); ++k) correct += pred[k] == part.labels[k] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace abfp
