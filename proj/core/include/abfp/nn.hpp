#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "abfp/abfp.hpp"
#include "abfp/im2col.hpp"
#include "abfp/matrix.hpp"

namespace abfp {

enum class LayerKind : std::uint8_t { Linear = 1, Conv2d = 2, Relu = 3 };

const char* to_string(LayerKind kind);

/// One layer of a toy network. Activations are batches stored as
/// (batch x features) matrices; a conv layer reads its features as a
/// C x H x W image and writes out_channels x out_h x out_w.
struct Layer {
  std::string name;
  LayerKind kind = LayerKind::Relu;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  ConvGeometry conv;             // Conv2d only
  std::size_t out_channels = 0;  // Conv2d only
  Matrix weight;                 // Linear: out x in; Conv2d: out_channels x (C*kh*kw)
  std::vector<float> bias;       // one per output unit / channel

  [[nodiscard]] bool has_matmul() const { return kind != LayerKind::Relu; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

class Model {
 public:
  Model() = default;
  explicit Model(std::size_t input_features) : input_features_(input_features) {}

  Model& add_linear(std::string name, std::size_t out_features);
  Model& add_conv2d(std::string name, std::size_t channels, std::size_t height, std::size_t width,
                    std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                    std::size_t pad = 0);
  Model& add_relu(std::string name);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases.
  void init_parameters(std::uint64_t seed);

  /// Throws ShapeError if consecutive layer shapes or parameter sizes disagree.
  void validate() const;

  [[nodiscard]] std::size_t input_features() const { return input_features_; }
  [[nodiscard]] std::size_t output_features() const;
  [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  [[nodiscard]] std::vector<std::size_t> matmul_layers() const;

  friend bool operator==(const Model&, const Model&) = default;

 private:
  std::size_t input_features_ = 0;
  std::vector<Layer> layers_;
};

/// `in -> hidden[0] -> relu -> ... -> classes` MLP with initialized weights.
Model make_mlp(std::size_t inputs, std::span<const std::size_t> hidden, std::size_t classes,
               std::uint64_t seed);

/// How matmul-bearing layers execute. Nonlinearities and losses always run in
/// float32. With round_activations, every layer output (and the network input)
/// is rounded to Bf16, in both modes.
struct ExecutionMode {
  enum class Kind { Float32, Abfp };
  Kind kind = Kind::Float32;
  DeviceConfig device;
  bool round_activations = true;
  unsigned threads = 1;

  static ExecutionMode float32() { return {}; }
  static ExecutionMode abfp(const DeviceConfig& device) {
    ExecutionMode m;
    m.kind = Kind::Abfp;
    m.device = device;
    return m;
  }
};

/// Per-layer inputs as seen by each layer, plus the network output.
struct ForwardRecord {
  std::vector<Matrix> inputs;
  Matrix output;
};

/// Called on each matmul layer's output (bias added, before Bf16 rounding).
using OutputHook = std::function<void(std::size_t layer_index, Matrix& output)>;

ForwardRecord forward(const Model& model, const Matrix& x, const ExecutionMode& mode,
                      const OutputHook& hook = {});

/// One layer applied to a batch, without activation rounding. In Abfp mode
/// the layer index is the stream coordinate `layer` for its noise draws.
Matrix layer_forward(const Layer& layer, std::size_t layer_index, const Matrix& x,
                     const ExecutionMode& mode);

struct LayerGrad {
  Matrix weight;
  std::vector<float> bias;
};

struct GradientSet {
  std::vector<LayerGrad> layers;  // empty Matrix for parameterless layers
  Matrix input;
};

/// Straight-through backward pass: quantization, gain clamp and noise are
/// treated as identity, so gradients are those of the float32 layers
/// evaluated at the recorded activations, accumulated in float32.
GradientSet backward_ste(const Model& model, const ForwardRecord& record, const Matrix& upstream);

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Matrix grad;        // d loss / d logits, (softmax - onehot) / batch
};

LossResult loss_softmax_ce(const Matrix& logits, std::span<const int> labels);

struct SgdParams {
  float lr = 0.1f;
  float momentum = 0.0f;
  float weight_decay = 0.0f;
};

/// Classical momentum: v = mu*v + (g + wd*w); w -= lr*v.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdParams params) : params_(params) {}
  void step(Model& model, const GradientSet& grads);
  [[nodiscard]] const SgdParams& params() const { return params_; }

 private:
  SgdParams params_;
  std::vector<LayerGrad> velocity_;
};

/// Predicted class per row of `logits` (first maximum wins).
std::vector<int> argmax_rows(const Matrix& logits);

}  // namespace abfp
