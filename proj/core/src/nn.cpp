#include "abfp/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "abfp/error.hpp"
#include "abfp/rng.hpp"

namespace abfp {

namespace {

constexpr std::uint64_t kInitTag = 0x1A17;

std::size_t last_features(const std::vector<Layer>& layers, std::size_t input) {
  return layers.empty() ? input : layers.back().out_features;
}

// (B x in) activations -> (out x B) product -> (B x out) plus bias.
Matrix product(const Matrix& weight, const Matrix& operand, std::size_t layer_index,
               const ExecutionMode& mode) {
  if (mode.kind == ExecutionMode::Kind::Float32) return matmul_f32(weight, operand);
  MatmulOptions opts;
  opts.layer_id = layer_index;
  opts.threads = mode.threads;
  return abfp_matmul(weight, operand, mode.device, opts);
}

Matrix linear_forward(const Layer& l, std::size_t index, const Matrix& x, const ExecutionMode& mode) {
  const Matrix y = product(l.weight, x.transposed(), index, mode);
  Matrix out(x.rows(), l.out_features);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    for (std::size_t o = 0; o < l.out_features; ++o) out(b, o) = y(o, b) + l.bias[o];
  }
  return out;
}

// All samples' patches side by side: (C*kh*kw) x (B*out_h*out_w).
Matrix batch_im2col(const Layer& l, const Matrix& x) {
  const std::size_t hw = l.conv.out_h() * l.conv.out_w();
  Matrix cols(l.conv.patch_size(), x.rows() * hw);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const Matrix c = im2col(x.row(b), l.conv);
    for (std::size_t r = 0; r < c.rows(); ++r) {
      std::copy(c.row(r).begin(), c.row(r).end(), cols.row(r).begin() + static_cast<std::ptrdiff_t>(b * hw));
    }
  }
  return cols;
}

Matrix conv_forward(const Layer& l, std::size_t index, const Matrix& x, const ExecutionMode& mode) {
  const std::size_t hw = l.conv.out_h() * l.conv.out_w();
  const Matrix y = product(l.weight, batch_im2col(l, x), index, mode);
  Matrix out(x.rows(), l.out_features);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    for (std::size_t o = 0; o < l.out_channels; ++o) {
      for (std::size_t p = 0; p < hw; ++p) out(b, o * hw + p) = y(o, b * hw + p) + l.bias[o];
    }
  }
  return out;
}

void check_input(const Layer& l, const Matrix& x) {
  if (x.cols() != l.in_features) {
    throw ShapeError("layer '" + l.name + "' expects " + std::to_string(l.in_features) +
                     " features, got " + std::to_string(x.cols()));
  }
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Linear: return "linear";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
  }
  return "unknown";
}

Model& Model::add_linear(std::string name, std::size_t out_features) {
  Layer l;
  l.name = std::move(name);
  l.kind = LayerKind::Linear;
  l.in_features = last_features(layers_, input_features_);
  l.out_features = out_features;
  l.weight = Matrix(out_features, l.in_features);
  l.bias.assign(out_features, 0.0f);
  layers_.push_back(std::move(l));
  return *this;
}

Model& Model::add_conv2d(std::string name, std::size_t channels, std::size_t height,
                         std::size_t width, std::size_t out_channels, std::size_t kernel,
                         std::size_t stride, std::size_t pad) {
  Layer l;
  l.name = std::move(name);
  l.kind = LayerKind::Conv2d;
  l.conv = ConvGeometry{channels, height, width, kernel, kernel, stride, stride, pad, pad};
  l.in_features = last_features(layers_, input_features_);
  if (l.in_features != l.conv.input_size()) {
    throw ShapeError("conv layer '" + l.name + "' image size does not match its input features");
  }
  l.out_channels = out_channels;
  l.out_features = out_channels * l.conv.out_h() * l.conv.out_w();
  l.weight = Matrix(out_channels, l.conv.patch_size());
  l.bias.assign(out_channels, 0.0f);
  layers_.push_back(std::move(l));
  return *this;
}

Model& Model::add_relu(std::string name) {
  Layer l;
  l.name = std::move(name);
  l.kind = LayerKind::Relu;
  l.in_features = l.out_features = last_features(layers_, input_features_);
  layers_.push_back(std::move(l));
  return *this;
}

void Model::init_parameters(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = layers_[i];
    if (!l.has_matmul()) continue;
    CounterStream rng(seed, {kInitTag, static_cast<std::uint32_t>(i), 0, 0});
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    for (float& w : l.weight.data()) w = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    std::fill(l.bias.begin(), l.bias.end(), 0.0f);
  }
}

void Model::validate() const {
  std::size_t features = input_features_;
  for (const Layer& l : layers_) {
    if (l.in_features != features) {
      throw ShapeError("layer '" + l.name + "' input size " + std::to_string(l.in_features) +
                       " does not follow the previous output size " + std::to_string(features));
    }
    switch (l.kind) {
      case LayerKind::Linear:
        if (l.weight.rows() != l.out_features || l.weight.cols() != l.in_features ||
            l.bias.size() != l.out_features) {
          throw ShapeError("linear layer '" + l.name + "' parameter shapes are inconsistent");
        }
        break;
      case LayerKind::Conv2d:
        if (l.conv.input_size() != l.in_features ||
            l.out_features != l.out_channels * l.conv.out_h() * l.conv.out_w() ||
            l.weight.rows() != l.out_channels || l.weight.cols() != l.conv.patch_size() ||
            l.bias.size() != l.out_channels) {
          throw ShapeError("conv layer '" + l.name + "' parameter shapes are inconsistent");
        }
        break;
      case LayerKind::Relu:
        if (l.out_features != l.in_features || !l.weight.empty() || !l.bias.empty()) {
          throw ShapeError("relu layer '" + l.name + "' must be shape preserving and parameterless");
        }
        break;
    }
    features = l.out_features;
  }
}

std::size_t Model::output_features() const { return last_features(layers_, input_features_); }

std::vector<std::size_t> Model::matmul_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].has_matmul()) out.push_back(i);
  }
  return out;
}

Model make_mlp(std::size_t inputs, std::span<const std::size_t> hidden, std::size_t classes,
               std::uint64_t seed) {
  Model m(inputs);
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    m.add_linear("fc" + std::to_string(h + 1), hidden[h]);
    m.add_relu("relu" + std::to_string(h + 1));
  }
  m.add_linear("fc" + std::to_string(hidden.size() + 1), classes);
  m.init_parameters(seed);
  return m;
}

Matrix layer_forward(const Layer& layer, std::size_t layer_index, const Matrix& x,
                     const ExecutionMode& mode) {
  check_input(layer, x);
  switch (layer.kind) {
    case LayerKind::Linear: return linear_forward(layer, layer_index, x, mode);
    case LayerKind::Conv2d: return conv_forward(layer, layer_index, x, mode);
    case LayerKind::Relu: {
      Matrix y = x;
      for (float& v : y.data()) v = v > 0.0f ? v : 0.0f;
      return y;
    }
  }
  throw ShapeError("unknown layer kind");
}

ForwardRecord forward(const Model& model, const Matrix& x, const ExecutionMode& mode,
                      const OutputHook& hook) {
  if (x.cols() != model.input_features()) {
    throw ShapeError("input has " + std::to_string(x.cols()) + " features, model expects " +
                     std::to_string(model.input_features()));
  }
  ForwardRecord rec;
  rec.inputs.reserve(model.layers().size());
  Matrix cur = x;
  if (mode.round_activations) round_bf16_inplace(cur.data());
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const Layer& l = model.layers()[i];
    Matrix y = layer_forward(l, i, cur, mode);
    if (hook && l.has_matmul()) hook(i, y);
    if (mode.round_activations) round_bf16_inplace(y.data());
    rec.inputs.push_back(std::move(cur));
    cur = std::move(y);
  }
  rec.output = std::move(cur);
  return rec;
}

GradientSet backward_ste(const Model& model, const ForwardRecord& record, const Matrix& upstream) {
  const auto& layers = model.layers();
  if (record.inputs.size() != layers.size()) {
    throw std::invalid_argument("backward_ste: forward record does not cover every layer");
  }
  if (upstream.rows() != record.output.rows() || upstream.cols() != model.output_features()) {
    throw ShapeError("backward_ste: upstream gradient shape does not match the output");
  }
  GradientSet grads;
  grads.layers.resize(layers.size());
  Matrix dy = upstream;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Layer& l = layers[li];
    const Matrix& x = record.inputs[li];
    if (x.rows() != dy.rows() || x.cols() != l.in_features) {
      throw std::invalid_argument("backward_ste: recorded activation for '" + l.name +
                                  "' has the wrong shape");
    }
    const std::size_t batch = x.rows();
    Matrix dx(batch, l.in_features);
    LayerGrad& g = grads.layers[li];
    switch (l.kind) {
      case LayerKind::Relu:
        for (std::size_t k = 0; k < dx.size(); ++k) {
          dx.data()[k] = x.data()[k] > 0.0f ? dy.data()[k] : 0.0f;
        }
        break;
      case LayerKind::Linear: {
        g.weight = Matrix(l.out_features, l.in_features);
        g.bias.assign(l.out_features, 0.0f);
        // dW = dY^T X, db = sum_b dY, dX = dY W.
        for (std::size_t b = 0; b < batch; ++b) {
          const auto xrow = x.row(b);
          const auto dyrow = dy.row(b);
          auto dxrow = dx.row(b);
          for (std::size_t o = 0; o < l.out_features; ++o) {
            const float d = dyrow[o];
            g.bias[o] += d;
            float* gw = g.weight.row(o).data();
            const float* w = l.weight.row(o).data();
            for (std::size_t i = 0; i < l.in_features; ++i) {
              gw[i] += d * xrow[i];
              dxrow[i] += d * w[i];
            }
          }
        }
        break;
      }
      case LayerKind::Conv2d: {
        g.weight = Matrix(l.out_channels, l.conv.patch_size());
        g.bias.assign(l.out_channels, 0.0f);
        const std::size_t hw = l.conv.out_h() * l.conv.out_w();
        for (std::size_t b = 0; b < batch; ++b) {
          const Matrix cols = im2col(x.row(b), l.conv);
          Matrix dcols(cols.rows(), cols.cols());
          const auto dyrow = dy.row(b);
          for (std::size_t o = 0; o < l.out_channels; ++o) {
            const float* w = l.weight.row(o).data();
            float* gw = g.weight.row(o).data();
            for (std::size_t p = 0; p < hw; ++p) {
              const float d = dyrow[o * hw + p];
              g.bias[o] += d;
              for (std::size_t r = 0; r < cols.rows(); ++r) {
                gw[r] += d * cols(r, p);
                dcols(r, p) += d * w[r];
              }
            }
          }
          col2im(dcols, l.conv, dx.row(b));
        }
        break;
      }
    }
    dy = std::move(dx);
  }
  grads.input = std::move(dy);
  return grads;
}

LossResult loss_softmax_ce(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("loss_softmax_ce: one label per row required");
  }
  LossResult res;
  res.grad = Matrix(logits.rows(), logits.cols());
  const std::size_t batch = logits.rows();
  const std::size_t k = logits.cols();
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::out_of_range("loss_softmax_ce: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(k) + ")");
    }
    const auto row = logits.row(b);
    double mx = row[0];
    for (float v : row) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (float v : row) sum += std::exp(static_cast<double>(v) - mx);
    const double log_z = mx + std::log(sum);
    total += log_z - static_cast<double>(row[static_cast<std::size_t>(label)]);
    for (std::size_t c = 0; c < k; ++c) {
      const double p = std::exp(static_cast<double>(row[c]) - log_z);
      const double onehot = c == static_cast<std::size_t>(label) ? 1.0 : 0.0;
      res.grad(b, c) = static_cast<float>((p - onehot) / static_cast<double>(batch));
    }
  }
  res.loss = total / static_cast<double>(batch);
  return res;
}

void SgdOptimizer::step(Model& model, const GradientSet& grads) {
  auto& layers = model.layers();
  if (grads.layers.size() != layers.size()) {
    throw ShapeError("sgd step: gradient set does not match the model");
  }
  if (velocity_.empty()) {
    velocity_.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      velocity_[i].weight = Matrix(layers[i].weight.rows(), layers[i].weight.cols());
      velocity_[i].bias.assign(layers[i].bias.size(), 0.0f);
    }
  }
  const float lr = params_.lr;
  const float mu = params_.momentum;
  const float wd = params_.weight_decay;
  auto update = [&](std::span<float> w, std::span<const float> g, std::span<float> v) {
    if (g.size() != w.size()) throw ShapeError("sgd step: gradient shape mismatch");
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = mu * v[k] + (g[k] + wd * w[k]);
      w[k] -= lr * v[k];
    }
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].has_matmul()) continue;
    update(layers[i].weight.data(), grads.layers[i].weight.data(), velocity_[i].weight.data());
    update(layers[i].bias, grads.layers[i].bias, velocity_[i].bias);
  }
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const auto row = logits.row(b);
    out[b] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace abfp
