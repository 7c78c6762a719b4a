#include "abfp/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "abfp/error.hpp"

namespace abfp {

namespace {

constexpr char kMagic[4] = {'A', 'B', 'F', 'P'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int s = 0; s < 32; s += 8) v |= static_cast<std::uint32_t>(in_[pos_++]) << s;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int s = 0; s < 64; s += 8) v |= static_cast<std::uint64_t>(in_[pos_++]) << s;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }
  [[nodiscard]] std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::uint32_t narrow32(std::size_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw FormatError("dimension exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

float read_f32(const std::vector<std::uint8_t>& payload, std::size_t at) {
  std::uint32_t v = 0;
  for (int s = 0; s < 32; s += 8) v |= static_cast<std::uint32_t>(payload[at + s / 8]) << s;
  return std::bit_cast<float>(v);
}

using nlohmann::json;

json histogram_json(const Histogram& h) {
  return json{{"bins", h.bins()},
              {"edges", h.edges()},
              {"raw_counts", h.raw_counts()},
              {"smoothing", h.smoothing()}};
}

Histogram histogram_from(const json& j) {
  try {
    auto edges = j.at("edges").get<std::vector<double>>();
    auto counts = j.at("raw_counts").get<std::vector<std::uint64_t>>();
    const bool smoothing = j.value("smoothing", true);
    if (j.contains("bins") && j.at("bins").get<std::size_t>() != counts.size()) {
      throw FormatError("histogram 'bins' does not match raw_counts");
    }
    return Histogram(std::move(edges), std::move(counts), smoothing);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed histogram JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid histogram: ") + e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
  model.validate();
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(narrow32(model.input_features()));
  w.u32(narrow32(model.layers().size()));
  std::uint64_t offset = 0;
  for (const Layer& l : model.layers()) {
    w.u32(narrow32(l.name.size()));
    w.bytes(l.name.data(), l.name.size());
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u32(narrow32(l.in_features));
    w.u32(narrow32(l.out_features));
    w.u32(narrow32(l.out_channels));
    const ConvGeometry& g = l.conv;
    for (std::size_t v : {g.channels, g.height, g.width, g.kernel_h, g.kernel_w, g.stride_h,
                          g.stride_w, g.pad_h, g.pad_w}) {
      w.u32(narrow32(v));
    }
    w.u64(offset);
    w.u64(l.weight.size());
    offset += 4 * l.weight.size();
    w.u64(offset);
    w.u64(l.bias.size());
    offset += 4 * l.bias.size();
  }
  w.u64(offset);
  for (const Layer& l : model.layers()) {
    for (float v : l.weight.data()) w.f32(v);
    for (float v : l.bias) w.f32(v);
  }
  return std::move(w.data());
}

Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw FormatError("not an ABFP checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  struct Desc {
    Layer layer;
    std::uint64_t w_off, w_count, b_off, b_count;
  };
  const std::uint32_t input_features = r.u32();
  const std::uint32_t count = r.u32();
  std::vector<Desc> descs;
  for (std::uint32_t i = 0; i < count; ++i) {
    Desc d{};
    const std::uint32_t name_len = r.u32();
    d.layer.name = r.str(name_len);
    const std::uint8_t kind = r.u8();
    if (kind < 1 || kind > 3) throw FormatError("unknown layer kind " + std::to_string(kind));
    d.layer.kind = static_cast<LayerKind>(kind);
    d.layer.in_features = r.u32();
    d.layer.out_features = r.u32();
    d.layer.out_channels = r.u32();
    ConvGeometry& g = d.layer.conv;
    for (std::size_t* v : {&g.channels, &g.height, &g.width, &g.kernel_h, &g.kernel_w, &g.stride_h,
                           &g.stride_w, &g.pad_h, &g.pad_w}) {
      *v = r.u32();
    }
    d.w_off = r.u64();
    d.w_count = r.u64();
    d.b_off = r.u64();
    d.b_count = r.u64();
    descs.push_back(std::move(d));
  }
  const std::uint64_t payload_bytes = r.u64();
  if (payload_bytes != r.remaining()) {
    throw FormatError("checkpoint payload size " + std::to_string(payload_bytes) + " but " +
                      std::to_string(r.remaining()) + " bytes remain");
  }
  const std::size_t base = r.pos();
  std::uint64_t expected = 0;
  Model model(input_features);
  for (auto& d : descs) {
    if (d.w_off != expected || d.b_off != d.w_off + 4 * d.w_count) {
      throw FormatError("checkpoint descriptors do not tile the payload");
    }
    expected = d.b_off + 4 * d.b_count;
    if (expected > payload_bytes) throw FormatError("checkpoint descriptor past end of payload");
    Layer& l = d.layer;
    std::size_t rows = 0;
    std::size_t cols = 0;
    if (l.kind == LayerKind::Linear) {
      rows = l.out_features;
      cols = l.in_features;
    } else if (l.kind == LayerKind::Conv2d) {
      rows = l.out_channels;
      cols = l.conv.patch_size();
    }
    if (rows * cols != d.w_count) throw FormatError("layer '" + l.name + "' weight count mismatch");
    std::vector<float> w(d.w_count);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = read_f32(bytes, base + d.w_off + 4 * k);
    l.weight = Matrix(rows, cols, std::move(w));
    l.bias.resize(d.b_count);
    for (std::size_t k = 0; k < l.bias.size(); ++k) l.bias[k] = read_f32(bytes, base + d.b_off + 4 * k);
    model.layers().push_back(std::move(l));
  }
  if (expected != payload_bytes) throw FormatError("checkpoint descriptors do not tile the payload");
  try {
    model.validate();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::string histogram_to_json(const Histogram& h) { return histogram_json(h).dump(2) + "\n"; }

Histogram histogram_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("histogram JSON parse error: ") + e.what());
  }
  return histogram_from(j);
}

std::string plan_to_json(const DnfPlan& plan) {
  json layers = json::array();
  for (const auto& l : plan.layers) {
    layers.push_back({{"layer", l.layer},
                      {"name", l.name},
                      {"std", l.std},
                      {"selected", l.selected},
                      {"histogram", histogram_json(l.histogram)}});
  }
  const DeviceConfig& c = plan.config;
  json j{{"device",
          {{"tile_width", c.tile_width},
           {"gain", c.gain},
           {"bits", {c.quant.bits_w, c.quant.bits_x, c.quant.bits_y}},
           {"noise_lsb", c.noise.lsb_width},
           {"seed", c.seed}}},
         {"layers", layers}};
  return j.dump(2) + "\n";
}

DnfPlan plan_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    DnfPlan plan;
    if (j.contains("device")) {
      const json& d = j.at("device");
      const auto bits = d.at("bits").get<std::vector<int>>();
      if (bits.size() != 3) throw FormatError("plan device bits must have three entries");
      plan.config = DeviceConfig::make(d.at("tile_width").get<int>(), d.at("gain").get<double>(),
                                       QuantSpec::make(bits[0], bits[1], bits[2]),
                                       NoiseModel{d.at("noise_lsb").get<double>()},
                                       d.at("seed").get<std::uint64_t>());
    }
    for (const json& l : j.at("layers")) {
      LayerNoisePlan lp;
      lp.layer = l.at("layer").get<std::size_t>();
      lp.name = l.at("name").get<std::string>();
      lp.std = l.value("std", 0.0);
      lp.selected = l.at("selected").get<bool>();
      lp.histogram = histogram_from(l.at("histogram"));
      plan.layers.push_back(std::move(lp));
    }
    return plan;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed DNF plan JSON: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("invalid DNF plan device: ") + e.what());
  }
}

std::string format_number(double v) {
  if (!std::isfinite(v)) throw DomainError("refusing to format a non-finite number");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace abfp
