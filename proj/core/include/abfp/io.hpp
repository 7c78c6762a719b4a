#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "abfp/analysis.hpp"
#include "abfp/finetune.hpp"
#include "abfp/nn.hpp"

namespace abfp {

// Checkpoint layout (all integers little-endian):
//   "ABFP" | u32 version | u32 input_features | u32 layer_count
//   per layer: u32 name_len | name | u8 kind | u32 in | u32 out | u32 out_channels
//              | 9 x u32 conv geometry (C H W kh kw sh sw ph pw)
//              | u64 weight_offset | u64 weight_count | u64 bias_offset | u64 bias_count
//   u64 payload_bytes | payload of little-endian float32 arrays
// Offsets are byte offsets into the payload; the arrays tile it exactly.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Model& model);
/// Throws FormatError on bad magic/version, truncation or inconsistent
/// descriptors; never returns a partially loaded model.
Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

/// {"bins", "edges", "raw_counts", "smoothing"}; numbers use shortest
/// round-trip formatting.
std::string histogram_to_json(const Histogram& h);
Histogram histogram_from_json(const std::string& text);

std::string plan_to_json(const DnfPlan& plan);
DnfPlan plan_from_json(const std::string& text);

/// Shortest decimal that reads back to the same double; '.' separator.
std::string format_number(double v);

/// Writes `text` to `path` in binary mode ('\n' line endings preserved).
/// Throws std::runtime_error if the file cannot be written.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace abfp
