#pragma once

#include <cstddef>
#include <span>

#include "abfp/matrix.hpp"

namespace abfp {

struct ConvGeometry {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  /// Output spatial size; throws ShapeError if not positive.
  [[nodiscard]] std::size_t out_h() const;
  [[nodiscard]] std::size_t out_w() const;
  [[nodiscard]] std::size_t patch_size() const { return channels * kernel_h * kernel_w; }
  [[nodiscard]] std::size_t input_size() const { return channels * height * width; }

  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

/// Unrolls a C x H x W image (row-major) into a (C*kh*kw) x (out_h*out_w)
/// matrix; row index is (c, ky, kx), column index is (oy, ox). Padding reads
/// as zero.
Matrix im2col(std::span<const float> image, const ConvGeometry& g);

/// Adds the columns back into a C x H x W gradient image (the adjoint of
/// im2col). `image` must have g.input_size() elements and is accumulated into.
void col2im(const Matrix& cols, const ConvGeometry& g, std::span<float> image);

}  // namespace abfp
