#include "abfp/im2col.hpp"

#include <string>

#include "abfp/error.hpp"

namespace abfp {

namespace {

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  if (s == 0) throw ShapeError("convolution stride must be positive");
  const std::size_t padded = in + 2 * p;
  if (k == 0 || padded < k) {
    throw ShapeError("convolution output size is not positive (input " + std::to_string(in) +
                     ", kernel " + std::to_string(k) + ", pad " + std::to_string(p) + ")");
  }
  return (padded - k) / s + 1;
}

}  // namespace

std::size_t ConvGeometry::out_h() const { return out_extent(height, kernel_h, stride_h, pad_h); }
std::size_t ConvGeometry::out_w() const { return out_extent(width, kernel_w, stride_w, pad_w); }

Matrix im2col(std::span<const float> image, const ConvGeometry& g) {
  if (image.size() != g.input_size()) {
    throw ShapeError("im2col image has " + std::to_string(image.size()) + " elements, expected " +
                     std::to_string(g.input_size()));
  }
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  Matrix cols(g.patch_size(), oh * ow);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const std::size_t r = (c * g.kernel_h + ky) * g.kernel_w + kx;
        float* dst = cols.row(r).data();
        for (std::size_t oy = 0; oy < oh; ++oy) {
          // Signed arithmetic for the padded border.
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_h);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride_w + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_w);
            float v = 0.0f;
            if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                ix < static_cast<std::ptrdiff_t>(g.width)) {
              v = image[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                        static_cast<std::size_t>(ix)];
            }
            dst[oy * ow + ox] = v;
          }
        }
      }
    }
  }
  return cols;
}

void col2im(const Matrix& cols, const ConvGeometry& g, std::span<float> image) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  if (cols.rows() != g.patch_size() || cols.cols() != oh * ow || image.size() != g.input_size()) {
    throw ShapeError("col2im shape mismatch");
  }
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const std::size_t r = (c * g.kernel_h + ky) * g.kernel_w + kx;
        const float* src = cols.row(r).data();
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride_w + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_w);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            image[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                  static_cast<std::size_t>(ix)] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace abfp
