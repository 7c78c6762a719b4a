#include "abfp/matrix.hpp"

#include <string>

#include "abfp/error.hpp"

namespace abfp {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data size " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows_) + "x" +
                     std::to_string(cols_));
  }
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

Matrix matmul_f32(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
  Matrix y(a.rows(), b.cols());
  // i-k-j order: each y(i, j) still sums k in ascending order, and the inner
  // loop over j vectorizes without reassociation.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    float* yrow = y.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const float aik = a(i, k);
      const float* brow = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) yrow[j] += aik * brow[j];
    }
  }
  return y;
}

}  // namespace abfp
