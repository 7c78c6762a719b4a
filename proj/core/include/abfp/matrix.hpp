#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace abfp {

/// Dense row-major float32 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<float> data() { return data_; }
  [[nodiscard]] std::span<const float> data() const { return data_; }
  std::vector<float>& storage() { return data_; }
  [[nodiscard]] const std::vector<float>& storage() const { return data_; }

  [[nodiscard]] Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Plain float32 GEMM: Y = A * B. Every output element is accumulated in
/// ascending inner index, so results are reproducible bit for bit.
Matrix matmul_f32(const Matrix& a, const Matrix& b);

}  // namespace abfp
