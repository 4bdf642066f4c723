#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace driftless {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> values);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  /// Copy of rows [start, start + count).
  [[nodiscard]] Matrix row_block(std::size_t start, std::size_t count) const;
  /// Overwrite rows starting at `start` with `block`.
  void set_row_block(std::size_t start, const Matrix& block);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
/// Row-wise softmax with per-row max subtraction. Non-finite input throws.
Matrix softmax_rows(const Matrix& a);
/// Per-row normalization to zero mean / unit variance, then gain and bias.
Matrix layer_norm(const Matrix& x, std::span<const double> gain, std::span<const double> bias,
                  double eps);

/// True when every entry is finite.
bool all_finite(const Matrix& m) noexcept;
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace driftless
