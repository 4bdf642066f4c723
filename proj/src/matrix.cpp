#include "driftless/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "driftless/errors.hpp"
#include "driftless/kernels.hpp"

namespace driftless {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = 1.0;
  }
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw DimensionError("Matrix::from_rows: ragged rows");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return {r, c, std::move(data)};
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return {1, values.size(), std::vector<double>(values.begin(), values.end())};
}

Matrix Matrix::row_block(std::size_t start, std::size_t count) const {
  if (start + count > rows_) {
    throw DimensionError("row_block: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + std::to_string(rows_));
  }
  const auto first = data_.begin() + static_cast<std::ptrdiff_t>(start * cols_);
  return {count, cols_,
          std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * cols_))};
}

void Matrix::set_row_block(std::size_t start, const Matrix& block) {
  if (block.cols_ != cols_ || start + block.rows_ > rows_) {
    throw DimensionError("set_row_block: block does not fit");
  }
  std::copy(block.data_.begin(), block.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(start * cols_));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t work = a.rows() * a.cols() * b.cols();
  if (work >= kernels::kParallelThreshold && kernels::thread_budget() > 1) {
    kernels::matmul_parallel(a.data().data(), b.data().data(), c.data().data(), a.rows(),
                             a.cols(), b.cols());
  } else {
    kernels::matmul_serial(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(),
                           b.cols());
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      t(j, i) = a(i, j);
    }
  }
  return t;
}

Matrix softmax_rows(const Matrix& a) {
  if (!all_finite(a)) {
    throw ContractError("softmax_rows: non-finite input");
  }
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto in = a.row(i);
    auto dst = out.row(i);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      dst[j] = std::exp(in[j] - peak);
      total += dst[j];
    }
    for (double& v : dst) {
      v /= total;
    }
  }
  return out;
}

Matrix layer_norm(const Matrix& x, std::span<const double> gain, std::span<const double> bias,
                  double eps) {
  if (gain.size() != x.cols() || bias.size() != x.cols()) {
    throw DimensionError("layer_norm: gain/bias length must equal " + std::to_string(x.cols()));
  }
  Matrix out(x.rows(), x.cols());
  const auto n = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    double mean = 0.0;
    for (double v : in) {
      mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (double v : in) {
      var += (v - mean) * (v - mean);
    }
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) {
      dst[j] = (in[j] - mean) * inv_std * gain[j] + bias[j];
    }
  }
  return out;
}

bool all_finite(const Matrix& m) noexcept {
  return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_abs_diff: shape mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

}  // namespace driftless
