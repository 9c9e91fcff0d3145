#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace svic {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }

  double& operator()(size_t i, size_t j) { return data_[i * cols_ + j]; }
  double operator()(size_t i, size_t j) const { return data_[i * cols_ + j]; }

  double* row(size_t i) { return data_.data() + i * cols_; }
  const double* row(size_t i) const { return data_.data() + i * cols_; }

  std::span<const double> row_span(size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  // New matrix holding the given rows, in order.
  Matrix gather_rows(const std::vector<size_t>& idx) const {
    Matrix out(idx.size(), cols_);
    for (size_t i = 0; i < idx.size(); ++i) {
      const double* src = row(idx[i]);
      double* dst = out.row(i);
      for (size_t j = 0; j < cols_; ++j) dst[j] = src[j];
    }
    return out;
  }

  // New matrix holding the given columns, in order.
  Matrix gather_cols(const std::vector<size_t>& idx) const {
    Matrix out(rows_, idx.size());
    for (size_t i = 0; i < rows_; ++i) {
      const double* src = row(i);
      double* dst = out.row(i);
      for (size_t j = 0; j < idx.size(); ++j) dst[j] = src[idx[j]];
    }
    return out;
  }

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

template <class T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(v[i]);
  return out;
}

}  // namespace svic
