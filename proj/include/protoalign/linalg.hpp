#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace protoalign {

/// Dense row-major matrix of doubles. Rows are samples, columns features.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& storage() const { return data_; }

  /// Copies the listed rows, in order, into a new matrix.
  Matrix gather_rows(std::span<const std::size_t> indices) const;

  bool all_finite() const;
  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_at(const Matrix& a, const Matrix& b);

/// Temperature-scaled softmax with max subtraction.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

std::vector<double> l2_normalize(std::span<const double> v);
/// Row-wise l2 normalization; throws DegenerateInput on a zero row.
Matrix normalize_rows(const Matrix& m);

/// Shannon entropy in nats, with 0 ln 0 = 0.
double entropy(std::span<const double> p);

/// Rank of every class when sorted by descending probability; the argmax gets
/// rank 1. Ties go to the lower class index.
std::vector<int> category_order(std::span<const double> p);

std::size_t argmax(std::span<const double> v);

/// Nearest-rank percentile: the ceil(q n / 100)-th smallest value.
double percentile(std::span<const double> values, double q);

}  // namespace protoalign
