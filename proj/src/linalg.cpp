#include "protoalign/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "protoalign/error.hpp"

namespace protoalign {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw InvalidArgument("Matrix: data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<std::vector<double>> copy;
  for (const auto& r : rows) copy.emplace_back(r);
  return from_rows(copy);
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw InvalidArgument("Matrix::from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(rows.size(), cols, std::move(data));
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= rows_) throw InvalidArgument("gather_rows: index out of range");
    std::ranges::copy(row(indices[k]), out.row(k).begin());
  }
  return out;
}

bool Matrix::all_finite() const {
  return std::ranges::all_of(data_, [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidArgument("matmul: inner dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto br = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidArgument("matmul_bt: inner dimension mismatch");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidArgument("matmul_at: inner dimension mismatch");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto ar = a.row(k);
    auto br = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ar[i];
      auto o = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("softmax: temperature must be positive");
  if (logits.empty()) return {};
  const double top = *std::ranges::max_element(logits);
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - top) / temperature);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

std::vector<double> l2_normalize(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > 0.0)) throw DegenerateInput("l2_normalize: zero vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = out.row(r);
    const double n = norm(row);
    if (!(n > 0.0)) throw DegenerateInput("normalize_rows: zero row " + std::to_string(r));
    for (double& x : row) x /= n;
  }
  return out;
}

double entropy(std::span<const double> p) {
  double total = 0.0;
  for (double x : p) {
    if (x < 0.0 || !std::isfinite(x)) throw InvalidArgument("entropy: negative or non-finite entry");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-6) throw InvalidArgument("entropy: probabilities do not sum to 1");
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return std::max(h, 0.0);
}

std::vector<int> category_order(std::span<const double> p) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::ranges::stable_sort(idx, [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  std::vector<int> rank(p.size());
  for (std::size_t r = 0; r < idx.size(); ++r) rank[idx[r]] = static_cast<int>(r) + 1;
  return rank;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw DegenerateInput("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw DegenerateInput("percentile: empty input");
  if (!(q > 0.0 && q <= 100.0)) throw InvalidArgument("percentile: q must lie in (0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) / 100.0 - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::ranges::nth_element(sorted, sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1));
  return sorted[rank - 1];
}

}  // namespace protoalign
