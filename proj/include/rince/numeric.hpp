#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rince {

/// Embedding and feature vectors. Length is fixed by the producing layer.
using Vec64 = std::vector<double>;

/// Raised for malformed inputs and configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation cannot produce a finite, valid result
/// (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
class Mat64 {
 public:
  Mat64() = default;
  Mat64(std::size_t rows, std::size_t cols, double fill = 0.0);
  Mat64(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Mat64 identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  Mat64 transposed() const;

  friend bool operator==(const Mat64&, const Mat64&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Mat64 matmul(const Mat64& a, const Mat64& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
bool all_finite(std::span<const double> a);

/// Returns a / ‖a‖. Throws NumericError("degenerate embedding") on zero norm.
Vec64 normalized(std::span<const double> a);

/// (a·b)/(‖a‖‖b‖) clamped to [-1, 1].
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// log Σ exp(x_i) with max-shift.
double log_sum_exp(std::span<const double> xs);

/// Lower-triangular L with L·Lᵀ = m.
Mat64 cholesky(const Mat64& m);

/// Adds ε·I with ε = 1e-6·trace/d (or 1e-6 when the trace vanishes).
Mat64 regularize_covariance(const Mat64& cov);

/// log N(x; mean, L·Lᵀ) by forward substitution against the Cholesky factor.
double mvn_log_density(std::span<const double> x, std::span<const double> mean, const Mat64& chol);

}  // namespace rince
