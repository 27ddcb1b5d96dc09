#include "rince/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rince {

Mat64::Mat64(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Mat64::Mat64(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ConfigError("matrix shape " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                      " does not match " + std::to_string(values_.size()) + " values");
  }
}

Mat64 Mat64::identity(std::size_t n) {
  Mat64 m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat64 Mat64::transposed() const {
  Mat64 t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Mat64 matmul(const Mat64& a, const Mat64& b) {
  if (a.cols() != b.rows()) throw ConfigError("matmul: inner dimensions differ");
  Mat64 out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

Vec64 normalized(std::span<const double> a) {
  const double n = norm(a);
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("degenerate embedding");
  Vec64 out(a.begin(), a.end());
  for (double& v : out) v /= n;
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("cosine_similarity: length mismatch");
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("degenerate embedding");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) throw ConfigError("log_sum_exp: empty input");
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) throw NumericError("log_sum_exp: non-finite input");
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

Mat64 cholesky(const Mat64& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw ConfigError("cholesky: matrix must be square");
  const std::size_t n = m.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double scale = std::max({1.0, std::abs(m(i, j)), std::abs(m(j, i))});
      if (std::abs(m(i, j) - m(j, i)) > 1e-12 * scale) throw ConfigError("cholesky: matrix not symmetric");
    }
  Mat64 l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = m(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) throw NumericError("covariance not positive definite");
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Mat64 regularize_covariance(const Mat64& cov) {
  const std::size_t d = cov.rows();
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov(i, i);
  double eps = 1e-6 * trace / static_cast<double>(d);
  if (!(eps > 0.0)) eps = 1e-6;
  Mat64 out = cov;
  for (std::size_t i = 0; i < d; ++i) out(i, i) += eps;
  return out;
}

double mvn_log_density(std::span<const double> x, std::span<const double> mean, const Mat64& chol) {
  const std::size_t d = x.size();
  if (mean.size() != d || chol.rows() != d || chol.cols() != d)
    throw ConfigError("mvn_log_density: dimension mismatch");
  // Solve L·z = x − mean; the quadratic form is ‖z‖².
  Vec64 z(d);
  double log_det_half = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double s = x[i] - mean[i];
    for (std::size_t k = 0; k < i; ++k) s -= chol(i, k) * z[k];
    z[i] = s / chol(i, i);
    log_det_half += std::log(chol(i, i));
  }
  const double quad = dot(z, z);
  return -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - log_det_half - 0.5 * quad;
}

}  // namespace rince
