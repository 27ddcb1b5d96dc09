#include "rince/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>

#include "rince/numeric.hpp"
#include "rince/rng.hpp"

namespace rince {
namespace {

double log_add_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

double lse_over(const std::vector<double>& xs, double inv_tau) {
  double acc = -INFINITY;
  for (double x : xs) acc = log_add_exp(acc, x * inv_tau);
  return acc;
}

}  // namespace

double relative_penalty(const PenaltyQuery& q, PenaltyKind kind, std::size_t target, PenaltyConvention convention) {
  if (!(q.tau1 > 0.0) || !(q.tau2 > 0.0)) throw ConfigError("relative_penalty: temperatures must be positive");
  const bool exclude = convention == PenaltyConvention::kExcludeTarget;
  double numerator = 0.0;
  double denominator = 0.0;
  std::size_t denominator_terms = 0;
  auto accumulate = [&](const std::vector<double>& xs, double tau, std::optional<std::size_t> skip) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (skip && *skip == i) continue;
      denominator += std::exp(xs[i] / tau);
      ++denominator_terms;
    }
  };
  switch (kind) {
    case PenaltyKind::kNegativeWrtP2:
      if (target >= q.negatives.size()) throw ConfigError("relative_penalty: negative index out of range");
      numerator = std::exp(q.negatives[target] / q.tau2);
      accumulate(q.negatives, q.tau2, exclude ? std::optional(target) : std::nullopt);
      break;
    case PenaltyKind::kNegativeWrtP1:
      if (target >= q.negatives.size()) throw ConfigError("relative_penalty: negative index out of range");
      numerator = std::exp(q.negatives[target] / q.tau1);
      accumulate(q.negatives, q.tau1, exclude ? std::optional(target) : std::nullopt);
      accumulate(q.h_p2, q.tau1, std::nullopt);
      break;
    case PenaltyKind::kP2WrtP1:
      if (target >= q.h_p2.size()) throw ConfigError("relative_penalty: rank-2 index out of range");
      numerator = std::exp(q.h_p2[target] / q.tau1);
      accumulate(q.negatives, q.tau1, std::nullopt);
      accumulate(q.h_p2, q.tau1, exclude ? std::optional(target) : std::nullopt);
      break;
  }
  if (denominator_terms == 0) throw ConfigError("relative_penalty: denominator sum is empty");
  return numerator / denominator;
}

void gauss_hermite(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights) {
  // Newton iteration on the orthonormal Hermite recurrence; roots are symmetric.
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  const std::size_t m = (n + 1) / 2;
  const double nd = static_cast<double>(n);
  double z = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i == 0) z = std::sqrt(2.0 * nd + 1.0) - 1.85575 * std::pow(2.0 * nd + 1.0, -0.16667);
    else if (i == 1) z -= 1.14 * std::pow(nd, 0.426) / z;
    else if (i == 2) z = 1.86 * z - 0.86 * nodes[0];
    else if (i == 3) z = 1.91 * z - 0.91 * nodes[1];
    else z = 2.0 * z - nodes[i - 2];
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = pim4;
      double p2 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jd = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / jd) * p2 - std::sqrt((jd - 1.0) / jd) * p3;
      }
      pp = std::sqrt(2.0 * nd) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15) break;
    }
    nodes[i] = z;
    nodes[n - 1 - i] = -z;
    weights[i] = 2.0 / (pp * pp);
    weights[n - 1 - i] = weights[i];
  }
}

NegativeModel NegativeModel::sampled(std::vector<double> scores) {
  NegativeModel m;
  m.samples_ = std::move(scores);
  m.count_ = m.samples_.size();
  return m;
}

NegativeModel NegativeModel::gaussian_sample(double mean, double stddev, std::size_t count, std::uint64_t seed) {
  SeededRng rng = SeededRng(seed).split(Stream::kAnalysis);
  std::vector<double> s(count);
  for (double& v : s) v = std::clamp(rng.normal(mean, stddev), -1.0, 1.0);
  NegativeModel m = sampled(std::move(s));
  m.mean_ = mean;
  m.stddev_ = stddev;
  return m;
}

NegativeModel NegativeModel::gaussian_expectation(double mean, double stddev, std::size_t count,
                                                  std::size_t quadrature_nodes) {
  NegativeModel m;
  m.expectation_ = true;
  m.mean_ = mean;
  m.stddev_ = stddev;
  m.count_ = count;
  gauss_hermite(quadrature_nodes, m.gh_nodes_, m.gh_weights_);
  return m;
}

double NegativeModel::log_mass(double tau) const {
  if (!expectation_) return lse_over(samples_, 1.0 / tau);
  if (count_ == 0) return -INFINITY;
  // count · (1/√π) Σ w_i exp((μ + √2 σ x_i) / τ)
  double acc = -INFINITY;
  for (std::size_t i = 0; i < gh_nodes_.size(); ++i)
    acc = log_add_exp(acc, std::log(gh_weights_[i]) + (mean_ + std::numbers::sqrt2 * stddev_ * gh_nodes_[i]) / tau);
  return std::log(static_cast<double>(count_)) - 0.5 * std::log(std::numbers::pi) + acc;
}

double tradeoff_k(double h1, double h2, const NegativeModel& negatives, double tau1, double tau2,
                  const std::vector<double>& other_p2) {
  double denom1 = log_add_exp(negatives.log_mass(tau1), h2 / tau1);
  denom1 = log_add_exp(denom1, h1 / tau1);
  for (double p : other_p2) denom1 = log_add_exp(denom1, p / tau1);
  const double push = std::exp(h2 / tau1 - denom1) / tau1;
  const double neg2 = negatives.log_mass(tau2);
  const double pull = neg2 == -INFINITY ? 0.0 : std::exp(neg2 - log_add_exp(neg2, h2 / tau2)) / tau2;
  return push - pull;
}

double tradeoff_k(double h1, double h2, const std::vector<double>& negatives, double tau1, double tau2) {
  return tradeoff_k(h1, h2, NegativeModel::sampled(negatives), tau1, tau2);
}

std::optional<double> equilibrium_root(double h1, const NegativeModel& negatives, double tau1, double tau2,
                                       double tol) {
  double lo = -1.0;
  double hi = 1.0;
  const double k_lo = tradeoff_k(h1, lo, negatives, tau1, tau2);
  const double k_hi = tradeoff_k(h1, hi, negatives, tau1, tau2);
  if (k_lo == 0.0) return lo;
  if (k_hi == 0.0) return hi;
  if ((k_lo > 0.0) == (k_hi > 0.0)) return std::nullopt;
  // K is increasing in h2, so K(lo) < 0 < K(hi) here.
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (tradeoff_k(h1, mid, negatives, tau1, tau2) < 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

EquilibriumCurve equilibrium_curve(double tau1, double tau2, const NegativeModel& negatives,
                                   const std::vector<double>& h1_grid) {
  for (std::size_t i = 0; i < h1_grid.size(); ++i) {
    if (h1_grid[i] < -1.0 || h1_grid[i] > 1.0) throw ConfigError("equilibrium_curve: grid must lie in [-1, 1]");
    if (i > 0 && !(h1_grid[i] > h1_grid[i - 1])) throw ConfigError("equilibrium_curve: grid must be increasing");
  }
  EquilibriumCurve c;
  c.tau1 = tau1;
  c.tau2 = tau2;
  c.neg_mean = negatives.mean();
  c.neg_stddev = negatives.stddev();
  c.neg_count = negatives.count();
  c.h1 = h1_grid;
  for (double h1 : h1_grid) c.h2_root.push_back(equilibrium_root(h1, negatives, tau1, tau2));
  return c;
}

double EquilibriumCurve::max_slope(double lo, double hi) const {
  double best = -INFINITY;
  for (std::size_t i = 0; i + 1 < h1.size(); ++i) {
    if (h1[i] < lo - 1e-12 || h1[i + 1] > hi + 1e-12) continue;
    if (!h2_root[i] || !h2_root[i + 1]) continue;
    best = std::max(best, (*h2_root[i + 1] - *h2_root[i]) / (h1[i + 1] - h1[i]));
  }
  return best;
}

bool EquilibriumCurve::non_decreasing() const {
  std::optional<double> prev;
  for (const auto& r : h2_root) {
    if (!r) continue;
    if (prev && *r < *prev) return false;
    prev = r;
  }
  return true;
}

std::vector<double> uniform_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw ConfigError("uniform_grid: invalid range");
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) g[i] = std::round((lo + static_cast<double>(i) * step) / step) * step;
  g.front() = lo;
  g.back() = hi;
  return g;
}

void write_curve_csv(std::ostream& out, const EquilibriumCurve& c) {
  out << "h1,h2_root\n" << std::setprecision(17);
  for (std::size_t i = 0; i < c.h1.size(); ++i) {
    out << c.h1[i] << ',';
    if (c.h2_root[i]) out << *c.h2_root[i];
    else out << "nan";
    out << '\n';
  }
}

void write_k_grid_csv(std::ostream& out, const NegativeModel& negatives, double tau1, double tau2,
                      const std::vector<double>& h1_grid, const std::vector<double>& h2_grid) {
  out << "h1,h2,K\n" << std::setprecision(17);
  for (double h1 : h1_grid)
    for (double h2 : h2_grid) out << h1 << ',' << h2 << ',' << tradeoff_k(h1, h2, negatives, tau1, tau2) << '\n';
}

}  // namespace rince
