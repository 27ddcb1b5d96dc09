#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

namespace rince {

/// Scores for a two-rank query: one rank-1 positive, a rank-2 set and negatives.
struct PenaltyQuery {
  double h_p1 = 0.0;
  std::vector<double> h_p2;
  std::vector<double> negatives;
  double tau1 = 0.1;
  double tau2 = 0.2;
};

enum class PenaltyKind {
  kNegativeWrtP2,  ///< negative n relative to p2 inside ℓ2
  kNegativeWrtP1,  ///< negative n relative to p1 inside ℓ1
  kP2WrtP1,        ///< rank-2 positive relative to p1 inside ℓ1
};

enum class PenaltyConvention {
  /// |∂ℓ/∂s_target| / |∂ℓ/∂s_p|: the target's own term stays in the denominator.
  kGradientRatio,
  /// Closed form with the target removed from its own denominator.
  kExcludeTarget,
};

/// Relative penalty of `target` (index into negatives or h_p2 depending on
/// `kind`). Throws ConfigError if the target is out of range or the
/// denominator sum is empty.
double relative_penalty(const PenaltyQuery& query, PenaltyKind kind, std::size_t target,
                        PenaltyConvention convention = PenaltyConvention::kGradientRatio);

/// log Σ_n exp(h_n / τ) over the negatives, either from a fixed sample or
/// from count·E[exp(h/τ)] under N(μ, σ²) by Gauss–Hermite quadrature.
class NegativeModel {
 public:
  static NegativeModel sampled(std::vector<double> scores);
  /// Draws `count` scores from N(μ, σ²), clamped to [-1, 1], from `seed`'s analysis stream.
  static NegativeModel gaussian_sample(double mean, double stddev, std::size_t count, std::uint64_t seed);
  static NegativeModel gaussian_expectation(double mean, double stddev, std::size_t count,
                                            std::size_t quadrature_nodes = 40);

  double log_mass(double tau) const;
  const std::vector<double>& samples() const { return samples_; }
  bool expectation() const { return expectation_; }
  double mean() const { return mean_; }
  double stddev() const { return stddev_; }
  std::size_t count() const { return count_; }

 private:
  std::vector<double> samples_;
  bool expectation_ = false;
  double mean_ = 0.0;
  double stddev_ = 0.0;
  std::size_t count_ = 0;
  std::vector<double> gh_nodes_;
  std::vector<double> gh_weights_;
};

/// Gauss–Hermite nodes and weights for ∫ e^{-x²} f(x) dx.
void gauss_hermite(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights);

/// |∂ℓ1/∂p2| − |∂ℓ2/∂p2| for a single rank-1 positive h1 and rank-2 positive
/// h2. `other_p2` holds any further rank-2 scores that share ℓ1's denominator.
double tradeoff_k(double h1, double h2, const NegativeModel& negatives, double tau1, double tau2,
                  const std::vector<double>& other_p2 = {});
double tradeoff_k(double h1, double h2, const std::vector<double>& negatives, double tau1, double tau2);

struct EquilibriumCurve {
  double tau1 = 0.0;
  double tau2 = 0.0;
  double neg_mean = 0.0;
  double neg_stddev = 0.0;
  std::size_t neg_count = 0;
  std::vector<double> h1;
  std::vector<std::optional<double>> h2_root;  ///< nullopt where K keeps one sign on [-1, 1]

  /// Largest forward-difference slope of the root over h1 in [lo, hi].
  double max_slope(double lo, double hi) const;
  bool non_decreasing() const;
};

/// Bisection root of K(h1, ·) on [-1, 1] to `tol`, or nullopt when K has constant sign.
std::optional<double> equilibrium_root(double h1, const NegativeModel& negatives, double tau1, double tau2,
                                       double tol = 1e-10);

EquilibriumCurve equilibrium_curve(double tau1, double tau2, const NegativeModel& negatives,
                                   const std::vector<double>& h1_grid);

/// Inclusive grid lo, lo+step, …, hi (rounded to the step to avoid drift).
std::vector<double> uniform_grid(double lo, double hi, double step);

void write_curve_csv(std::ostream& out, const EquilibriumCurve& curve);
void write_k_grid_csv(std::ostream& out, const NegativeModel& negatives, double tau1, double tau2,
                      const std::vector<double>& h1_grid, const std::vector<double>& h2_grid);

}  // namespace rince
