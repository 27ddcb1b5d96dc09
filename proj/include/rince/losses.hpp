#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rince/numeric.hpp"

namespace rince {

/// Scores of one query against ranked positive sets and negatives.
/// positives_by_rank[0] holds the rank-1 (most similar) positives.
struct SimilarityBatch {
  std::vector<std::vector<double>> positives_by_rank;
  std::vector<double> negatives;

  std::size_t ranks() const { return positives_by_rank.size(); }
  std::size_t score_count() const;
  /// Scores in rank order followed by negatives.
  std::vector<double> flatten() const;
  /// Inverse of flatten() using this batch's shape.
  SimilarityBatch with_scores(std::span<const double> flat) const;
};

/// Euclidean distances to ranked positives and negatives, for the triplet baseline.
using DistanceBatch = SimilarityBatch;

/// Strictly increasing per-rank temperatures.
class TemperatureSchedule {
 public:
  /// Throws ConfigError unless every τ > 0 and τ_i < τ_{i+1}. Passing
  /// allow_unordered skips only the ordering check.
  explicit TemperatureSchedule(std::vector<double> taus, bool allow_unordered = false);

  std::size_t size() const { return taus_.size(); }
  double operator[](std::size_t i) const { return taus_[i]; }
  const std::vector<double>& taus() const { return taus_; }
  bool ordered() const;

 private:
  std::vector<double> taus_;
};

enum class LossVariant {
  kInfoNce,
  kLogOut,
  kLogIn,
  kRinceUni,
  kRinceIn,
  kRinceOut,
  kRinceOutIn,
  kTripletRanked,
};

std::string_view to_string(LossVariant v);
/// Accepts both the canonical names ("rince_in") and CLI spellings
/// ("rince-in", "scl-in" for log_in, "scl-out" for log_out, "triplet").
std::optional<LossVariant> parse_loss_variant(std::string_view name);
bool is_rince(LossVariant v);

/// Loss value with gradients with respect to each input score.
struct LossResult {
  double value = 0.0;
  std::vector<std::vector<double>> grad_positives_by_rank;
  std::vector<double> grad_negatives;
  /// Per-rank terms ℓ_i (one entry for single-rank losses).
  std::vector<double> rank_terms;

  std::vector<double> flat_grad() const;
};

/// −log softmax weight of the single positive at temperature τ.
LossResult infonce(const SimilarityBatch& batch, double tau);
/// Σ_p −log(e^{p/τ} / (e^{p/τ} + Σ_n e^{n/τ})).
LossResult log_out(const SimilarityBatch& batch, double tau);
/// −log(Σ_p e^{p/τ} / (Σ_p e^{p/τ} + Σ_n e^{n/τ})); sum form, not mean.
LossResult log_in(const SimilarityBatch& batch, double tau);

/// Ranked InfoNCE: Σ_i ℓ_i where ℓ_i uses τ_i, treats ranks j > i as
/// negatives and drops ranks j < i. `variant` selects the per-rank form.
LossResult rince(const SimilarityBatch& batch, const TemperatureSchedule& sched, LossVariant variant);

/// Σ over (rank-i positive, negative) pairs of max(d_p − d_n + m_i, 0).
/// Inputs are distances; gradients are with respect to the distances and
/// use subgradient 0 at the hinge corner.
LossResult triplet_ranked(const DistanceBatch& distances, const std::vector<double>& margins);

/// Builds euclidean distances from raw embeddings for triplet_ranked.
DistanceBatch distances_from_embeddings(const Vec64& query, const std::vector<std::vector<Vec64>>& positives_by_rank,
                                        const std::vector<Vec64>& negatives);

/// Unit-sphere distance sqrt(2 − 2s) for cosine similarity s, and its derivative.
double sphere_distance(double cosine);
double sphere_distance_derivative(double cosine);

/// Parameters shared by every variant, for uniform dispatch.
struct LossSettings {
  LossVariant variant = LossVariant::kRinceIn;
  std::vector<double> taus{0.1, 0.225};
  bool allow_unordered_taus = false;
  std::vector<double> triplet_margins{0.5, 1.0};
};

/// Dispatches on settings.variant. Single-rank variants use taus[0].
/// Triplet interprets the batch as cosine similarities of unit vectors and
/// returns gradients with respect to those similarities.
LossResult evaluate_loss(const SimilarityBatch& batch, const LossSettings& settings);

/// Central differences (f(x+h) − f(x−h)) / 2h for every score, shaped like the batch.
SimilarityBatch finite_diff_grad(const std::function<double(const SimilarityBatch&)>& loss,
                                 const SimilarityBatch& batch, double h);

}  // namespace rince
