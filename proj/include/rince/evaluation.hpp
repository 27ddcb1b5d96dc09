#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rince/numeric.hpp"

namespace rince {

struct ProbeConfig {
  std::size_t epochs = 100;
  double lr = 0.5;
  std::vector<std::size_t> decay_epochs{60, 75, 90};
  double decay = 0.1;
  double weight_decay = 0.0;
};

/// Multinomial logistic regression on standardized features, trained by
/// full-batch gradient descent; returns accuracy on the test split.
/// Throws ConfigError when fewer than two classes are present.
double linear_probe(const std::vector<Vec64>& train_x, const std::vector<std::size_t>& train_y,
                    const std::vector<Vec64>& test_x, const std::vector<std::size_t>& test_y, const ProbeConfig& cfg = {});

/// AP of one ranking given per-position relevance flags (0 when nothing is relevant).
double average_precision(const std::vector<bool>& relevant);

struct RetrievalResult {
  double recall_at_1 = 0.0;
  double mean_ap = 0.0;
  /// Mean interpolated precision at recall 0.0, 0.1, ..., 1.0.
  std::vector<double> pr_curve;
  std::size_t queries = 0;
  std::size_t skipped = 0;  ///< queries with no other same-label sample
};

/// Leave-one-out cosine retrieval within `features`. Ties in similarity are
/// broken by sample index.
RetrievalResult retrieval(const std::vector<Vec64>& features, const std::vector<std::size_t>& labels);

enum class CovarianceKind { kFull, kDiagonal };

struct GaussianClassModel {
  std::vector<std::size_t> classes;
  std::vector<Vec64> means;
  std::vector<Mat64> chol;  ///< Cholesky factor of the regularized covariance
};

/// Per-class sample mean and maximum-likelihood covariance plus ε·I.
GaussianClassModel fit_ood_model(const std::vector<Vec64>& features, const std::vector<std::size_t>& labels,
                                 CovarianceKind kind = CovarianceKind::kFull);

/// max_c log N(x; μ_c, Σ_c).
double ood_score(const GaussianClassModel& model, std::span<const double> x);

/// P(inlier score > outlier score) with ties counted ½.
double auroc(std::span<const double> inliers, std::span<const double> outliers);

/// Entry (i, j): mean cosine over all cross pairs; (i, i): over distinct
/// within-class pairs (1 for a single-sample class).
Mat64 class_similarity_matrix(const std::vector<Vec64>& features, const std::vector<std::size_t>& labels,
                              std::size_t num_classes);

struct BlockMeans {
  double within_class = 0.0;
  double within_superclass = 0.0;
  double cross = 0.0;
};

/// Averages of the diagonal, same-superclass off-diagonal and remaining entries.
BlockMeans block_means(const Mat64& sim, std::size_t classes_per_superclass);

struct AlignmentUniformity {
  double alignment = 0.0;
  double uniformity = 0.0;
};

/// Alignment: mean ‖u − v‖² over positive pairs (a[i], b[i]). Uniformity:
/// log mean exp(−2‖u − v‖²) over distinct pairs of `all`. Inputs are
/// normalized first.
AlignmentUniformity alignment_uniformity(const std::vector<Vec64>& a, const std::vector<Vec64>& b,
                                         const std::vector<Vec64>& all);

}  // namespace rince
