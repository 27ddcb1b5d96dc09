#include "rince/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace rince {
namespace {

std::vector<Vec64> unit_rows(const std::vector<Vec64>& xs) {
  std::vector<Vec64> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(normalized(x));
  return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

void check_table(const std::vector<Vec64>& xs, const std::vector<std::size_t>& labels, const char* what) {
  if (xs.size() != labels.size()) throw ConfigError(std::string(what) + ": one label per feature row required");
  for (const auto& x : xs)
    if (x.size() != xs.front().size()) throw ConfigError(std::string(what) + ": ragged feature rows");
}

}  // namespace

double linear_probe(const std::vector<Vec64>& train_x, const std::vector<std::size_t>& train_y,
                    const std::vector<Vec64>& test_x, const std::vector<std::size_t>& test_y, const ProbeConfig& cfg) {
  check_table(train_x, train_y, "linear_probe");
  check_table(test_x, test_y, "linear_probe");
  if (train_x.empty() || test_x.empty()) throw ConfigError("linear_probe: empty split");
  std::map<std::size_t, std::size_t> index;
  for (std::size_t y : train_y) index.emplace(y, 0);
  if (index.size() < 2) throw ConfigError("linear_probe: need at least two classes");
  std::size_t next = 0;
  for (auto& [label, i] : index) i = next++;
  const std::size_t n = train_x.size();
  const std::size_t d = train_x.front().size();
  const std::size_t c = index.size();

  Vec64 mean(d, 0.0);
  Vec64 scale(d, 0.0);
  for (const auto& x : train_x)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[j];
  for (double& m : mean) m /= static_cast<double>(n);
  for (const auto& x : train_x)
    for (std::size_t j = 0; j < d; ++j) scale[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
  for (double& s : scale) {
    s = std::sqrt(s / static_cast<double>(n));
    s = s > 1e-12 ? 1.0 / s : 1.0;
  }
  auto standardize = [&](const Vec64& x) {
    Vec64 z(d);
    for (std::size_t j = 0; j < d; ++j) z[j] = (x[j] - mean[j]) * scale[j];
    return z;
  };
  std::vector<Vec64> xs;
  xs.reserve(n);
  for (const auto& x : train_x) xs.push_back(standardize(x));

  Mat64 w(c, d);
  Vec64 b(c, 0.0);
  double lr = cfg.lr;
  Vec64 logits(c);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (std::find(cfg.decay_epochs.begin(), cfg.decay_epochs.end(), epoch) != cfg.decay_epochs.end()) lr *= cfg.decay;
    Mat64 gw(c, d);
    Vec64 gb(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) logits[k] = b[k] + dot(w.row(k), xs[i]);
      const double lse = log_sum_exp(logits);
      const std::size_t y = index.at(train_y[i]);
      for (std::size_t k = 0; k < c; ++k) {
        const double g = std::exp(logits[k] - lse) - (k == y ? 1.0 : 0.0);
        gb[k] += g;
        auto row = gw.row(k);
        for (std::size_t j = 0; j < d; ++j) row[j] += g * xs[i][j];
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < c; ++k) {
      b[k] -= lr * gb[k] * inv_n;
      auto row = w.row(k);
      const auto grow = gw.row(k);
      for (std::size_t j = 0; j < d; ++j) row[j] -= lr * (grow[j] * inv_n + cfg.weight_decay * row[j]);
    }
  }

  std::vector<std::size_t> labels_by_index(c);
  for (const auto& [label, i] : index) labels_by_index[i] = label;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    const Vec64 z = standardize(test_x[i]);
    std::size_t best = 0;
    double best_logit = -INFINITY;
    for (std::size_t k = 0; k < c; ++k) {
      const double l = b[k] + dot(w.row(k), z);
      if (l > best_logit) {
        best_logit = l;
        best = k;
      }
    }
    if (labels_by_index[best] == test_y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_x.size());
}

double average_precision(const std::vector<bool>& relevant) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < relevant.size(); ++k) {
    if (!relevant[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

RetrievalResult retrieval(const std::vector<Vec64>& features, const std::vector<std::size_t>& labels) {
  check_table(features, labels, "retrieval");
  const std::vector<Vec64> unit = unit_rows(features);
  const std::size_t n = unit.size();
  RetrievalResult out;
  out.pr_curve.assign(11, 0.0);
  std::size_t top1 = 0;
  double ap_sum = 0.0;
  std::vector<std::size_t> order;
  std::vector<double> sim(n);
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t total_relevant =
        static_cast<std::size_t>(std::count(labels.begin(), labels.end(), labels[q])) - 1;
    if (total_relevant == 0) {
      ++out.skipped;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) sim[i] = dot(unit[q], unit[i]);
    order.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (i != q) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
    std::vector<bool> rel(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) rel[k] = labels[order[k]] == labels[q];
    if (rel.front()) ++top1;
    ap_sum += average_precision(rel);

    // Interpolated precision: best precision at any cut-off reaching recall r.
    std::vector<double> best(11, 0.0);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < rel.size(); ++k) {
      if (rel[k]) ++hits;
      const double precision = static_cast<double>(hits) / static_cast<double>(k + 1);
      const double recall = static_cast<double>(hits) / static_cast<double>(total_relevant);
      for (std::size_t level = 0; level < 11; ++level)
        if (recall + 1e-12 >= static_cast<double>(level) / 10.0) best[level] = std::max(best[level], precision);
    }
    for (std::size_t level = 0; level < 11; ++level) out.pr_curve[level] += best[level];
    ++out.queries;
  }
  if (out.queries > 0) {
    const double inv = 1.0 / static_cast<double>(out.queries);
    out.recall_at_1 = static_cast<double>(top1) * inv;
    out.mean_ap = ap_sum * inv;
    for (double& p : out.pr_curve) p *= inv;
  }
  return out;
}

GaussianClassModel fit_ood_model(const std::vector<Vec64>& features, const std::vector<std::size_t>& labels,
                                 CovarianceKind kind) {
  check_table(features, labels, "fit_ood_model");
  if (features.empty()) throw ConfigError("fit_ood_model: no samples");
  const std::size_t d = features.front().size();
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  GaussianClassModel model;
  for (const auto& [label, idx] : members) {
    const double inv_n = 1.0 / static_cast<double>(idx.size());
    Vec64 mu(d, 0.0);
    for (std::size_t i : idx)
      for (std::size_t j = 0; j < d; ++j) mu[j] += features[i][j];
    for (double& m : mu) m *= inv_n;
    Mat64 cov(d, d);
    for (std::size_t i : idx)
      for (std::size_t r = 0; r < d; ++r) {
        const double dr = features[i][r] - mu[r];
        for (std::size_t c = 0; c < d; ++c) cov(r, c) += dr * (features[i][c] - mu[c]);
      }
    for (double& v : cov.values()) v *= inv_n;
    if (kind == CovarianceKind::kDiagonal)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c)
          if (r != c) cov(r, c) = 0.0;
    model.classes.push_back(label);
    model.means.push_back(std::move(mu));
    model.chol.push_back(cholesky(regularize_covariance(cov)));
  }
  return model;
}

double ood_score(const GaussianClassModel& model, std::span<const double> x) {
  if (model.means.empty()) throw ConfigError("ood_score: empty model");
  double best = -INFINITY;
  for (std::size_t c = 0; c < model.means.size(); ++c)
    best = std::max(best, mvn_log_density(x, model.means[c], model.chol[c]));
  return best;
}

double auroc(std::span<const double> inliers, std::span<const double> outliers) {
  if (inliers.empty() || outliers.empty()) throw ConfigError("auroc: both score sets must be nonempty");
  std::vector<double> sorted(outliers.begin(), outliers.end());
  std::sort(sorted.begin(), sorted.end());
  // Twice the Mann-Whitney U statistic, kept integral so the result is exact.
  std::uint64_t twice_u = 0;
  for (double s : inliers) {
    const auto [lo, hi] = std::equal_range(sorted.begin(), sorted.end(), s);
    twice_u += 2 * static_cast<std::uint64_t>(lo - sorted.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(inliers.size()) * static_cast<double>(outliers.size()));
}

Mat64 class_similarity_matrix(const std::vector<Vec64>& features, const std::vector<std::size_t>& labels,
                              std::size_t num_classes) {
  check_table(features, labels, "class_similarity_matrix");
  const std::vector<Vec64> unit = unit_rows(features);
  Mat64 sum(num_classes, num_classes);
  Mat64 count(num_classes, num_classes);
  for (std::size_t i = 0; i < unit.size(); ++i) {
    if (labels[i] >= num_classes) throw ConfigError("class_similarity_matrix: label out of range");
    for (std::size_t j = i + 1; j < unit.size(); ++j) {
      const double s = dot(unit[i], unit[j]);
      const std::size_t a = labels[i];
      const std::size_t b = labels[j];
      sum(a, b) += s;
      count(a, b) += 1.0;
      if (a != b) {
        sum(b, a) += s;
        count(b, a) += 1.0;
      }
    }
  }
  Mat64 out(num_classes, num_classes);
  for (std::size_t a = 0; a < num_classes; ++a)
    for (std::size_t b = 0; b < num_classes; ++b) {
      if (count(a, b) > 0.0)
        out(a, b) = sum(a, b) / count(a, b);
      else
        out(a, b) = a == b ? 1.0 : NAN;
    }
  return out;
}

BlockMeans block_means(const Mat64& sim, std::size_t classes_per_superclass) {
  if (classes_per_superclass == 0) throw ConfigError("block_means: classes_per_superclass must be positive");
  double sums[3] = {0.0, 0.0, 0.0};
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t a = 0; a < sim.rows(); ++a)
    for (std::size_t b = 0; b < sim.cols(); ++b) {
      const std::size_t slot = a == b ? 0 : (a / classes_per_superclass == b / classes_per_superclass ? 1 : 2);
      if (std::isnan(sim(a, b))) continue;
      sums[slot] += sim(a, b);
      ++counts[slot];
    }
  auto mean = [&](int s) { return counts[s] ? sums[s] / static_cast<double>(counts[s]) : NAN; };
  return {mean(0), mean(1), mean(2)};
}

AlignmentUniformity alignment_uniformity(const std::vector<Vec64>& a, const std::vector<Vec64>& b,
                                         const std::vector<Vec64>& all) {
  if (a.size() != b.size()) throw ConfigError("alignment_uniformity: positive pair lists differ in length");
  if (all.size() < 2) throw ConfigError("alignment_uniformity: need at least two samples");
  AlignmentUniformity out;
  if (!a.empty()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += squared_distance(normalized(a[i]), normalized(b[i]));
    out.alignment = sum / static_cast<double>(a.size());
  }
  const std::vector<Vec64> unit = unit_rows(all);
  std::vector<double> terms;
  terms.reserve(unit.size() * (unit.size() - 1) / 2);
  for (std::size_t i = 0; i < unit.size(); ++i)
    for (std::size_t j = i + 1; j < unit.size(); ++j) terms.push_back(-2.0 * squared_distance(unit[i], unit[j]));
  out.uniformity = log_sum_exp(terms) - std::log(static_cast<double>(terms.size()));
  return out;
}

}  // namespace rince
