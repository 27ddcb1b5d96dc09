#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "rince/evaluation.hpp"
#include "rince/rng.hpp"
#include "support/metric_oracles.hpp"

using namespace rince;
using rince::testing::brute_auroc;
using rince::testing::oracle_ap;

namespace {

Vec64 random_vec(std::size_t n, SeededRng& rng, double scale = 1.0) {
  Vec64 v(n);
  for (double& x : v) x = rng.normal(0.0, scale);
  return v;
}

Mat64 random_rotation(std::size_t d, SeededRng& rng) {
  std::vector<Vec64> q;
  while (q.size() < d) {
    Vec64 v = random_vec(d, rng);
    for (const Vec64& u : q) {
      const double p = dot(v, u);
      for (std::size_t i = 0; i < d; ++i) v[i] -= p * u[i];
    }
    q.push_back(normalized(v));
  }
  Mat64 r(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) r(i, j) = q[i][j];
  return r;
}

Vec64 apply(const Mat64& m, const Vec64& x) {
  Vec64 y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) y[i] = dot(m.row(i), x);
  return y;
}

struct Clusters {
  std::vector<Vec64> x;
  std::vector<std::size_t> y;
};

Clusters clusters(std::size_t classes, std::size_t per_class, std::size_t d, double noise, SeededRng& rng) {
  Clusters c;
  for (std::size_t k = 0; k < classes; ++k) {
    const Vec64 center = random_vec(d, rng);
    for (std::size_t i = 0; i < per_class; ++i) {
      Vec64 v = center;
      for (double& x : v) x += rng.normal(0.0, noise);
      c.x.push_back(v);
      c.y.push_back(k);
    }
  }
  return c;
}

}  // namespace

TEST_CASE("auroc examples") {
  const std::vector<double> hi{5, 6, 7}, lo{1, 2, 3};
  CHECK(auroc(hi, lo) == 1.0);
  CHECK(auroc(lo, hi) == 0.0);
  const std::vector<double> same(5, 0.3);
  CHECK(auroc(same, same) == 0.5);
  CHECK(auroc(std::vector<double>{3, 2}, std::vector<double>{2, 1}) == 0.875);
  CHECK_THROWS_AS((auroc(std::vector<double>{}, lo)), ConfigError);
}

TEST_CASE("auroc equals brute-force pairwise comparison") {
  SeededRng rng(1);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> in(1 + rng.below(100)), out(1 + rng.below(100));
    const bool coarse = rng.below(2) == 0;
    for (double& v : in) v = coarse ? static_cast<double>(rng.below(6)) : rng.normal(0.5, 1.0);
    for (double& v : out) v = coarse ? static_cast<double>(rng.below(6)) : rng.normal();
    CHECK(auroc(in, out) == brute_auroc(in, out));
    if (!coarse) CHECK(auroc(in, out) + auroc(out, in) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("average precision matches the exhaustive oracle") {
  CHECK(average_precision({true, true, false}) == 1.0);
  CHECK(average_precision({true, false, true}) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(average_precision({false, false}) == 0.0);
  for (std::size_t n = 1; n <= 12; ++n) {
    // Every relevance pattern for short rankings, a random sample for longer ones.
    const std::size_t patterns = std::size_t{1} << n;
    for (std::size_t mask = 0; mask < patterns; mask += n <= 10 ? 1 : 7) {
      std::vector<bool> rel(n);
      for (std::size_t k = 0; k < n; ++k) rel[k] = (mask >> k) & 1;
      CHECK(average_precision(rel) == oracle_ap(rel));
      const std::size_t hits = static_cast<std::size_t>(std::count(rel.begin(), rel.end(), true));
      bool prefix = true;
      for (std::size_t k = 0; k < hits; ++k) prefix = prefix && rel[k];
      if (hits > 0) CHECK((average_precision(rel) == 1.0) == prefix);
    }
  }
}

TEST_CASE("retrieval on a hand-worked four-point instance") {
  auto at = [](double deg) {
    const double r = deg * std::numbers::pi / 180.0;
    return Vec64{std::cos(r), std::sin(r)};
  };
  // Class 0 at 0, 10 and 120 degrees; class 1 at 25 degrees.
  const std::vector<Vec64> f{at(0), at(10), at(120), at(25)};
  const std::vector<std::size_t> y{0, 0, 0, 1};
  const RetrievalResult r = retrieval(f, y);
  CHECK(r.queries == 3);
  CHECK(r.skipped == 1);
  // Query 0: R N R; query 1: R N R; query 2: N R R.
  const double expected = (5.0 / 6.0 + 5.0 / 6.0 + (0.5 + 2.0 / 3.0) / 2.0) / 3.0;
  CHECK(r.mean_ap == doctest::Approx(expected).epsilon(1e-15));
  CHECK(r.recall_at_1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("retrieval mean AP equals per-query oracle AP") {
  SeededRng rng(2);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 4 + rng.below(9);
    std::vector<Vec64> f;
    std::vector<std::size_t> y;
    for (std::size_t i = 0; i < n; ++i) {
      f.push_back(random_vec(3, rng));
      y.push_back(rng.below(3));
    }
    double sum = 0, r1 = 0;
    std::size_t queries = 0;
    for (std::size_t q = 0; q < n; ++q) {
      std::vector<std::size_t> others;
      for (std::size_t j = 0; j < n; ++j)
        if (j != q) others.push_back(j);
      std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
        return cosine_similarity(f[q], f[a]) > cosine_similarity(f[q], f[b]);
      });
      std::vector<bool> rel;
      for (std::size_t j : others) rel.push_back(y[j] == y[q]);
      if (std::find(rel.begin(), rel.end(), true) == rel.end()) continue;
      sum += oracle_ap(rel);
      r1 += rel[0] ? 1.0 : 0.0;
      ++queries;
    }
    const RetrievalResult r = retrieval(f, y);
    REQUIRE(r.queries == queries);
    if (queries == 0) continue;
    CHECK(r.mean_ap == doctest::Approx(sum / static_cast<double>(queries)).epsilon(1e-14));
    CHECK(r.recall_at_1 == doctest::Approx(r1 / static_cast<double>(queries)).epsilon(1e-14));
  }
}

TEST_CASE("perfect clusters retrieve perfectly; noise retrieves near the prior") {
  std::vector<Vec64> f;
  std::vector<std::size_t> y;
  for (std::size_t k = 0; k < 4; ++k)
    for (int i = 0; i < 5; ++i) {
      Vec64 v(4, 0.0);
      v[k] = 1.0;
      f.push_back(v);
      y.push_back(k);
    }
  const RetrievalResult r = retrieval(f, y);
  CHECK(r.recall_at_1 == 1.0);
  CHECK(r.mean_ap == 1.0);
  REQUIRE(r.pr_curve.size() == 11);
  for (double p : r.pr_curve) CHECK(p == 1.0);

  SeededRng rng(3);
  std::vector<Vec64> noise;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 400; ++i) {
    noise.push_back(random_vec(16, rng));
    labels.push_back(rng.below(4));
  }
  CHECK(std::abs(retrieval(noise, labels).mean_ap - 0.25) < 0.05);
}

TEST_CASE("linear probe") {
  std::vector<Vec64> x;
  std::vector<std::size_t> y;
  for (int i = 0; i < 60; ++i) {
    Vec64 v(3, 0.0);
    v[i % 3] = 1.0;
    x.push_back(v);
    y.push_back(i % 3);
  }
  CHECK(linear_probe(x, y, x, y) == 1.0);
  CHECK_THROWS_AS(linear_probe(x, std::vector<std::size_t>(60, 1), x, y), ConfigError);

  SeededRng rng(4);
  const std::size_t classes = 5, n = 1000;
  std::vector<Vec64> tx, ex;
  std::vector<std::size_t> ty, ey;
  for (std::size_t i = 0; i < n; ++i) {
    tx.push_back(random_vec(8, rng));
    ty.push_back(rng.below(classes));
    ex.push_back(random_vec(8, rng));
    ey.push_back(rng.below(classes));
  }
  const double p = 1.0 / classes;
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
  CHECK(std::abs(linear_probe(tx, ty, ex, ey) - p) <= 3 * sigma);
}

TEST_CASE("gaussian class model fitting") {
  SeededRng rng(5);
  std::vector<Vec64> x;
  const std::size_t n = 4000;
  for (std::size_t i = 0; i < n; ++i) x.push_back(Vec64{1.0 + rng.normal(0.0, 2.0), -0.5 + rng.normal(0.0, 0.5)});
  const GaussianClassModel m = fit_ood_model(x, std::vector<std::size_t>(n, 0));
  CHECK(std::abs(m.means[0][0] - 1.0) <= 3 * 2.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(m.means[0][1] + 0.5) <= 3 * 0.5 / std::sqrt(static_cast<double>(n)));

  const GaussianClassModel twin = fit_ood_model({Vec64{1, 2}, Vec64{1, 2}}, {0, 0});
  CHECK(std::isfinite(ood_score(twin, Vec64{1, 2})));

  // Two classes against direct sample statistics.
  const std::vector<Vec64> pts{{0, 0}, {2, 0}, {0, 2}, {5, 5}, {7, 5}, {5, 8}, {7, 8}};
  const std::vector<std::size_t> lab{0, 0, 0, 1, 1, 1, 1};
  const GaussianClassModel two = fit_ood_model(pts, lab);
  REQUIRE(two.classes == std::vector<std::size_t>{0, 1});
  CHECK(two.means[0] == Vec64{2.0 / 3.0, 2.0 / 3.0});
  CHECK(two.means[1] == Vec64{6.0, 6.5});
  // Class 1: var x = 1, var y = 2.25, cov = 0; trace/d = 1.625.
  const double eps = 1e-6 * 1.625;
  const Mat64 cov = matmul(two.chol[1], two.chol[1].transposed());
  CHECK(cov(0, 0) == doctest::Approx(1.0 + eps).epsilon(1e-13));
  CHECK(cov(1, 1) == doctest::Approx(2.25 + eps).epsilon(1e-13));
  CHECK(std::abs(cov(0, 1)) <= 1e-13);
}

TEST_CASE("ood score examples") {
  GaussianClassModel m;
  m.classes = {0, 1};
  m.means = {Vec64{0, 0, 0}, Vec64{5, 5, 5}};
  m.chol = {Mat64::identity(3), Mat64::identity(3)};
  CHECK(ood_score(m, Vec64{5, 5, 5}) == doctest::Approx(-1.5 * std::log(2 * std::numbers::pi)));
  double prev = INFINITY;
  for (double r = 0; r < 5; r += 0.25) {
    const double s = ood_score(m, Vec64{-r, -r, -r});
    CHECK(s <= prev);
    prev = s;
  }
  // Anisotropic class against a dense-inverse oracle.
  GaussianClassModel a;
  a.classes = {0};
  a.means = {Vec64{0.5, -1.0}};
  a.chol = {cholesky(Mat64(2, 2, {3.0, 1.2, 1.2, 1.0}))};
  const double det = 3.0 - 1.44;
  const double dx = 1.0 - 0.5, dy = 0.0 + 1.0;
  const double quad = (1.0 * dx * dx - 2 * 1.2 * dx * dy + 3.0 * dy * dy) / det;
  CHECK(std::abs(ood_score(a, Vec64{1.0, 0.0}) - (-0.5 * quad - 0.5 * std::log(det) - std::log(2 * std::numbers::pi))) <=
        1e-12);
}

TEST_CASE("ood score ignores class relabeling") {
  SeededRng rng(6);
  const Clusters c = clusters(4, 30, 3, 0.3, rng);
  std::vector<std::size_t> relabeled;
  for (std::size_t y : c.y) relabeled.push_back((y * 3 + 2) % 4 + 10);
  const GaussianClassModel a = fit_ood_model(c.x, c.y);
  const GaussianClassModel b = fit_ood_model(c.x, relabeled);
  for (int t = 0; t < 50; ++t) {
    const Vec64 x = random_vec(3, rng, 2.0);
    CHECK(ood_score(a, x) == doctest::Approx(ood_score(b, x)).epsilon(1e-13));
  }
}

TEST_CASE("class similarity matrix") {
  std::vector<Vec64> onehot;
  std::vector<std::size_t> y;
  for (std::size_t k = 0; k < 3; ++k)
    for (int i = 0; i < 2; ++i) {
      Vec64 v(3, 0.0);
      v[k] = 1.0;
      onehot.push_back(v);
      y.push_back(k);
    }
  CHECK(class_similarity_matrix(onehot, y, 3) == Mat64::identity(3));
  const Mat64 ones = class_similarity_matrix(std::vector<Vec64>(6, Vec64{0.3, -1.0}), y, 3);
  for (double v : ones.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

  SeededRng rng(7);
  const Clusters c = clusters(6, 10, 5, 0.5, rng);
  const Mat64 s = class_similarity_matrix(c.x, c.y, 6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(s(i, j) - s(j, i)) <= 1e-12);

  const BlockMeans b = block_means(Mat64(4, 4, {1, .5, 0, 0, .5, 1, 0, .1, 0, 0, 1, .7, 0, .1, .7, 1}), 2);
  CHECK(b.within_class == 1.0);
  CHECK(b.within_superclass == doctest::Approx(0.6));
  CHECK(b.cross == doctest::Approx(0.025));
}

TEST_CASE("alignment and uniformity") {
  SeededRng rng(8);
  std::vector<Vec64> a;
  for (int i = 0; i < 10; ++i) a.push_back(random_vec(4, rng));
  CHECK(alignment_uniformity(a, a, a).alignment == 0.0);
  const AlignmentUniformity au = alignment_uniformity({}, {}, {Vec64{1, 0}, Vec64{-3, 0}});
  CHECK(au.uniformity == doctest::Approx(-8.0).epsilon(1e-15));
  CHECK(alignment_uniformity(a, a, a).uniformity <= 0.0);
  CHECK_THROWS_AS((alignment_uniformity({}, {}, {Vec64{1, 0}})), ConfigError);
  CHECK_THROWS_AS((alignment_uniformity(a, {}, a)), ConfigError);
}

TEST_CASE("cosine metrics are invariant under a global rotation") {
  SeededRng rng(9);
  const Clusters c = clusters(5, 12, 6, 0.6, rng);
  const Mat64 rot = random_rotation(6, rng);
  std::vector<Vec64> rx;
  for (const Vec64& x : c.x) rx.push_back(apply(rot, x));

  const RetrievalResult a = retrieval(c.x, c.y), b = retrieval(rx, c.y);
  CHECK(std::abs(a.mean_ap - b.mean_ap) <= 1e-9);
  CHECK(std::abs(a.recall_at_1 - b.recall_at_1) <= 1e-9);
  const Mat64 sa = class_similarity_matrix(c.x, c.y, 5), sb = class_similarity_matrix(rx, c.y, 5);
  for (std::size_t i = 0; i < sa.values().size(); ++i) CHECK(std::abs(sa.values()[i] - sb.values()[i]) <= 1e-9);
  std::vector<Vec64> half_a(c.x.begin(), c.x.begin() + 30), half_b(c.x.begin() + 30, c.x.end());
  std::vector<Vec64> rhalf_a(rx.begin(), rx.begin() + 30), rhalf_b(rx.begin() + 30, rx.end());
  const AlignmentUniformity ua = alignment_uniformity(half_a, half_b, c.x);
  const AlignmentUniformity ub = alignment_uniformity(rhalf_a, rhalf_b, rx);
  CHECK(std::abs(ua.alignment - ub.alignment) <= 1e-9);
  CHECK(std::abs(ua.uniformity - ub.uniformity) <= 1e-9);

  std::vector<Vec64> in_a(c.x.begin(), c.x.begin() + 48), in_b(rx.begin(), rx.begin() + 48);
  std::vector<std::size_t> in_y(c.y.begin(), c.y.begin() + 48);
  const GaussianClassModel ma = fit_ood_model(in_a, in_y), mb = fit_ood_model(in_b, in_y);
  std::vector<double> ia, ib, oa, ob;
  for (std::size_t i = 0; i < 48; ++i) {
    ia.push_back(ood_score(ma, c.x[i]));
    ib.push_back(ood_score(mb, rx[i]));
  }
  for (std::size_t i = 48; i < c.x.size(); ++i) {
    oa.push_back(ood_score(ma, c.x[i]));
    ob.push_back(ood_score(mb, rx[i]));
  }
  CHECK(std::abs(auroc(ia, oa) - auroc(ib, ob)) <= 1e-9);
}
