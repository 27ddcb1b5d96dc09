#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rince/numeric.hpp"
#include "rince/rng.hpp"

using namespace rince;

TEST_CASE("cosine similarity examples") {
  CHECK(cosine_similarity(Vec64{1, 0}, Vec64{1, 0}) == 1.0);
  CHECK(cosine_similarity(Vec64{1, 0}, Vec64{0, 1}) == 0.0);
  CHECK(cosine_similarity(Vec64{3, 4}, Vec64{4, 3}) == doctest::Approx(0.96).epsilon(1e-15));
  CHECK_THROWS_AS((cosine_similarity(Vec64{0, 0}, Vec64{1, 0})), NumericError);
  CHECK_THROWS_WITH((cosine_similarity(Vec64{1, 0}, Vec64{0, 0})), "degenerate embedding");
}

TEST_CASE("cosine similarity is symmetric and scale invariant") {
  SeededRng rng(11);
  for (int t = 0; t < 200; ++t) {
    Vec64 a(7), b(7);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const double alpha = rng.uniform(0.01, 100.0);
    const double beta = rng.uniform(0.01, 100.0);
    Vec64 sa = a, sb = b;
    for (auto& v : sa) v *= alpha;
    for (auto& v : sb) v *= beta;
    const double s = cosine_similarity(a, b);
    CHECK(std::abs(s - cosine_similarity(b, a)) <= 1e-12);
    CHECK(std::abs(s - cosine_similarity(sa, sb)) <= 1e-12);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("log_sum_exp examples") {
  CHECK(log_sum_exp(Vec64{0, 0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(log_sum_exp(Vec64{1000, 1000}) == doctest::Approx(1000 + std::log(2.0)).epsilon(1e-15));
  // 200-digit reference from tests/oracles/gen_loss_golden.py.
  CHECK(std::abs(log_sum_exp(Vec64{0.9 / 0.1, 0.1 / 0.1, -0.2 / 0.1}) - 9.000352102333391) <= 1e-13);
  CHECK_THROWS_AS((log_sum_exp(Vec64{})), ConfigError);
}

TEST_CASE("log_sum_exp is shift equivariant") {
  SeededRng rng(12);
  for (int t = 0; t < 200; ++t) {
    Vec64 xs(1 + rng.below(20));
    for (auto& v : xs) v = rng.normal(0.0, 30.0);
    const double c = rng.uniform(-500.0, 500.0);
    Vec64 shifted = xs;
    for (auto& v : shifted) v += c;
    const double lhs = log_sum_exp(shifted);
    const double rhs = log_sum_exp(xs) + c;
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("cholesky examples") {
  CHECK(cholesky(Mat64::identity(3)) == Mat64::identity(3));
  const Mat64 l = cholesky(Mat64(2, 2, {4, 2, 2, 3}));
  CHECK(l(0, 0) == doctest::Approx(2.0));
  CHECK(l(0, 1) == 0.0);
  CHECK(l(1, 0) == doctest::Approx(1.0));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_WITH((cholesky(Mat64(2, 2, {1, 2, 2, 1}))), "covariance not positive definite");
  CHECK_THROWS_AS((cholesky(Mat64(2, 2, {1, 0.5, 0.4, 1}))), ConfigError);
}

TEST_CASE("cholesky reconstructs random SPD matrices") {
  SeededRng rng(13);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.below(8);
    Mat64 a(n, n);
    for (auto& v : a.values()) v = rng.normal();
    Mat64 m = matmul(a, a.transposed());
    for (std::size_t i = 0; i < n; ++i) m(i, i) += 0.1;
    const Mat64 l = cholesky(m);
    const Mat64 back = matmul(l, l.transposed());
    double scale = 0.0;
    for (double v : m.values()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < n * n; ++i) CHECK(std::abs(back.values()[i] - m.values()[i]) <= 1e-10 * scale);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = r + 1; c < n; ++c) CHECK(l(r, c) == 0.0);
  }
}

TEST_CASE("regularize_covariance adds a trace-scaled ridge") {
  const Mat64 r = regularize_covariance(Mat64(2, 2, {2, 0, 0, 4}));
  CHECK(r(0, 0) == doctest::Approx(2 + 1e-6 * 3));
  CHECK(r(1, 1) == doctest::Approx(4 + 1e-6 * 3));
  const Mat64 z = regularize_covariance(Mat64(3, 3));
  CHECK(z(0, 0) > 0.0);
  CHECK_NOTHROW(cholesky(z));
}

TEST_CASE("mvn_log_density examples") {
  for (std::size_t d : {1u, 2u, 5u}) {
    const Vec64 mean(d, 0.3);
    CHECK(mvn_log_density(mean, mean, Mat64::identity(d)) ==
          doctest::Approx(-0.5 * static_cast<double>(d) * std::log(2 * std::numbers::pi)));
  }
  CHECK(mvn_log_density(Vec64{1.0}, Vec64{0.0}, Mat64::identity(1)) ==
        doctest::Approx(-0.5 - 0.5 * std::log(2 * std::numbers::pi)));
  CHECK_THROWS_AS((mvn_log_density(Vec64{1.0, 2.0}, Vec64{0.0}, Mat64::identity(1))), ConfigError);
}

TEST_CASE("mvn_log_density matches a dense-inverse oracle in two dimensions") {
  const double s00 = 2.0, s01 = 0.6, s11 = 1.0;
  const Vec64 x{1.0, -0.5};
  const Vec64 mu{0.2, 0.1};
  const double det = s00 * s11 - s01 * s01;
  const double i00 = s11 / det, i01 = -s01 / det, i11 = s00 / det;
  const double d0 = x[0] - mu[0], d1 = x[1] - mu[1];
  const double quad = d0 * d0 * i00 + 2 * d0 * d1 * i01 + d1 * d1 * i11;
  const double expected = -0.5 * quad - 0.5 * std::log(det) - std::log(2 * std::numbers::pi);
  const double got = mvn_log_density(x, mu, cholesky(Mat64(2, 2, {s00, s01, s01, s11})));
  CHECK(std::abs(got - expected) <= 1e-12);
}

TEST_CASE("one-dimensional density integrates to one") {
  const Mat64 chol(1, 1, {0.7});
  const double h = 1e-3;
  double total = 0.0;
  for (double x = -10.0; x <= 10.0; x += h) total += std::exp(mvn_log_density(Vec64{x}, Vec64{0.4}, chol)) * h;
  CHECK(std::abs(total - 1.0) <= 1e-6);
}

TEST_CASE("equal seeds give equal draws and streams are independent") {
  SeededRng a(2024), b(2024);
  for (int i = 0; i < 10000; ++i) REQUIRE(a.next_u64() == b.next_u64());
  SeededRng root(5);
  SeededRng d1 = root.split(Stream::kData);
  SeededRng init = root.split(Stream::kInit);
  init.next_u64();
  SeededRng d2 = root.split(Stream::kData);
  for (int i = 0; i < 100; ++i) CHECK(d1.next_u64() == d2.next_u64());
  CHECK(root.split(Stream::kData).next_u64() != root.split(Stream::kInit).next_u64());
}

TEST_CASE("draw sequence is locked across builds") {
  SeededRng r(123);
  CHECK(r.next_u64() == 0xe050a2a38d8ef504ULL);
  CHECK(r.next_u64() == 0x9868b9a34e3ee6bbULL);
  CHECK(r.next_u64() == 0x7c13a2e15b2c95f0ULL);
  CHECK(SeededRng(123).split(Stream::kData).next_u64() == 0x5e8a2ea3c0e1c99dULL);
}

TEST_CASE("uniform and normal draws have the right moments") {
  SeededRng r(77);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(std::abs(su / n - 0.5) < 0.005);
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(std::abs(sn2 / n - 1.0) < 0.02);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[r.below(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("cursor round trip resumes the stream") {
  SeededRng r(9);
  for (int i = 0; i < 17; ++i) r.next_u64();
  SeededRng resumed = SeededRng::from_cursor(r.seed(), r.key(), r.counter());
  for (int i = 0; i < 50; ++i) CHECK(resumed.next_u64() == r.next_u64());
}
