#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "rince/losses.hpp"
#include "rince/rng.hpp"
#include "support/batches.hpp"

using namespace rince;
using namespace rince::testing;

namespace {

SimilarityBatch make(std::vector<std::vector<double>> ranks, std::vector<double> negatives) {
  return SimilarityBatch{std::move(ranks), std::move(negatives)};
}

LossSettings settings(LossVariant v, std::vector<double> taus) {
  LossSettings s;
  s.variant = v;
  s.taus = std::move(taus);
  return s;
}

}  // namespace

TEST_CASE("infonce examples") {
  for (double s : {-0.5, 0.0, 0.7}) {
    for (double tau : {0.05, 0.1, 1.0}) {
      CHECK(infonce(make({{s}}, {s}), tau).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
      CHECK(infonce(make({{s}}, {s, s, s}), tau).value == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS((infonce(make({{0.5, 0.4}}, {0.1}), 0.1)), ConfigError);
  CHECK_THROWS_AS((infonce(make({{0.5}, {0.4}}, {0.1}), 0.1)), ConfigError);
  CHECK_THROWS_AS((infonce(make({{0.5}}, {}), 0.1)), ConfigError);
}

TEST_CASE("infonce gradient at symmetric scores") {
  const double tau = 0.2;
  for (std::size_t n : {1u, 3u, 10u}) {
    const SimilarityBatch b = make({{0.3}}, std::vector<double>(n, 0.3));
    const auto f = [&](const SimilarityBatch& x) { return infonce(x, tau).value; };
    const double expected = -static_cast<double>(n) / static_cast<double>(n + 1) / tau;
    CHECK(infonce(b, tau).grad_positives_by_rank[0][0] == doctest::Approx(expected).epsilon(1e-13));
    CHECK(std::abs(finite_diff_grad(f, b, 1e-5).positives_by_rank[0][0] - expected) <= 1e-8);
  }
}

TEST_CASE("finite_diff_grad on a quadratic") {
  const SimilarityBatch b = make({{0.3, -0.2}, {0.5}}, {0.1, -0.9, 0.0});
  const auto f = [](const SimilarityBatch& x) {
    double s = 0;
    for (double v : x.flatten()) s += v * v;
    return s;
  };
  const std::vector<double> g = finite_diff_grad(f, b, 1e-5).flatten();
  const std::vector<double> xs = b.flatten();
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(std::abs(g[i] - 2 * xs[i]) <= 1e-8);
}

TEST_CASE("log_out and log_in examples") {
  const SimilarityBatch one = make({{0.6}}, {0.2, -0.1});
  CHECK(log_out(one, 0.1).value == infonce(one, 0.1).value);
  CHECK(log_in(one, 0.1).value == infonce(one, 0.1).value);

  const SimilarityBatch twice = make({{0.6, 0.6}}, {0.2, -0.1});
  CHECK(log_out(twice, 0.1).value == doctest::Approx(2 * infonce(one, 0.1).value).epsilon(1e-14));

  CHECK(log_in(make({{0.8, 0.3}}, {}), 0.1).value == 0.0);
  CHECK_THROWS_AS((log_out(make({{}}, {0.1}), 0.1)), ConfigError);
  CHECK_THROWS_AS((log_in(make({{}}, {0.1}), 0.1)), ConfigError);

  const SimilarityBatch b = make({{0.8, 0.3}}, {0.0, -0.5});
  CHECK(log_in(b, 0.1).value < log_out(b, 0.1).value);
}

TEST_CASE("loss values and gradients match the arbitrary-precision golden vectors") {
  std::ifstream in(std::string(RINCE_GOLDEN_DIR) + "/loss_vectors.json");
  REQUIRE(in);
  const nlohmann::json golden = nlohmann::json::parse(in);
  std::size_t checked = 0;
  for (const auto& c : golden.at("loss_cases")) {
    const auto v = parse_loss_variant(c.at("variant").get<std::string>());
    REQUIRE(v);
    SimilarityBatch b;
    b.positives_by_rank = c.at("positives_by_rank").get<std::vector<std::vector<double>>>();
    b.negatives = c.at("negatives").get<std::vector<double>>();
    const LossResult r = evaluate_loss(b, settings(*v, c.at("taus").get<std::vector<double>>()));
    CAPTURE(c.at("variant").get<std::string>());
    const double value = c.at("value").get<double>();
    CHECK(std::abs(r.value - value) <= 1e-12 * std::max(1.0, std::abs(value)));
    SimilarityBatch g;
    g.positives_by_rank = c.at("grads").at("positives_by_rank").get<std::vector<std::vector<double>>>();
    g.negatives = c.at("grads").at("negatives").get<std::vector<double>>();
    const std::vector<double> expected = g.flatten();
    const std::vector<double> got = r.flat_grad();
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(std::abs(got[i] - expected[i]) <= 1e-12 * std::max(1.0, std::abs(expected[i])));
    ++checked;
  }
  CHECK(checked == 13);
}

TEST_CASE("rince two-rank example matches finite differences") {
  const SimilarityBatch b = make({{0.9}, {0.5}}, {0.1, -0.1});
  const LossSettings s = settings(LossVariant::kRinceIn, {0.1, 0.2});
  const auto f = [&](const SimilarityBatch& x) { return evaluate_loss(x, s).value; };
  const GradCheck g = compare_gradients(evaluate_loss(b, s).flat_grad(), finite_diff_grad(f, b, 1e-6).flatten());
  CHECK(g.pass);
}

TEST_CASE("temperature schedule validation") {
  CHECK_NOTHROW(TemperatureSchedule({0.1, 0.225}));
  CHECK_THROWS_AS((TemperatureSchedule({0.2, 0.1})), ConfigError);
  CHECK_THROWS_AS((TemperatureSchedule({0.1, 0.1})), ConfigError);
  CHECK_THROWS_AS((TemperatureSchedule({0.0, 0.1})), ConfigError);
  CHECK_THROWS_AS((TemperatureSchedule({-0.1})), ConfigError);
  const TemperatureSchedule relaxed({0.2, 0.1}, true);
  CHECK_FALSE(relaxed.ordered());
  CHECK_THROWS_AS((TemperatureSchedule({0.0, 0.1}, true)), ConfigError);

  const SimilarityBatch b = make({{0.9}, {0.5}}, {0.1});
  CHECK_THROWS_AS((rince::rince(b, TemperatureSchedule({0.1}), LossVariant::kRinceIn)), ConfigError);
  CHECK_THROWS_AS((evaluate_loss(b, settings(LossVariant::kRinceIn, {0.2, 0.1}))), ConfigError);
  LossSettings unordered = settings(LossVariant::kRinceIn, {0.2, 0.1});
  unordered.allow_unordered_taus = true;
  CHECK(std::isfinite(evaluate_loss(b, unordered).value));
  CHECK_THROWS_AS((rince::rince(make({{0.9, 0.8}, {0.5}}, {0.1}), TemperatureSchedule({0.1, 0.2}), LossVariant::kRinceUni)),
                  ConfigError);
}

TEST_CASE("triplet examples") {
  CHECK(triplet_ranked(make({{0.2}}, {1.5}), {0.5}).value == 0.0);
  const LossResult r = triplet_ranked(make({{1.0}}, {1.0}), {0.5});
  CHECK(r.value == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.grad_positives_by_rank[0][0] == 1.0);
  CHECK(r.grad_negatives[0] == -1.0);

  // Rank 1 at 0.3 and rank 2 at 0.9 against negatives 1.0 and 1.6:
  // rank 1: max(0.3-1.0+0.5, 0) + max(0.3-1.6+0.5, 0) = 0
  // rank 2: max(0.9-1.0+1.0, 0) + max(0.9-1.6+1.0, 0) = 0.9 + 0.3
  const LossResult two = triplet_ranked(make({{0.3}, {0.9}}, {1.0, 1.6}), {0.5, 1.0});
  CHECK(two.value == doctest::Approx(1.2).epsilon(1e-14));
  CHECK(two.grad_positives_by_rank[0][0] == 0.0);
  CHECK(two.grad_positives_by_rank[1][0] == 2.0);
  CHECK(two.grad_negatives[0] == -1.0);
  CHECK(two.grad_negatives[1] == -1.0);

  // Exactly at the hinge corner the subgradient is zero.
  const LossResult corner = triplet_ranked(make({{0.5}}, {1.0}), {0.5});
  CHECK(corner.value == 0.0);
  CHECK(corner.grad_positives_by_rank[0][0] == 0.0);

  CHECK_THROWS_AS((triplet_ranked(make({{0.3}, {0.9}}, {1.0}), {0.5})), ConfigError);
}

TEST_CASE("distances_from_embeddings and sphere distance") {
  const DistanceBatch d = distances_from_embeddings(Vec64{0, 0}, {{Vec64{3, 4}}}, {Vec64{1, 0}, Vec64{0, -2}});
  CHECK(d.positives_by_rank[0][0] == doctest::Approx(5.0));
  CHECK(d.negatives[0] == doctest::Approx(1.0));
  CHECK(d.negatives[1] == doctest::Approx(2.0));
  CHECK(sphere_distance(1.0) == 0.0);
  CHECK(sphere_distance(-1.0) == doctest::Approx(2.0));
  CHECK(sphere_distance(0.0) == doctest::Approx(std::sqrt(2.0)));
  for (double s : {-0.9, -0.3, 0.2, 0.8}) {
    const double h = 1e-6;
    const double fd = (sphere_distance(s + h) - sphere_distance(s - h)) / (2 * h);
    CHECK(sphere_distance_derivative(s) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("analytic gradients match central differences on random batches") {
  SeededRng rng(20240611);
  for (LossVariant v : kAllVariants) {
    CAPTURE(to_string(v));
    std::size_t failures = 0;
    for (int t = 0; t < 100; ++t)
      if (!check_case(random_case(v, rng), 1e-6).pass) ++failures;
    CHECK(failures == 0);
  }
}

TEST_CASE("reduction lattice") {
  SeededRng rng(31);
  constexpr LossVariant kRince[] = {LossVariant::kRinceUni, LossVariant::kRinceIn, LossVariant::kRinceOut,
                                    LossVariant::kRinceOutIn};
  for (int t = 0; t < 100; ++t) {
    const double tau = rng.uniform(0.05, 0.5);
    std::vector<double> negs(1 + rng.below(40));
    for (double& n : negs) n = rng.uniform(-1.0, 1.0);

    const SimilarityBatch single = make({{rng.uniform(-1.0, 1.0)}}, negs);
    const double ref = infonce(single, tau).value;
    for (LossVariant v : kAllVariants) {
      if (v == LossVariant::kTripletRanked) continue;
      CHECK(std::abs(evaluate_loss(single, settings(v, {tau})).value - ref) <= 1e-12);
    }

    std::vector<double> pos(2 + rng.below(3));
    for (double& p : pos) p = rng.uniform(-1.0, 1.0);
    const SimilarityBatch multi = make({pos}, negs);
    CHECK(std::abs(rince::rince(multi, TemperatureSchedule({tau}), LossVariant::kRinceIn).value - log_in(multi, tau).value) <=
          1e-12);
    CHECK(std::abs(rince::rince(multi, TemperatureSchedule({tau}), LossVariant::kRinceOut).value - log_out(multi, tau).value) <=
          1e-12);

    const std::size_t r = 2 + rng.below(2);
    std::vector<std::vector<double>> ranks;
    std::vector<double> taus;
    double tt = tau;
    for (std::size_t i = 0; i < r; ++i) {
      ranks.push_back({rng.uniform(-1.0, 1.0)});
      taus.push_back(tt);
      tt += rng.uniform(0.02, 0.2);
    }
    const SimilarityBatch per_rank = make(ranks, negs);
    const TemperatureSchedule sched(taus);
    const LossResult base = rince::rince(per_rank, sched, LossVariant::kRinceUni);
    for (LossVariant v : kRince) {
      const LossResult other = rince::rince(per_rank, sched, v);
      CHECK(std::abs(other.value - base.value) <= 1e-12);
      const auto ga = other.flat_grad(), gb = base.flat_grad();
      for (std::size_t k = 0; k < ga.size(); ++k) CHECK(std::abs(ga[k] - gb[k]) <= 1e-12);
    }
  }
}

TEST_CASE("losses fall with rank-1 similarity and rise with negative similarity") {
  SeededRng rng(41);
  for (LossVariant v : kAllVariants) {
    if (v == LossVariant::kTripletRanked) continue;
    for (int t = 0; t < 200; ++t) {
      const GradCase c = random_case(v, rng);
      const LossResult r = evaluate_loss(c.batch, c.settings);
      for (double g : r.grad_positives_by_rank[0]) CHECK(g < 0.0);
      for (double g : r.grad_negatives) CHECK(g > 0.0);
    }
  }
}

TEST_CASE("loss values are finite and non-negative") {
  SeededRng rng(43);
  for (LossVariant v : kAllVariants) {
    for (int t = 0; t < 200; ++t) {
      GradCase c = random_case(v, rng);
      for (double& tau : c.settings.taus) tau = 0.01 + (tau - 0.05) * 0.1;
      for (std::size_t i = 1; i < c.settings.taus.size(); ++i)
        c.settings.taus[i] = std::max(c.settings.taus[i], c.settings.taus[i - 1] + 1e-3);
      const LossResult r = evaluate_loss(c.batch, c.settings);
      CHECK(std::isfinite(r.value));
      CHECK(r.value >= 0.0);
      for (double g : r.flat_grad()) CHECK(std::isfinite(g));
    }
  }
}

TEST_CASE("a small gradient step on the scores does not increase the loss") {
  SeededRng rng(47);
  for (LossVariant v : kAllVariants) {
    for (int t = 0; t < 200; ++t) {
      const GradCase c = random_case(v, rng);
      const LossResult r = evaluate_loss(c.batch, c.settings);
      std::vector<double> xs = c.batch.flatten();
      const std::vector<double> g = r.flat_grad();
      for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = std::clamp(xs[k] - 1e-3 * g[k], -1.0, 1.0);
      const double after = evaluate_loss(c.batch.with_scores(xs), c.settings).value;
      CHECK(after <= r.value + 1e-15 * std::max(1.0, r.value));
    }
  }
}

TEST_CASE("variant names round trip") {
  for (LossVariant v : kAllVariants) CHECK(parse_loss_variant(to_string(v)) == v);
  CHECK(parse_loss_variant("scl-in") == LossVariant::kLogIn);
  CHECK(parse_loss_variant("scl-out") == LossVariant::kLogOut);
  CHECK(parse_loss_variant("triplet") == LossVariant::kTripletRanked);
  CHECK(parse_loss_variant("rince-out-in") == LossVariant::kRinceOutIn);
  CHECK_FALSE(parse_loss_variant("softmax"));
}
