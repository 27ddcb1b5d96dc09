#include "rince/losses.hpp"

#include <algorithm>
#include <cmath>

namespace rince {
namespace {

struct FlatView {
  std::vector<double> scores;
  std::vector<std::size_t> rank_offsets;  // size r + 1; negatives start at rank_offsets[r]
};

FlatView make_view(const SimilarityBatch& batch) {
  FlatView v;
  v.scores = batch.flatten();
  v.rank_offsets.push_back(0);
  for (const auto& rank : batch.positives_by_rank) v.rank_offsets.push_back(v.rank_offsets.back() + rank.size());
  return v;
}

// LSE of xs/τ; softmax weights exp(x/τ − LSE) are written to `weights`.
double lse_scaled(std::span<const double> xs, double inv_tau, std::vector<double>& weights) {
  double m = -INFINITY;
  for (double x : xs) m = std::max(m, x * inv_tau);
  weights.resize(xs.size());
  double s = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    weights[k] = std::exp(xs[k] * inv_tau - m);
    s += weights[k];
  }
  for (double& w : weights) w /= s;
  return m + std::log(s);
}

// ℓ = LSE(scores[begin:]) − LSE(scores[begin:pos_end]), all divided by τ.
double add_in_term(std::span<const double> scores, std::size_t begin, std::size_t pos_end, double tau,
                   std::span<double> grad) {
  const double inv_tau = 1.0 / tau;
  const auto all = scores.subspan(begin);
  const auto pos = scores.subspan(begin, pos_end - begin);
  std::vector<double> w_all;
  std::vector<double> w_pos;
  const double lse_all = lse_scaled(all, inv_tau, w_all);
  const double lse_pos = lse_scaled(pos, inv_tau, w_pos);
  for (std::size_t k = begin; k < scores.size(); ++k) grad[k] += inv_tau * w_all[k - begin];
  for (std::size_t k = begin; k < pos_end; ++k) grad[k] -= inv_tau * w_pos[k - begin];
  return lse_all - lse_pos;
}

// Σ_{p in [begin,pos_end)} LSE({p} ∪ scores[pos_end:]) − p, divided by τ.
double add_out_term(std::span<const double> scores, std::size_t begin, std::size_t pos_end, double tau,
                    std::span<double> grad) {
  const double inv_tau = 1.0 / tau;
  const auto rest = scores.subspan(pos_end);
  if (rest.empty()) return 0.0;
  std::vector<double> w_rest;
  const double lse_rest = lse_scaled(rest, inv_tau, w_rest);
  double value = 0.0;
  double rest_weight = 0.0;  // Σ_p exp(lse_rest − lse_p)
  for (std::size_t k = begin; k < pos_end; ++k) {
    const double a = scores[k] * inv_tau;
    const double hi = std::max(a, lse_rest);
    const double lse_p = hi + std::log(std::exp(a - hi) + std::exp(lse_rest - hi));
    value += lse_p - a;
    grad[k] += inv_tau * (std::exp(a - lse_p) - 1.0);
    rest_weight += std::exp(lse_rest - lse_p);
  }
  for (std::size_t k = pos_end; k < scores.size(); ++k)
    grad[k] += inv_tau * rest_weight * w_rest[k - pos_end];
  return value;
}

LossResult to_result(const SimilarityBatch& batch, double value, std::vector<double> grad_flat,
                     std::vector<double> rank_terms) {
  LossResult out;
  out.value = value;
  const SimilarityBatch shaped = batch.with_scores(grad_flat);
  out.grad_positives_by_rank = shaped.positives_by_rank;
  out.grad_negatives = shaped.negatives;
  out.rank_terms = std::move(rank_terms);
  return out;
}

void check_scores(const SimilarityBatch& batch) {
  if (batch.positives_by_rank.empty()) throw ConfigError("similarity batch needs at least one rank");
  for (std::size_t i = 0; i < batch.ranks(); ++i)
    if (batch.positives_by_rank[i].empty())
      throw ConfigError("rank " + std::to_string(i + 1) + " has no positives");
  for (double s : batch.flatten())
    if (!std::isfinite(s)) throw NumericError("non-finite similarity score");
}

void check_single_rank(const SimilarityBatch& batch, const char* name) {
  check_scores(batch);
  if (batch.ranks() != 1)
    throw ConfigError(std::string(name) + " expects a single rank; use rince for ranked positives");
}

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("temperature must be positive");
}

}  // namespace

std::size_t SimilarityBatch::score_count() const {
  std::size_t n = negatives.size();
  for (const auto& r : positives_by_rank) n += r.size();
  return n;
}

std::vector<double> SimilarityBatch::flatten() const {
  std::vector<double> flat;
  flat.reserve(score_count());
  for (const auto& r : positives_by_rank) flat.insert(flat.end(), r.begin(), r.end());
  flat.insert(flat.end(), negatives.begin(), negatives.end());
  return flat;
}

SimilarityBatch SimilarityBatch::with_scores(std::span<const double> flat) const {
  if (flat.size() != score_count()) throw ConfigError("score vector does not match batch shape");
  SimilarityBatch out;
  std::size_t k = 0;
  for (const auto& r : positives_by_rank) {
    out.positives_by_rank.emplace_back(flat.begin() + k, flat.begin() + k + r.size());
    k += r.size();
  }
  out.negatives.assign(flat.begin() + k, flat.end());
  return out;
}

std::vector<double> LossResult::flat_grad() const {
  SimilarityBatch g{grad_positives_by_rank, grad_negatives};
  return g.flatten();
}

TemperatureSchedule::TemperatureSchedule(std::vector<double> taus, bool allow_unordered) : taus_(std::move(taus)) {
  if (taus_.empty()) throw ConfigError("temperature schedule is empty");
  for (double t : taus_) check_tau(t);
  if (!allow_unordered && !ordered())
    throw ConfigError("temperatures must be strictly increasing (tau_i < tau_{i+1}); "
                      "pass --allow-unordered-taus to override");
}

bool TemperatureSchedule::ordered() const {
  for (std::size_t i = 1; i < taus_.size(); ++i)
    if (!(taus_[i - 1] < taus_[i])) return false;
  return true;
}

std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::kInfoNce: return "infonce";
    case LossVariant::kLogOut: return "log_out";
    case LossVariant::kLogIn: return "log_in";
    case LossVariant::kRinceUni: return "rince_uni";
    case LossVariant::kRinceIn: return "rince_in";
    case LossVariant::kRinceOut: return "rince_out";
    case LossVariant::kRinceOutIn: return "rince_out_in";
    case LossVariant::kTripletRanked: return "triplet_ranked";
  }
  return "unknown";
}

std::optional<LossVariant> parse_loss_variant(std::string_view name) {
  std::string n(name);
  std::replace(n.begin(), n.end(), '-', '_');
  if (n == "infonce") return LossVariant::kInfoNce;
  if (n == "log_out" || n == "scl_out") return LossVariant::kLogOut;
  if (n == "log_in" || n == "scl_in") return LossVariant::kLogIn;
  if (n == "rince_uni") return LossVariant::kRinceUni;
  if (n == "rince_in") return LossVariant::kRinceIn;
  if (n == "rince_out") return LossVariant::kRinceOut;
  if (n == "rince_out_in") return LossVariant::kRinceOutIn;
  if (n == "triplet" || n == "triplet_ranked") return LossVariant::kTripletRanked;
  return std::nullopt;
}

bool is_rince(LossVariant v) {
  return v == LossVariant::kRinceUni || v == LossVariant::kRinceIn || v == LossVariant::kRinceOut ||
         v == LossVariant::kRinceOutIn;
}

LossResult infonce(const SimilarityBatch& batch, double tau) {
  check_single_rank(batch, "infonce");
  check_tau(tau);
  if (batch.positives_by_rank[0].size() != 1)
    throw ConfigError("infonce expects exactly one positive; use log_in or log_out for several");
  if (batch.negatives.empty()) throw ConfigError("infonce requires at least one negative");
  const FlatView v = make_view(batch);
  std::vector<double> grad(v.scores.size(), 0.0);
  const double value = add_out_term(v.scores, 0, 1, tau, grad);
  return to_result(batch, value, std::move(grad), {value});
}

LossResult log_out(const SimilarityBatch& batch, double tau) {
  check_single_rank(batch, "log_out");
  check_tau(tau);
  const FlatView v = make_view(batch);
  std::vector<double> grad(v.scores.size(), 0.0);
  const double value = add_out_term(v.scores, 0, v.rank_offsets[1], tau, grad);
  return to_result(batch, value, std::move(grad), {value});
}

LossResult log_in(const SimilarityBatch& batch, double tau) {
  check_single_rank(batch, "log_in");
  check_tau(tau);
  const FlatView v = make_view(batch);
  std::vector<double> grad(v.scores.size(), 0.0);
  const double value = add_in_term(v.scores, 0, v.rank_offsets[1], tau, grad);
  return to_result(batch, value, std::move(grad), {value});
}

LossResult rince(const SimilarityBatch& batch, const TemperatureSchedule& sched, LossVariant variant) {
  check_scores(batch);
  if (!is_rince(variant)) throw ConfigError("rince: variant must be one of rince_uni/in/out/out_in");
  if (sched.size() != batch.ranks())
    throw ConfigError("temperature schedule has " + std::to_string(sched.size()) + " entries for " +
                      std::to_string(batch.ranks()) + " ranks");
  if (variant == LossVariant::kRinceUni)
    for (const auto& r : batch.positives_by_rank)
      if (r.size() != 1) throw ConfigError("rince_uni expects exactly one positive per rank");

  const FlatView v = make_view(batch);
  std::vector<double> grad(v.scores.size(), 0.0);
  std::vector<double> terms;
  double value = 0.0;
  for (std::size_t i = 0; i < batch.ranks(); ++i) {
    const std::size_t begin = v.rank_offsets[i];
    const std::size_t end = v.rank_offsets[i + 1];
    const bool out_form = variant == LossVariant::kRinceOut || (variant == LossVariant::kRinceOutIn && i == 0);
    const double term = out_form ? add_out_term(v.scores, begin, end, sched[i], grad)
                                 : add_in_term(v.scores, begin, end, sched[i], grad);
    terms.push_back(term);
    value += term;
  }
  return to_result(batch, value, std::move(grad), std::move(terms));
}

LossResult triplet_ranked(const DistanceBatch& distances, const std::vector<double>& margins) {
  check_scores(distances);
  if (margins.size() != distances.ranks())
    throw ConfigError("triplet_ranked: expected " + std::to_string(distances.ranks()) + " margins, got " +
                      std::to_string(margins.size()));
  LossResult out;
  out.grad_negatives.assign(distances.negatives.size(), 0.0);
  for (std::size_t i = 0; i < distances.ranks(); ++i) {
    const auto& pos = distances.positives_by_rank[i];
    std::vector<double> gp(pos.size(), 0.0);
    double term = 0.0;
    for (std::size_t a = 0; a < pos.size(); ++a)
      for (std::size_t b = 0; b < distances.negatives.size(); ++b) {
        const double slack = pos[a] - distances.negatives[b] + margins[i];
        if (slack > 0.0) {
          term += slack;
          gp[a] += 1.0;
          out.grad_negatives[b] -= 1.0;
        }
      }
    out.grad_positives_by_rank.push_back(std::move(gp));
    out.rank_terms.push_back(term);
    out.value += term;
  }
  return out;
}

DistanceBatch distances_from_embeddings(const Vec64& query, const std::vector<std::vector<Vec64>>& positives_by_rank,
                                        const std::vector<Vec64>& negatives) {
  auto dist = [&](const Vec64& v) {
    if (v.size() != query.size()) throw ConfigError("distances_from_embeddings: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += (v[i] - query[i]) * (v[i] - query[i]);
    return std::sqrt(s);
  };
  DistanceBatch out;
  for (const auto& rank : positives_by_rank) {
    std::vector<double> d;
    for (const auto& p : rank) d.push_back(dist(p));
    out.positives_by_rank.push_back(std::move(d));
  }
  for (const auto& n : negatives) out.negatives.push_back(dist(n));
  return out;
}

double sphere_distance(double cosine) { return std::sqrt(std::max(0.0, 2.0 - 2.0 * cosine)); }

double sphere_distance_derivative(double cosine) { return -1.0 / std::max(sphere_distance(cosine), 1e-8); }

LossResult evaluate_loss(const SimilarityBatch& batch, const LossSettings& settings) {
  switch (settings.variant) {
    case LossVariant::kInfoNce: return infonce(batch, settings.taus.at(0));
    case LossVariant::kLogOut: return log_out(batch, settings.taus.at(0));
    case LossVariant::kLogIn: return log_in(batch, settings.taus.at(0));
    case LossVariant::kRinceUni:
    case LossVariant::kRinceIn:
    case LossVariant::kRinceOut:
    case LossVariant::kRinceOutIn: {
      const TemperatureSchedule sched(
          std::vector<double>(settings.taus.begin(),
                              settings.taus.begin() + static_cast<std::ptrdiff_t>(
                                                          std::min(settings.taus.size(), batch.ranks()))),
          settings.allow_unordered_taus);
      return rince(batch, sched, settings.variant);
    }
    case LossVariant::kTripletRanked: {
      const std::vector<double> sims = batch.flatten();
      std::vector<double> d(sims.size());
      for (std::size_t k = 0; k < sims.size(); ++k) d[k] = sphere_distance(sims[k]);
      std::vector<double> margins(settings.triplet_margins.begin(),
                                  settings.triplet_margins.begin() +
                                      static_cast<std::ptrdiff_t>(
                                          std::min(settings.triplet_margins.size(), batch.ranks())));
      LossResult r = triplet_ranked(batch.with_scores(d), margins);
      std::vector<double> g = r.flat_grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= sphere_distance_derivative(sims[k]);
      const SimilarityBatch shaped = batch.with_scores(g);
      r.grad_positives_by_rank = shaped.positives_by_rank;
      r.grad_negatives = shaped.negatives;
      return r;
    }
  }
  throw ConfigError("unknown loss variant");
}

SimilarityBatch finite_diff_grad(const std::function<double(const SimilarityBatch&)>& loss,
                                 const SimilarityBatch& batch, double h) {
  std::vector<double> x = batch.flatten();
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + h;
    const double up = loss(batch.with_scores(x));
    x[k] = orig - h;
    const double down = loss(batch.with_scores(x));
    x[k] = orig;
    g[k] = (up - down) / (2.0 * h);
  }
  return batch.with_scores(g);
}

}  // namespace rince
