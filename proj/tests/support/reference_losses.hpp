#pragma once

// Direct long-double evaluation of every loss from its defining sums. Used as
// the finite-difference oracle so rounding in the oracle stays far below the
// gradient tolerance.

#include <cmath>
#include <stdexcept>

#include "rince/losses.hpp"

namespace rince::testing {

using Real = long double;

inline Real sum_exp(const std::vector<double>& xs, Real tau) {
  Real s = 0;
  for (double x : xs) s += std::exp(static_cast<Real>(x) / tau);
  return s;
}

/// One ℓ over positives P against `rest` at temperature τ, in the out or in form.
inline Real ranked_term(const std::vector<double>& pos, const std::vector<double>& rest, Real tau, bool out_form) {
  const Real rest_mass = sum_exp(rest, tau);
  if (out_form) {
    Real v = 0;
    for (double p : pos) {
      const Real e = std::exp(static_cast<Real>(p) / tau);
      v -= std::log(e / (e + rest_mass));
    }
    return v;
  }
  const Real pos_mass = sum_exp(pos, tau);
  return -std::log(pos_mass / (pos_mass + rest_mass));
}

inline Real reference_loss(const SimilarityBatch& b, const LossSettings& s) {
  const auto& ranks = b.positives_by_rank;
  switch (s.variant) {
    case LossVariant::kInfoNce:
    case LossVariant::kLogOut: return ranked_term(ranks[0], b.negatives, s.taus[0], true);
    case LossVariant::kLogIn: return ranked_term(ranks[0], b.negatives, s.taus[0], false);
    case LossVariant::kRinceUni:
    case LossVariant::kRinceIn:
    case LossVariant::kRinceOut:
    case LossVariant::kRinceOutIn: {
      Real total = 0;
      for (std::size_t i = 0; i < ranks.size(); ++i) {
        std::vector<double> rest;
        for (std::size_t j = i + 1; j < ranks.size(); ++j) rest.insert(rest.end(), ranks[j].begin(), ranks[j].end());
        rest.insert(rest.end(), b.negatives.begin(), b.negatives.end());
        const bool out = s.variant == LossVariant::kRinceOut || (s.variant == LossVariant::kRinceOutIn && i == 0);
        total += ranked_term(ranks[i], rest, s.taus[i], out);
      }
      return total;
    }
    case LossVariant::kTripletRanked: {
      Real total = 0;
      auto dist = [](double c) { return std::sqrt(std::max<Real>(0, 2 - 2 * static_cast<Real>(c))); };
      for (std::size_t i = 0; i < ranks.size(); ++i)
        for (double p : ranks[i])
          for (double n : b.negatives) total += std::max<Real>(0, dist(p) - dist(n) + s.triplet_margins[i]);
      return total;
    }
  }
  throw std::logic_error("unknown variant");
}

}  // namespace rince::testing
