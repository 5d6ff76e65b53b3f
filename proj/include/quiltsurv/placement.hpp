#pragma once

// Ordinal logistic model for the discharge placement rank I in {0..5}:
//
//   P(I >= k) = logistic(nu_k + xi'x),   k = 1..5
//   p_k = P(I >= k) - P(I >= k+1),       P(I >= 0) = 1, P(I >= 6) = 0
//
// Valid probabilities need P(I >= k) non-increasing in k, so the thresholds are kept
// strictly decreasing: nu_1 = u_1 and nu_{k+1} = nu_k - softplus(u_{k+1}).

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "quiltsurv/survival.hpp"

namespace quiltsurv {

using Thresholds = std::array<double, kNumThresholds>;
using Exceedance = std::array<double, kNumThresholds>;
using CategoryProbs = std::array<double, kNumPlacements>;

Thresholds threshold_transform(std::span<const double> unconstrained);

/// Inverse of threshold_transform; requires strictly decreasing thresholds.
std::array<double, kNumThresholds> threshold_inverse(std::span<const double> thresholds);

/// Throws std::invalid_argument when a threshold exceeds its predecessor. Gaps that
/// underflow to zero are accepted and give the category zero mass.
Exceedance exceedance_probs(std::span<const double> thresholds, double linear_predictor = 0.0);

/// Throws std::invalid_argument when a successive difference is negative.
CategoryProbs category_probs(std::span<const double> exceedance);

double placement_log_likelihood(int placement, std::span<const double> category);

/// Raw threshold decomposition (value size 5) plus the optional slope vector xi.
struct PlacementParameters {
  CohortSchema schema;
  LatticeDecomposition nu;
  std::vector<double> xi;  // empty or one entry per feature

  Thresholds thresholds(std::span<const int> cohort) const;
  double linear_predictor(std::span<const std::uint8_t> x) const;
  Exceedance exceedance(std::span<const int> cohort, std::span<const std::uint8_t> x) const;
};

}  // namespace quiltsurv
