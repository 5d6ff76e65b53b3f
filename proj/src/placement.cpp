#include "quiltsurv/placement.hpp"

#include <cmath>
#include <stdexcept>

#include "quiltsurv/common.hpp"

namespace quiltsurv {

Thresholds threshold_transform(std::span<const double> unconstrained) {
  if (unconstrained.size() != static_cast<std::size_t>(kNumThresholds))
    throw std::invalid_argument("threshold transform needs five inputs");
  Thresholds nu{};
  nu[0] = unconstrained[0];
  for (int k = 1; k < kNumThresholds; ++k) nu[k] = nu[k - 1] - softplus(unconstrained[k]);
  return nu;
}

std::array<double, kNumThresholds> threshold_inverse(std::span<const double> thresholds) {
  if (thresholds.size() != static_cast<std::size_t>(kNumThresholds))
    throw std::invalid_argument("threshold inverse needs five inputs");
  std::array<double, kNumThresholds> u{};
  u[0] = thresholds[0];
  for (int k = 1; k < kNumThresholds; ++k) {
    const double gap = thresholds[k - 1] - thresholds[k];
    if (!(gap > 0.0)) throw std::invalid_argument("thresholds must be strictly decreasing");
    u[k] = softplus_inverse(gap);
  }
  return u;
}

Exceedance exceedance_probs(std::span<const double> thresholds, double linear_predictor) {
  if (thresholds.size() != static_cast<std::size_t>(kNumThresholds))
    throw std::invalid_argument("five thresholds are required");
  for (int k = 1; k < kNumThresholds; ++k)
    if (thresholds[k] > thresholds[k - 1] || std::isnan(thresholds[k]))
      throw std::invalid_argument("thresholds must be non-increasing");
  Exceedance out{};
  for (int k = 0; k < kNumThresholds; ++k) out[k] = sigmoid(thresholds[k] + linear_predictor);
  return out;
}

CategoryProbs category_probs(std::span<const double> exceedance) {
  if (exceedance.size() != static_cast<std::size_t>(kNumThresholds))
    throw std::invalid_argument("five exceedance probabilities are required");
  CategoryProbs p{};
  double above = 1.0;
  for (int k = 0; k < kNumPlacements; ++k) {
    const double next = k < kNumThresholds ? exceedance[k] : 0.0;
    p[k] = above - next;
    if (p[k] < 0.0) throw std::invalid_argument("exceedance probabilities increase with k");
    above = next;
  }
  return p;
}

double placement_log_likelihood(int placement, std::span<const double> category) {
  if (placement < 0 || placement >= kNumPlacements)
    throw std::invalid_argument("placement must lie in 0..5");
  if (category.size() != static_cast<std::size_t>(kNumPlacements))
    throw std::invalid_argument("six category probabilities are required");
  return std::log(category[static_cast<std::size_t>(placement)]);
}

Thresholds PlacementParameters::thresholds(std::span<const int> cohort) const {
  const auto raw = nu.assemble(schema.project(nu.lattice(), cohort));
  return threshold_transform(raw);
}

double PlacementParameters::linear_predictor(std::span<const std::uint8_t> x) const {
  if (xi.empty()) return 0.0;
  if (x.size() != xi.size()) throw std::invalid_argument("covariate length differs from xi");
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j)
    if (x[j]) s += xi[j];
  return s;
}

Exceedance PlacementParameters::exceedance(std::span<const int> cohort,
                                           std::span<const std::uint8_t> x) const {
  return exceedance_probs(thresholds(cohort), linear_predictor(x));
}

}  // namespace quiltsurv
