#include "quiltsurv/bijector.hpp"

#include <cmath>
#include <stdexcept>

#include "quiltsurv/common.hpp"
#include "quiltsurv/placement.hpp"

namespace quiltsurv {

std::string_view to_string(Bijector b) {
  switch (b) {
    case Bijector::identity: return "identity";
    case Bijector::softplus: return "softplus";
    case Bijector::negated_softplus: return "negated_softplus";
    case Bijector::ordered_thresholds: return "ordered_thresholds";
  }
  return "identity";
}

Bijector bijector_from_string(std::string_view name) {
  if (name == "identity") return Bijector::identity;
  if (name == "softplus") return Bijector::softplus;
  if (name == "negated_softplus") return Bijector::negated_softplus;
  if (name == "ordered_thresholds") return Bijector::ordered_thresholds;
  throw std::invalid_argument("unknown bijector '" + std::string(name) + "'");
}

namespace {

void check_sizes(Bijector b, std::size_t in, std::size_t out) {
  if (in != out) throw std::invalid_argument("bijector input/output size mismatch");
  if (b == Bijector::ordered_thresholds && in % kNumThresholds != 0)
    throw std::invalid_argument("ordered_thresholds acts on groups of five");
}

}  // namespace

void bijector_forward(Bijector b, std::span<const double> x, std::span<double> y) {
  check_sizes(b, x.size(), y.size());
  switch (b) {
    case Bijector::identity:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i];
      return;
    case Bijector::softplus:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = softplus(x[i]);
      return;
    case Bijector::negated_softplus:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = -softplus(x[i]);
      return;
    case Bijector::ordered_thresholds:
      for (std::size_t g = 0; g < x.size(); g += kNumThresholds) {
        const auto nu = threshold_transform(x.subspan(g, kNumThresholds));
        for (int k = 0; k < kNumThresholds; ++k) y[g + static_cast<std::size_t>(k)] = nu[k];
      }
      return;
  }
}

void bijector_inverse(Bijector b, std::span<const double> y, std::span<double> x) {
  check_sizes(b, y.size(), x.size());
  switch (b) {
    case Bijector::identity:
      for (std::size_t i = 0; i < y.size(); ++i) x[i] = y[i];
      return;
    case Bijector::softplus:
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(y[i] > 0.0)) throw std::invalid_argument("softplus inverse needs positive input");
        x[i] = softplus_inverse(y[i]);
      }
      return;
    case Bijector::negated_softplus:
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(y[i] < 0.0)) throw std::invalid_argument("negated softplus inverse needs negative input");
        x[i] = softplus_inverse(-y[i]);
      }
      return;
    case Bijector::ordered_thresholds:
      for (std::size_t g = 0; g < y.size(); g += kNumThresholds) {
        const auto u = threshold_inverse(y.subspan(g, kNumThresholds));
        for (int k = 0; k < kNumThresholds; ++k) x[g + static_cast<std::size_t>(k)] = u[k];
      }
      return;
  }
}

double bijector_log_det_jacobian(Bijector b, std::span<const double> x) {
  double total = 0.0;
  switch (b) {
    case Bijector::identity:
      return 0.0;
    case Bijector::softplus:
    case Bijector::negated_softplus:
      // |d softplus(x)/dx| = logistic(x)
      for (double v : x) total += -log1pexp(-v);
      return total;
    case Bijector::ordered_thresholds:
      if (x.size() % kNumThresholds != 0)
        throw std::invalid_argument("ordered_thresholds acts on groups of five");
      // Triangular Jacobian: diagonal is 1 followed by -logistic(u_k).
      for (std::size_t g = 0; g < x.size(); g += kNumThresholds)
        for (int k = 1; k < kNumThresholds; ++k) total += -log1pexp(-x[g + static_cast<std::size_t>(k)]);
      return total;
  }
  return total;
}

}  // namespace quiltsurv
