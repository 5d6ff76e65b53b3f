#pragma once

// Piecewise exponential survival model with cohort-quilted coefficients.
//
//   log lambda_i = alpha_i(kappa) + beta_i(kappa)' x + gamma_i(kappa)' I
//
// where I = [P(I>=1..5), 1{I>=1..5}] is the intervention covariate vector. The five
// indicator coefficients of gamma are constrained to be <= 0 by applying
// -softplus to the assembled cohort value.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "quiltsurv/quilt.hpp"

namespace quiltsurv {

inline constexpr int kNumPlacements = 6;
inline constexpr int kNumThresholds = 5;
inline constexpr int kInterventionSize = 10;

using InterventionVector = std::array<double, kInterventionSize>;

/// Interval boundaries in days; intervals are [0,b0), [b0,b1), ..., [b_last, inf).
class Breakpoints {
 public:
  Breakpoints() : Breakpoints(std::vector<double>{7.0, 28.0, 63.0}) {}
  explicit Breakpoints(std::vector<double> boundaries);

  const std::vector<double>& boundaries() const { return boundaries_; }
  int num_intervals() const { return static_cast<int>(boundaries_.size()) + 1; }
  double lower(int interval) const;
  double upper(int interval) const;  // +inf for the last interval
  int interval_of(double t) const;

  /// Length of the overlap of [0, t] with each interval.
  std::vector<double> exposures(double t) const;

 private:
  std::vector<double> boundaries_;
};

struct SurvivalObservation {
  double t = 0.0;
  bool event = false;
};

/// Lambda(t) = sum_i lambda_i * |[0,t] ∩ interval i|.
double cumulative_hazard(double t, std::span<const double> hazards, const Breakpoints& breaks);

/// event: log lambda(t) - Lambda(t); censored: -Lambda(t).
double pem_log_likelihood(const SurvivalObservation& obs, std::span<const double> log_hazards,
                          const Breakpoints& breaks);

/// 1 - exp(-Lambda(horizon)).
double event_probability_from_log_hazards(std::span<const double> log_hazards,
                                          const Breakpoints& breaks, double horizon);

InterventionVector build_intervention_covariates(int placement,
                                                 std::span<const double> exceedance);

/// Maps a cohort coordinate vector over the dataset axes onto a parameter lattice
/// whose dimensions are named after a subset of those axes.
class CohortSchema {
 public:
  CohortSchema() = default;
  explicit CohortSchema(std::vector<LatticeDim> axes);

  /// MDC(26) x history group(32) x CC/MCC(3) x race(5).
  static CohortSchema standard();

  const std::vector<LatticeDim>& axes() const { return axes_; }
  int num_axes() const { return static_cast<int>(axes_.size()); }
  int axis(std::string_view name) const;

  /// Throws DataError when a coordinate is outside its axis.
  void validate(std::span<const int> coords) const;
  std::vector<int> project(const LatticeSpec& lattice, std::span<const int> coords) const;
  /// Checks that every lattice dimension names an axis of matching size.
  void check_lattice(const LatticeSpec& lattice) const;

 private:
  std::vector<LatticeDim> axes_;
};

/// Raw (pre-constraint) decompositions of the hazard coefficients.
struct PemParameters {
  Breakpoints breakpoints;
  CohortSchema schema;
  std::size_t num_features = 0;
  LatticeDecomposition alpha;  // value per interval
  LatticeDecomposition beta;   // interval-major: [interval * p + feature]
  LatticeDecomposition gamma;  // interval-major: [interval * 10 + k]

  /// Constrained gamma for one cohort: indicator entries mapped through -softplus.
  std::vector<double> gamma_values(std::span<const int> cohort) const;
};

/// Applies the indicator constraint in place to an assembled gamma row set.
void constrain_gamma(std::span<double> gamma_assembled, int num_intervals);

double log_hazard(const PemParameters& params, std::span<const int> cohort,
                  std::span<const std::uint8_t> x, std::span<const double> intervention,
                  int interval);
std::vector<double> log_hazards(const PemParameters& params, std::span<const int> cohort,
                                std::span<const std::uint8_t> x,
                                std::span<const double> intervention);

double event_probability(const PemParameters& params, std::span<const int> cohort,
                         std::span<const std::uint8_t> x, std::span<const double> intervention,
                         double horizon);

}  // namespace quiltsurv
