#include "quiltsurv/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "quiltsurv/common.hpp"

namespace quiltsurv {

Breakpoints::Breakpoints(std::vector<double> boundaries) : boundaries_(std::move(boundaries)) {
  double prev = 0.0;
  for (double b : boundaries_) {
    if (!std::isfinite(b) || !(b > prev))
      throw std::invalid_argument("breakpoints must be positive, finite and strictly increasing");
    prev = b;
  }
}

double Breakpoints::lower(int interval) const {
  return interval == 0 ? 0.0 : boundaries_.at(static_cast<std::size_t>(interval - 1));
}

double Breakpoints::upper(int interval) const {
  if (interval == num_intervals() - 1) return std::numeric_limits<double>::infinity();
  return boundaries_.at(static_cast<std::size_t>(interval));
}

int Breakpoints::interval_of(double t) const {
  const auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), t);
  return static_cast<int>(it - boundaries_.begin());
}

std::vector<double> Breakpoints::exposures(double t) const {
  std::vector<double> out(static_cast<std::size_t>(num_intervals()), 0.0);
  for (int i = 0; i < num_intervals(); ++i) {
    const double lo = lower(i);
    if (t <= lo) break;
    out[static_cast<std::size_t>(i)] = std::min(t, upper(i)) - lo;
  }
  return out;
}

double cumulative_hazard(double t, std::span<const double> hazards, const Breakpoints& breaks) {
  if (hazards.size() != static_cast<std::size_t>(breaks.num_intervals()))
    throw std::invalid_argument("one hazard per interval is required");
  if (t <= 0.0) return 0.0;
  const auto exposure = breaks.exposures(t);
  double total = 0.0;
  for (std::size_t i = 0; i < exposure.size(); ++i)
    if (exposure[i] > 0.0) total += hazards[i] * exposure[i];
  return total;
}

double pem_log_likelihood(const SurvivalObservation& obs, std::span<const double> log_hazards,
                          const Breakpoints& breaks) {
  if (log_hazards.size() != static_cast<std::size_t>(breaks.num_intervals()))
    throw std::invalid_argument("one log-hazard per interval is required");
  const auto exposure = breaks.exposures(obs.t);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < exposure.size(); ++i)
    if (exposure[i] > 0.0) cumulative += std::exp(log_hazards[i]) * exposure[i];
  double ll = -cumulative;
  if (obs.event) ll += log_hazards[static_cast<std::size_t>(breaks.interval_of(obs.t))];
  return ll;
}

double event_probability_from_log_hazards(std::span<const double> log_hazards,
                                          const Breakpoints& breaks, double horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  std::vector<double> hazards(log_hazards.size());
  std::transform(log_hazards.begin(), log_hazards.end(), hazards.begin(),
                 [](double v) { return std::exp(v); });
  return -std::expm1(-cumulative_hazard(horizon, hazards, breaks));
}

InterventionVector build_intervention_covariates(int placement,
                                                 std::span<const double> exceedance) {
  if (placement < 0 || placement >= kNumPlacements)
    throw std::invalid_argument("placement must lie in 0..5");
  if (exceedance.size() != static_cast<std::size_t>(kNumThresholds))
    throw std::invalid_argument("five exceedance probabilities are required");
  InterventionVector out{};
  for (int k = 0; k < kNumThresholds; ++k) {
    const double p = exceedance[static_cast<std::size_t>(k)];
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("exceedance probability outside [0,1]");
    out[static_cast<std::size_t>(k)] = p;
    out[static_cast<std::size_t>(kNumThresholds + k)] = placement >= k + 1 ? 1.0 : 0.0;
  }
  return out;
}

CohortSchema::CohortSchema(std::vector<LatticeDim> axes) : axes_(std::move(axes)) {
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    if (axes_[i].size < 1) throw std::invalid_argument("cohort axis sizes must be >= 1");
    for (std::size_t j = 0; j < i; ++j)
      if (axes_[i].name == axes_[j].name)
        throw std::invalid_argument("duplicate cohort axis '" + axes_[i].name + "'");
  }
}

CohortSchema CohortSchema::standard() {
  return CohortSchema({{"mdc", 26}, {"hx", 32}, {"ccmcc", 3}, {"race", 5}});
}

int CohortSchema::axis(std::string_view name) const {
  for (std::size_t i = 0; i < axes_.size(); ++i)
    if (axes_[i].name == name) return static_cast<int>(i);
  return -1;
}

void CohortSchema::validate(std::span<const int> coords) const {
  if (coords.size() != axes_.size())
    throw DataError("cohort has " + std::to_string(coords.size()) + " coordinates, schema has " +
                    std::to_string(axes_.size()));
  for (std::size_t i = 0; i < axes_.size(); ++i)
    if (coords[i] < 0 || coords[i] >= axes_[i].size)
      throw DataError("cohort coordinate " + std::to_string(coords[i]) + " outside axis '" +
                      axes_[i].name + "'");
}

void CohortSchema::check_lattice(const LatticeSpec& lattice) const {
  for (const auto& d : lattice.dims()) {
    const int a = axis(d.name);
    if (a < 0) throw std::invalid_argument("lattice dimension '" + d.name + "' is not a cohort axis");
    if (axes_[static_cast<std::size_t>(a)].size != d.size)
      throw std::invalid_argument("lattice dimension '" + d.name + "' size differs from its axis");
  }
}

std::vector<int> CohortSchema::project(const LatticeSpec& lattice,
                                       std::span<const int> coords) const {
  std::vector<int> kappa;
  kappa.reserve(lattice.dims().size());
  for (const auto& d : lattice.dims()) {
    const int a = axis(d.name);
    if (a < 0) throw std::invalid_argument("lattice dimension '" + d.name + "' is not a cohort axis");
    kappa.push_back(coords[static_cast<std::size_t>(a)]);
  }
  return kappa;
}

void constrain_gamma(std::span<double> gamma_assembled, int num_intervals) {
  for (int i = 0; i < num_intervals; ++i)
    for (int k = kNumThresholds; k < kInterventionSize; ++k) {
      double& g = gamma_assembled[static_cast<std::size_t>(i * kInterventionSize + k)];
      g = -softplus(g);
    }
}

std::vector<double> PemParameters::gamma_values(std::span<const int> cohort) const {
  auto values = gamma.assemble(schema.project(gamma.lattice(), cohort));
  constrain_gamma(values, breakpoints.num_intervals());
  return values;
}

std::vector<double> log_hazards(const PemParameters& params, std::span<const int> cohort,
                                std::span<const std::uint8_t> x,
                                std::span<const double> intervention) {
  const int n_int = params.breakpoints.num_intervals();
  const std::size_t p = params.num_features;
  if (x.size() != p) throw std::invalid_argument("covariate vector length differs from model");
  if (intervention.size() != static_cast<std::size_t>(kInterventionSize))
    throw std::invalid_argument("intervention vector must have 10 entries");
  params.schema.validate(cohort);
  const auto alpha = params.alpha.assemble(params.schema.project(params.alpha.lattice(), cohort));
  const auto beta = params.beta.assemble(params.schema.project(params.beta.lattice(), cohort));
  const auto gamma = params.gamma_values(cohort);
  std::vector<double> out(static_cast<std::size_t>(n_int));
  for (int i = 0; i < n_int; ++i) {
    double eta = alpha[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < p; ++j)
      if (x[j]) eta += beta[static_cast<std::size_t>(i) * p + j];
    for (int k = 0; k < kInterventionSize; ++k)
      eta += gamma[static_cast<std::size_t>(i * kInterventionSize + k)] *
             intervention[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(i)] = eta;
  }
  return out;
}

double log_hazard(const PemParameters& params, std::span<const int> cohort,
                  std::span<const std::uint8_t> x, std::span<const double> intervention,
                  int interval) {
  if (interval < 0 || interval >= params.breakpoints.num_intervals())
    throw std::invalid_argument("interval index out of range");
  return log_hazards(params, cohort, x, intervention)[static_cast<std::size_t>(interval)];
}

double event_probability(const PemParameters& params, std::span<const int> cohort,
                         std::span<const std::uint8_t> x, std::span<const double> intervention,
                         double horizon) {
  return event_probability_from_log_hazards(log_hazards(params, cohort, x, intervention),
                                            params.breakpoints, horizon);
}

}  // namespace quiltsurv
