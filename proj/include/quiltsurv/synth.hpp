#pragma once

// Synthetic episodes drawn from a known quilted survival + placement model, with an
// optional latent severity that raises both the hazard and the placement acuity.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "quiltsurv/ingest.hpp"
#include "quiltsurv/model.hpp"

namespace quiltsurv {

/// Smallest t with Lambda(t) = -log(1 - u). Infinite if the hazard vanishes from some
/// point on and the target is never reached.
double inverse_transform_wait(double u, std::span<const double> hazards, const Breakpoints& breaks);

/// Settings for drawing a ground-truth parameter vector in the model's layout.
struct TruthConfig {
  std::vector<double> baseline_log_hazard{-4.0, -4.3, -4.8, -5.3};  // zero-order alpha, per interval
  double alpha_sd = 0.3;            // components of order >= 1
  double beta_sd = 0.4;             // nonzero feature effects
  double beta_density = 0.3;        // fraction of features with an effect
  double gamma_prob_sd = 0.0;       // coefficients of P(I>=k)
  double gamma_indicator = -0.3;    // constrained indicator effect at the global level
  double gamma_sd = 0.0;            // raw indicator components of order >= 1
  std::vector<double> thresholds{0.5, -0.3, -1.0, -1.7, -2.5};  // zero-order nu
  double nu_sd = 0.3;               // raw threshold components of order >= 1
};

nlohmann::json truth_config_to_json(const TruthConfig& c);
TruthConfig truth_config_from_json(const nlohmann::json& j);

/// Unconstrained parameter vector for `model` with the requested structure. Horseshoe
/// and xi scale blocks are set to softplus^{-1}(1).
std::vector<double> random_truth(const QuiltedSurvivalModel& model, const TruthConfig& config,
                                 std::mt19937_64& rng);

/// A random table over the schema cells with every main effect and the grand mean
/// removed, rescaled to standard deviation `sd`: pure interaction between axes.
std::vector<double> interaction_severity(const CohortSchema& schema, double sd, std::mt19937_64& rng);

/// Cohort coordinates are uniform on each axis and features independent Bernoulli.
struct GeneratorSpec {
  ModelSpec model;
  std::vector<double> truth;          // unconstrained, in the model's layout
  double feature_density = 0.2;
  double confounding = 0.0;
  std::vector<double> severity;       // per schema cell (row-major over axes); empty = 0
  double individual_severity_sd = 0.0;
  std::size_t n = 1000;
  double censor_window = 90.0;
  int start_date = 14245;  // 2009-01-01
  int date_span = 1461;
  std::uint64_t seed = 1;

  std::size_t schema_cells() const;
  void validate() const;
};

struct SyntheticData {
  std::vector<EpisodeRecord> episodes;
  std::vector<double> severity;  // per row, before the confounding multiplier
  nlohmann::json manifest;
};

/// Row n draws from an RNG seeded by (seed, n), so output is identical for any evaluation
/// order. Throws std::invalid_argument on an invalid spec.
SyntheticData generate(const GeneratorSpec& spec);

/// Log hazards the generator used for one row, including the severity shift.
std::vector<double> generating_log_hazards(const GeneratorSpec& spec, const QuiltedSurvivalModel& model,
                                           const EpisodeRecord& episode, double severity);

nlohmann::json generator_spec_to_json(const GeneratorSpec& spec);

}  // namespace quiltsurv
