#pragma once

// Classification metrics with bootstrap uncertainty, horizon labels, and posterior
// reports over cohort lattices.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "quiltsurv/inference.hpp"
#include "quiltsurv/model.hpp"

namespace quiltsurv {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  std::size_t positives() const;
  void validate() const;
};

/// Mann-Whitney probability that a positive outranks a negative, ties counted 1/2.
/// Throws DataError unless both classes are present.
double auroc(const ScoredSet& scored);

/// Average precision: sum over distinct score thresholds (descending) of
/// (recall gain) x precision, with tied scores entering together.
/// Throws DataError without positives.
double auprc(const ScoredSet& scored);

using Metric = std::function<double(const ScoredSet&)>;

struct BootstrapResult {
  double sd = 0.0;
  std::size_t redraws = 0;  // degenerate resamples that were replaced
};

/// Standard deviation of `metric` over with-replacement resamples. Resample r uses an
/// RNG seeded from (seed, r). A resample on which the metric throws DataError is redrawn;
/// more than `max_redraws` redraws in total throws DataError.
BootstrapResult bootstrap_sd(const ScoredSet& scored, const Metric& metric, int resamples,
                             std::uint64_t seed, std::size_t max_redraws = 1000);

struct HorizonLabels {
  ScoredSet scored;
  std::vector<std::size_t> kept;  // indices of the rows that received a label
  std::size_t excluded = 0;       // censored before the horizon
};

/// Label 1 iff event with t <= horizon. Rows censored before the horizon are excluded.
HorizonLabels horizon_labels(std::span<const double> scores, std::span<const double> time,
                             std::span<const std::uint8_t> event, double horizon);

/// Plug-in event probability within `horizon` for every row of `data`.
std::vector<double> predict_event_probabilities(const QuiltedSurvivalModel& model,
                                                std::span<const double> theta,
                                                const ModelData& data, double horizon,
                                                int threads = 1);

struct HorizonMetrics {
  double horizon = 0.0;
  std::size_t n = 0;
  std::size_t positives = 0;
  std::size_t excluded = 0;
  double auroc = 0.0;
  double auprc = 0.0;
  double auroc_sd = 0.0;
  double auprc_sd = 0.0;
};

HorizonMetrics evaluate_horizon(std::span<const double> scores, std::span<const double> time,
                                std::span<const std::uint8_t> event, double horizon,
                                int resamples, std::uint64_t seed);

nlohmann::json metrics_to_json(std::span<const HorizonMetrics> metrics);

struct EffectRow {
  std::vector<int> cohort;
  // [interval][k] for the five indicator effects.
  std::vector<std::array<double, kNumThresholds>> mean, sd;
  // Cumulative effect of placement rank r = 1..5 relative to home: sum_{k<=r} effect_k.
  std::vector<std::array<double, kNumThresholds>> cumulative_mean, cumulative_sd;
};

/// Monte-Carlo mean and sd of the assembled, constrained gamma indicator effects for every
/// cell of the gamma lattice.
std::vector<EffectRow> cohort_effect_summary(const QuiltedSurvivalModel& model,
                                             const VariationalPosterior& posterior, int draws,
                                             std::uint64_t seed);

void write_effects_csv(std::ostream& out, const QuiltedSurvivalModel& model,
                       std::span<const EffectRow> rows);
/// Long format: cohort coordinates, interval, k, mean, sd, cumulative mean and sd.
void write_effects_long_csv(std::ostream& out, const QuiltedSurvivalModel& model,
                            std::span<const EffectRow> rows);

struct BaselineRow {
  std::vector<int> cohort;
  std::vector<double> mean;  // per interval
  std::vector<double> sd;
};

/// Posterior mean and sd of assembled alpha per cell. Alpha is linear in independent
/// Gaussian components, so both are exact.
std::vector<BaselineRow> baseline_hazard_report(const QuiltedSurvivalModel& model,
                                                const VariationalPosterior& posterior);
void write_baseline_csv(std::ostream& out, const QuiltedSurvivalModel& model,
                        std::span<const BaselineRow> rows);

/// Plug-in thresholds and exceedance probabilities (at xi'x = 0) per nu cell, from the
/// posterior means.
struct ThresholdRow {
  std::vector<int> cohort;
  Thresholds thresholds{};
  Exceedance exceedance{};
};
std::vector<ThresholdRow> threshold_report(const QuiltedSurvivalModel& model,
                                           const VariationalPosterior& posterior);
void write_threshold_csv(std::ostream& out, const QuiltedSurvivalModel& model,
                         std::span<const ThresholdRow> rows);

struct CoefficientRow {
  std::string feature;
  std::size_t index = 0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Features ranked by |posterior mean| of beta for one interval, ties broken by name.
/// With `cohort` empty the shared zero-order component is ranked, otherwise the assembled
/// value for that beta cell. k larger than p is truncated.
std::vector<CoefficientRow> top_coefficients(const QuiltedSurvivalModel& model,
                                             const VariationalPosterior& posterior, int interval,
                                             std::size_t k, std::span<const int> cohort = {});

}  // namespace quiltsurv
