#include "quiltsurv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "quiltsurv/common.hpp"
#include "quiltsurv/placement.hpp"

namespace quiltsurv {

double inverse_transform_wait(double u, std::span<const double> hazards, const Breakpoints& breaks) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("u must lie in (0, 1)");
  if (static_cast<int>(hazards.size()) != breaks.num_intervals())
    throw std::invalid_argument("one hazard per interval is required");
  double remaining = -std::log1p(-u);
  for (int i = 0; i < breaks.num_intervals(); ++i) {
    const double h = hazards[static_cast<std::size_t>(i)];
    if (!(h >= 0.0) || !std::isfinite(h)) throw std::invalid_argument("hazards must be finite and non-negative");
    const double lo = breaks.lower(i), hi = breaks.upper(i);
    const double cap = std::isinf(hi) ? std::numeric_limits<double>::infinity() : h * (hi - lo);
    if (h > 0.0 && remaining <= cap) return lo + remaining / h;
    if (h > 0.0) remaining -= cap;
  }
  return std::numeric_limits<double>::infinity();
}

nlohmann::json truth_config_to_json(const TruthConfig& c) {
  return {{"baseline_log_hazard", c.baseline_log_hazard},
          {"alpha_sd", c.alpha_sd},
          {"beta_sd", c.beta_sd},
          {"beta_density", c.beta_density},
          {"gamma_prob_sd", c.gamma_prob_sd},
          {"gamma_indicator", c.gamma_indicator},
          {"gamma_sd", c.gamma_sd},
          {"thresholds", c.thresholds},
          {"nu_sd", c.nu_sd}};
}

TruthConfig truth_config_from_json(const nlohmann::json& j) {
  TruthConfig c;
  c.baseline_log_hazard = j.value("baseline_log_hazard", c.baseline_log_hazard);
  c.alpha_sd = j.value("alpha_sd", c.alpha_sd);
  c.beta_sd = j.value("beta_sd", c.beta_sd);
  c.beta_density = j.value("beta_density", c.beta_density);
  c.gamma_prob_sd = j.value("gamma_prob_sd", c.gamma_prob_sd);
  c.gamma_indicator = j.value("gamma_indicator", c.gamma_indicator);
  c.gamma_sd = j.value("gamma_sd", c.gamma_sd);
  c.thresholds = j.value("thresholds", c.thresholds);
  c.nu_sd = j.value("nu_sd", c.nu_sd);
  return c;
}

std::vector<double> random_truth(const QuiltedSurvivalModel& model, const TruthConfig& cfg,
                                 std::mt19937_64& rng) {
  const auto& spec = model.spec();
  const std::size_t ni = static_cast<std::size_t>(spec.breakpoints.num_intervals());
  const std::size_t p = spec.num_features();
  if (cfg.baseline_log_hazard.size() != ni)
    throw std::invalid_argument("baseline_log_hazard needs one value per interval");
  if (cfg.thresholds.size() != static_cast<std::size_t>(kNumThresholds))
    throw std::invalid_argument("five thresholds are required");
  if (!(cfg.gamma_indicator <= 0.0)) throw std::invalid_argument("indicator effects must be <= 0");
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  std::vector<double> theta(model.num_parameters(), 0.0);

  auto fill_components = [&](const QuiltLayout& layout, std::size_t block_off, auto&& value_of) {
    for (const auto& c : layout.components())
      for (std::size_t r = 0; r < c.rows; ++r)
        for (std::size_t v = 0; v < layout.value_size(); ++v)
          theta[block_off + c.offset + r * layout.value_size() + v] = value_of(c.order(), v);
  };

  fill_components(model.alpha_layout(), model.block("alpha").offset, [&](int order, std::size_t v) {
    return order == 0 ? cfg.baseline_log_hazard[v] : cfg.alpha_sd * normal(rng);
  });

  // One effect per feature shared by every interval and beta cell.
  std::vector<double> effect(p, 0.0);
  for (auto& e : effect)
    if (unif(rng) < cfg.beta_density) e = cfg.beta_sd * normal(rng);
  fill_components(model.beta_layout(), model.block("beta").offset, [&](int order, std::size_t v) {
    return order == 0 && p > 0 ? effect[v % p] : 0.0;
  });

  const double indicator_raw = cfg.gamma_indicator == 0.0 ? -1e3 : softplus_inverse(-cfg.gamma_indicator);
  std::vector<double> prob_coef(ni * kNumThresholds);
  for (auto& g : prob_coef) g = cfg.gamma_prob_sd * normal(rng);
  fill_components(model.gamma_layout(), model.block("gamma").offset, [&](int order, std::size_t v) {
    const std::size_t i = v / kInterventionSize, k = v % kInterventionSize;
    if (k < static_cast<std::size_t>(kNumThresholds)) return order == 0 ? prob_coef[i * kNumThresholds + k] : 0.0;
    return order == 0 ? indicator_raw : cfg.gamma_sd * normal(rng);
  });

  const auto u = threshold_inverse(cfg.thresholds);
  fill_components(model.nu_layout(), model.block("nu").offset, [&](int order, std::size_t v) {
    return order == 0 ? u[v] : cfg.nu_sd * normal(rng);
  });

  const double one = softplus_inverse(1.0);
  for (const auto& b : model.blocks())
    if (b.bijector == Bijector::softplus) std::fill_n(theta.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size, one);
  return theta;
}

std::vector<double> interaction_severity(const CohortSchema& schema, double sd, std::mt19937_64& rng) {
  const auto& axes = schema.axes();
  std::size_t cells = 1;
  for (const auto& a : axes) cells *= static_cast<std::size_t>(a.size);
  if (axes.size() < 2 || sd == 0.0) return std::vector<double>(cells, 0.0);
  std::normal_distribution<double> normal;
  std::vector<double> table(cells);
  for (auto& v : table) v = normal(rng);

  // Strides of the row-major layout.
  std::vector<std::size_t> stride(axes.size(), 1);
  for (std::size_t d = axes.size() - 1; d-- > 0;) stride[d] = stride[d + 1] * static_cast<std::size_t>(axes[d + 1].size);
  auto coord = [&](std::size_t cell, std::size_t d) { return (cell / stride[d]) % static_cast<std::size_t>(axes[d].size); };

  // Removing each axis' marginal means in turn (repeated until stable) leaves a table whose
  // every one-axis marginal is zero.
  for (int sweep = 0; sweep < 50; ++sweep) {
    double worst = 0.0;
    for (std::size_t d = 0; d < axes.size(); ++d) {
      std::vector<double> sum(static_cast<std::size_t>(axes[d].size), 0.0);
      for (std::size_t c = 0; c < cells; ++c) sum[coord(c, d)] += table[c];
      const double per = static_cast<double>(cells) / static_cast<double>(axes[d].size);
      for (auto& s : sum) {
        s /= per;
        worst = std::max(worst, std::abs(s));
      }
      for (std::size_t c = 0; c < cells; ++c) table[c] -= sum[coord(c, d)];
    }
    if (worst < 1e-14) break;
  }
  double ss = 0.0;
  for (double v : table) ss += v * v;
  const double scale = ss > 0.0 ? sd / std::sqrt(ss / static_cast<double>(cells)) : 0.0;
  for (auto& v : table) v *= scale;
  return table;
}

std::size_t GeneratorSpec::schema_cells() const {
  std::size_t cells = 1;
  for (const auto& a : model.schema.axes()) cells *= static_cast<std::size_t>(a.size);
  return cells;
}

void GeneratorSpec::validate() const {
  model.validate();
  QuiltedSurvivalModel m(model);
  if (truth.size() != m.num_parameters()) throw std::invalid_argument("truth does not match the model layout");
  for (double v : truth)
    if (!std::isfinite(v)) throw std::invalid_argument("truth contains non-finite values");
  if (!(feature_density >= 0.0 && feature_density <= 1.0)) throw std::invalid_argument("feature_density must be in [0, 1]");
  if (!(confounding >= 0.0) || !std::isfinite(confounding)) throw std::invalid_argument("confounding must be >= 0");
  if (!severity.empty() && severity.size() != schema_cells())
    throw std::invalid_argument("severity needs one value per schema cell");
  if (!(individual_severity_sd >= 0.0)) throw std::invalid_argument("individual_severity_sd must be >= 0");
  if (n == 0) throw std::invalid_argument("n must be positive");
  if (!(censor_window > 0.0)) throw std::invalid_argument("censor_window must be positive");
  if (date_span < 1) throw std::invalid_argument("date_span must be positive");
}

std::vector<double> generating_log_hazards(const GeneratorSpec& spec, const QuiltedSurvivalModel& model,
                                           const EpisodeRecord& e, double severity) {
  std::vector<std::uint32_t> active;
  for (std::size_t j = 0; j < e.covariates.size(); ++j)
    if (e.covariates[j]) active.push_back(static_cast<std::uint32_t>(j));
  auto pred = model.predict(spec.truth, e.cohort, active, e.placement);
  for (auto& v : pred.log_hazards) v += spec.confounding * severity;
  return pred.log_hazards;
}

SyntheticData generate(const GeneratorSpec& spec) {
  spec.validate();
  const QuiltedSurvivalModel model(spec.model);
  const auto& axes = spec.model.schema.axes();
  const std::size_t p = spec.model.num_features();
  std::vector<std::size_t> stride(axes.size(), 1);
  for (std::size_t d = axes.size(); d-- > 1;) stride[d - 1] = stride[d] * static_cast<std::size_t>(axes[d].size);

  SyntheticData out;
  out.episodes.resize(spec.n);
  out.severity.resize(spec.n);
  std::size_t events = 0;
  std::vector<std::size_t> placement_counts(kNumPlacements, 0);
  for (std::size_t n = 0; n < spec.n; ++n) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif;
    std::normal_distribution<double> normal;
    EpisodeRecord& e = out.episodes[n];
    e.person_id = "p" + std::to_string(n);
    e.provider_id = "prov" + std::to_string(n % 97);
    e.claim_type = ClaimType::inpatient;
    e.cohort.resize(axes.size());
    std::size_t cell = 0;
    for (std::size_t d = 0; d < axes.size(); ++d) {
      e.cohort[d] = std::uniform_int_distribution<int>(0, axes[d].size - 1)(rng);
      cell += static_cast<std::size_t>(e.cohort[d]) * stride[d];
    }
    e.covariates.resize(p);
    std::vector<std::uint32_t> active;
    for (std::size_t j = 0; j < p; ++j) {
      e.covariates[j] = unif(rng) < spec.feature_density ? 1 : 0;
      if (e.covariates[j]) active.push_back(static_cast<std::uint32_t>(j));
    }
    double severity = spec.severity.empty() ? 0.0 : spec.severity[cell];
    if (spec.individual_severity_sd > 0.0) severity += spec.individual_severity_sd * normal(rng);
    out.severity[n] = severity;

    // Placement from the ordinal model with the logit shifted by severity.
    const auto thresholds = model.placement_parameters(spec.truth).thresholds(e.cohort);
    double lp = 0.0;
    if (model.has_block("xi"))
      for (auto j : active) lp += spec.truth[model.block("xi").offset + j];
    const auto exceed = exceedance_probs(thresholds, lp + spec.confounding * severity);
    const auto probs = category_probs(exceed);
    const double draw = unif(rng);
    double acc = 0.0;
    e.placement = kNumPlacements - 1;
    for (int k = 0; k < kNumPlacements; ++k) {
      acc += probs[static_cast<std::size_t>(k)];
      if (draw < acc) {
        e.placement = k;
        break;
      }
    }
    ++placement_counts[static_cast<std::size_t>(e.placement)];

    const auto log_h = generating_log_hazards(spec, model, e, severity);
    std::vector<double> hazards(log_h.size());
    for (std::size_t i = 0; i < log_h.size(); ++i) hazards[i] = std::exp(log_h[i]);
    double u = unif(rng);
    if (u <= 0.0) u = std::numeric_limits<double>::min();
    const double t = inverse_transform_wait(u, hazards, spec.model.breakpoints);
    e.event = t <= spec.censor_window;
    e.wait_days = e.event ? t : spec.censor_window;
    e.unplanned = e.event;
    events += e.event ? 1 : 0;
    e.admit_date = spec.start_date + std::uniform_int_distribution<int>(0, spec.date_span - 1)(rng);
    e.discharge_date = e.admit_date + std::uniform_int_distribution<int>(1, 10)(rng);
    e.discharge_status = DischargeStatus::other;
    e.claim_ids = {n};
  }

  out.manifest = generator_spec_to_json(spec);
  out.manifest["summary"] = {{"rows", spec.n},
                             {"events", events},
                             {"censored", spec.n - events},
                             {"placement_counts", placement_counts}};
  return out;
}

nlohmann::json generator_spec_to_json(const GeneratorSpec& spec) {
  const QuiltedSurvivalModel model(spec.model);
  nlohmann::json blocks = nlohmann::json::object();
  for (const auto& b : model.blocks())
    blocks[b.name] = std::vector<double>(spec.truth.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                         spec.truth.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size));
  return {{"format", "synthetic-ground-truth"},
          {"model", model_spec_to_json(spec.model)},
          {"truth", blocks},
          {"feature_density", spec.feature_density},
          {"confounding", spec.confounding},
          {"severity", spec.severity},
          {"individual_severity_sd", spec.individual_severity_sd},
          {"n", spec.n},
          {"censor_window", spec.censor_window},
          {"start_date", spec.start_date},
          {"date_span", spec.date_span},
          {"seed", spec.seed}};
}

}  // namespace quiltsurv
