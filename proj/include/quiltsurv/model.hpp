#pragma once

// Joint survival + placement model over a flat unconstrained parameter vector.
//
// Blocks (in order):
//   alpha, beta, gamma, nu   component tensors of the quilted decompositions
//   beta_local, beta_global  horseshoe scales on the assembled cohort-level beta
//   xi, xi_local, xi_global  optional placement slopes and their horseshoe scales
//
// Component tensors are unconstrained. Sign and ordering constraints are applied to
// the assembled cohort value (gamma indicators through -softplus, nu through the
// ordered-threshold map). Horseshoe scales go through softplus.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "quiltsurv/bijector.hpp"
#include "quiltsurv/ingest.hpp"
#include "quiltsurv/placement.hpp"
#include "quiltsurv/quilt.hpp"
#include "quiltsurv/survival.hpp"

namespace quiltsurv {

struct ModelSpec {
  Breakpoints breakpoints;
  CohortSchema schema = CohortSchema::standard();
  std::vector<std::string> feature_names;
  LatticeSpec alpha_lattice;
  LatticeSpec beta_lattice;
  LatticeSpec gamma_lattice;
  LatticeSpec nu_lattice;
  double prior_scale = 5.0;
  double prior_decay = 0.1;
  bool horseshoe = true;
  /// Include P(I>=k) in the hazard's intervention vector (off = ablated model).
  bool probability_covariates = true;
  bool use_xi = false;

  std::size_t num_features() const { return feature_names.size(); }

  /// alpha, gamma, nu over mdc x hx x ccmcc at order 2; beta over race at order 1.
  static ModelSpec standard(std::vector<std::string> feature_names);

  /// Throws std::invalid_argument on inconsistent lattices or priors.
  void validate() const;
};

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

struct ParameterBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  Bijector bijector = Bijector::identity;
  /// Transform applied after assembling a cohort value from this block's components.
  Bijector assembly = Bijector::identity;
};

/// Columnar, validated view of episodes for likelihood evaluation.
struct ModelData {
  std::size_t rows = 0;
  std::size_t num_axes = 0;
  std::vector<std::size_t> feature_ptr{0};  // CSR row pointers into feature_idx
  std::vector<std::uint32_t> feature_idx;
  std::vector<int> cohort;  // rows x num_axes
  std::vector<int> placement;
  std::vector<double> time;
  std::vector<std::uint8_t> event;

  static ModelData from_episodes(std::span<const EpisodeRecord> episodes, const ModelSpec& spec);

  std::span<const int> cohort_of(std::size_t row) const {
    return {cohort.data() + row * num_axes, num_axes};
  }
  std::span<const std::uint32_t> features_of(std::size_t row) const {
    return {feature_idx.data() + feature_ptr[row], feature_ptr[row + 1] - feature_ptr[row]};
  }
};

/// Distinct lattice cells touched by a set of rows, per parameter.
struct BatchPlan {
  struct CellSet {
    std::vector<std::vector<int>> kappas;          // one per slot
    std::vector<std::vector<std::size_t>> offsets; // component row offsets per slot
    std::vector<std::uint32_t> row_slot;           // slot of each planned row
  };
  std::vector<std::size_t> rows;
  CellSet alpha, beta, gamma, nu;
};

class QuiltedSurvivalModel {
 public:
  explicit QuiltedSurvivalModel(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  std::size_t num_parameters() const { return num_parameters_; }
  const std::vector<ParameterBlock>& blocks() const { return blocks_; }
  const ParameterBlock& block(std::string_view name) const;
  bool has_block(std::string_view name) const;

  const QuiltLayout& alpha_layout() const { return alpha_; }
  const QuiltLayout& beta_layout() const { return beta_; }
  const QuiltLayout& gamma_layout() const { return gamma_; }
  const QuiltLayout& nu_layout() const { return nu_; }

  BatchPlan plan(const ModelData& data, std::span<const std::size_t> rows) const;

  /// Per-row joint log-likelihood (survival + placement) written to `per_row`, and
  /// `scale` times the gradient of the sum over finite rows added into `grad`.
  /// Rows are processed in fixed-size chunks whose partial gradients are reduced in
  /// chunk order, so the result does not depend on `threads`.
  void log_likelihood(std::span<const double> theta, const ModelData& data, const BatchPlan& plan,
                      double scale, std::span<double> per_row, std::span<double> grad,
                      int threads = 1) const;

  /// Log prior of all blocks plus softplus log-Jacobians of the scale blocks; adds the
  /// gradient into `grad` when it is non-empty.
  double log_prior(std::span<const double> theta, std::span<double> grad = {}) const;

  PemParameters pem_parameters(std::span<const double> theta) const;
  PlacementParameters placement_parameters(std::span<const double> theta) const;

  struct RowPrediction {
    std::vector<double> log_hazards;
    Exceedance exceedance{};
  };
  /// Hazards use the observed placement indicators and the model's exceedance probabilities.
  RowPrediction predict(std::span<const double> theta, std::span<const int> cohort,
                        std::span<const std::uint32_t> active_features, int placement) const;

  static constexpr std::size_t kChunkRows = 2048;

 private:
  ModelSpec spec_;
  QuiltLayout alpha_, beta_, gamma_, nu_;
  std::vector<ParameterBlock> blocks_;
  std::size_t num_parameters_ = 0;
  std::size_t alpha_off_ = 0, beta_off_ = 0, gamma_off_ = 0, nu_off_ = 0;
  std::optional<std::size_t> beta_local_off_, beta_global_off_;
  std::optional<std::size_t> xi_off_, xi_local_off_, xi_global_off_;
};

}  // namespace quiltsurv
