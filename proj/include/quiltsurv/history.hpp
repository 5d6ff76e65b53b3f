#pragma once

// Sparse non-negative linear encoding of history counts and median-split cohort groups.
//
// Reconstruction is X E^T D with E (encoder) and D (decoder) both latent x history.
// The loss is the Poisson negative log-likelihood plus lambda * sum_k |E_k|_1 |D_k|_1,
// which is invariant to rescaling a latent dimension between E and D. Decoder rows are
// kept at unit L1 norm, so the penalty acts on the encoder.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace quiltsurv {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FactorizationConfig {
  int latent_dim = 5;
  double sparsity = 0.1;
  int max_iterations = 500;
  double tolerance = 1e-7;  // relative loss change that ends fitting
  std::uint64_t seed = 1;
};

struct FactorizationModel {
  RowMatrix encoder;  // latent x history
  RowMatrix decoder;  // latent x history
  std::vector<double> loss_trace;

  int latent_dim() const { return static_cast<int>(encoder.rows()); }
  int history_dim() const { return static_cast<int>(encoder.cols()); }
};

/// Poisson NLL of counts given reconstruction, up to the log-factorial constant.
double poisson_loss(const RowMatrix& counts, const RowMatrix& reconstruction);
/// Poisson deviance, 2 sum [x log(x / r) - (x - r)]; zero for a perfect fit.
double poisson_deviance(const RowMatrix& counts, const RowMatrix& reconstruction);

RowMatrix reconstruct(const RowMatrix& counts, const FactorizationModel& model);
double factorization_objective(const RowMatrix& counts, const FactorizationModel& model, double sparsity);

/// Multiplicative updates; the objective never increases between outer iterations.
/// Throws DataError on negative or all-zero counts.
FactorizationModel fit_factorization(const RowMatrix& counts, const FactorizationConfig& config);

/// z = E x. Throws DataError on negative counts, std::invalid_argument on size mismatch.
std::vector<double> encode_history(std::span<const double> x_hist, const FactorizationModel& model);
RowMatrix encode_histories(const RowMatrix& counts, const FactorizationModel& model);

/// Median of each column of the encodings (mean of the middle pair for even counts).
std::vector<double> encoding_medians(const RowMatrix& encodings);

/// Bit d is 1 iff z_d > median_d; dimension 0 is the least significant bit.
int assign_group(std::span<const double> z, std::span<const double> medians);

struct HistoryEncoder {
  FactorizationModel model;
  std::vector<double> medians;
  std::vector<std::string> feature_names;

  int num_groups() const { return 1 << model.latent_dim(); }
  int group_of(std::span<const double> x_hist) const;
};

nlohmann::json history_encoder_to_json(const HistoryEncoder& enc);
HistoryEncoder history_encoder_from_json(const nlohmann::json& j);

/// Per latent dimension: the history features with encoder weight above `threshold`,
/// largest first, so each group rule reads as an inequality over few counts.
nlohmann::json sparsity_report(const HistoryEncoder& enc, double threshold = 1e-3);

}  // namespace quiltsurv
