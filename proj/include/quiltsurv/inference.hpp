#pragma once

// Mean-field Gaussian variational inference with minibatch ELBO estimates,
// per-observation likelihood clamping and an Adam + lookahead training schedule.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "quiltsurv/model.hpp"

namespace quiltsurv {

/// Independent Gaussians over the unconstrained parameters.
struct VariationalPosterior {
  std::vector<double> mean;
  std::vector<double> log_sd;
  std::vector<ParameterBlock> blocks;

  std::size_t size() const { return mean.size(); }

  static VariationalPosterior initialize(std::vector<ParameterBlock> blocks, double init_mean,
                                         double init_log_sd);

  const ParameterBlock& block(std::string_view name) const;

  /// Gaussian entropy, sum_i [log sd_i + (1 + log 2 pi) / 2].
  double entropy() const;
  double block_entropy(std::string_view name) const;

  /// mean + exp(log_sd) * eps, still unconstrained.
  std::vector<double> draw_unconstrained(std::span<const double> eps) const;
  /// Applies each block's bijector to an unconstrained vector.
  std::vector<double> to_constrained(std::span<const double> unconstrained) const;
};

/// Shifts the zero-order alpha means so that, at the current posterior means, expected
/// and observed event counts agree in every interval. Intervals without events keep
/// their value.
void warm_start_baseline(VariationalPosterior& posterior, const QuiltedSurvivalModel& model,
                         const ModelData& data);

/// Draws S parameter vectors and maps them through the block bijectors.
std::vector<std::vector<double>> sample_parameters(const VariationalPosterior& posterior, int samples,
                                                   std::mt19937_64& rng);

/// Replaces non-finite entries with (minimum finite entry - 100); with no finite entry all
/// become -1e6.
std::vector<double> clamp_divergent(std::span<const double> log_likelihoods);
/// In-place form; returns the number of replaced entries.
std::size_t clamp_divergent_inplace(std::span<double> log_likelihoods);

inline constexpr double kClampOffset = 100.0;
inline constexpr double kClampFallback = -1e6;

struct TrainConfig {
  std::size_t batch_size = 10000;
  int param_samples = 8;
  double initial_lr = 0.0015;
  double lr_decay = 0.10;
  int patience = 5;
  int max_epochs = 100;
  int lookahead_sync = 6;
  double lookahead_alpha = 0.5;
  double init_mean = 0.0;
  double init_log_sd = std::log(0.01);
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Unnormalised log joint split into a per-row likelihood and a prior.
class LogDensityModel {
 public:
  virtual ~LogDensityModel() = default;
  virtual std::size_t num_parameters() const = 0;
  virtual std::size_t num_rows() const = 0;
  /// Writes per-row log-likelihoods and adds scale * gradient of finite rows into grad.
  virtual void log_likelihood(std::span<const double> theta, std::span<const std::size_t> rows,
                              double scale, std::span<double> per_row,
                              std::span<double> grad) const = 0;
  /// Log prior (including any bijector log-Jacobians); adds the gradient into grad.
  virtual double log_prior(std::span<const double> theta, std::span<double> grad) const = 0;
};

/// The survival + placement model over a fixed dataset.
class SurvivalLogDensity : public LogDensityModel {
 public:
  SurvivalLogDensity(const QuiltedSurvivalModel& model, const ModelData& data, int threads = 1);

  std::size_t num_parameters() const override { return model_.num_parameters(); }
  std::size_t num_rows() const override { return data_.rows; }
  void log_likelihood(std::span<const double> theta, std::span<const std::size_t> rows, double scale,
                      std::span<double> per_row, std::span<double> grad) const override;
  double log_prior(std::span<const double> theta, std::span<double> grad) const override;

 private:
  const QuiltedSurvivalModel& model_;
  const ModelData& data_;
  int threads_;
  mutable BatchPlan cached_plan_;
};

struct ElboEstimate {
  double elbo = 0.0;
  double expected_log_likelihood = 0.0;  // scaled to the full dataset
  double expected_log_prior = 0.0;
  double entropy = 0.0;
  std::size_t clamped = 0;
};

/// Minibatch ELBO averaged over the supplied standard-normal draws `eps` (one vector per
/// parameter sample). Gradients with respect to the posterior mean and log-sd are written
/// when the spans are non-empty. Throws NumericalError when the estimate is non-finite
/// after clamping.
ElboEstimate minibatch_elbo(const LogDensityModel& model, const VariationalPosterior& posterior,
                            std::span<const std::size_t> batch,
                            std::span<const std::vector<double>> eps,
                            std::span<double> grad_mean = {}, std::span<double> grad_log_sd = {});

/// A stochastic loss over minibatches of row indices.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t num_rows() const = 0;
  /// Returns the loss and writes its gradient with respect to mean and log-sd.
  virtual double loss(const VariationalPosterior& q, std::span<const std::size_t> batch,
                      std::mt19937_64& rng, std::span<double> grad_mean,
                      std::span<double> grad_log_sd) = 0;
};

/// Negative minibatch ELBO with `samples` fresh reparameterisation draws per call.
class ElboObjective : public Objective {
 public:
  ElboObjective(const LogDensityModel& model, int samples);
  std::size_t num_rows() const override { return model_.num_rows(); }
  double loss(const VariationalPosterior& q, std::span<const std::size_t> batch, std::mt19937_64& rng,
              std::span<double> grad_mean, std::span<double> grad_log_sd) override;
  std::size_t last_clamped() const { return last_clamped_; }

 private:
  const LogDensityModel& model_;
  int samples_;
  std::size_t last_clamped_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;  // after this epoch's decay decision
  int stagnation = 0;
  bool improved = false;
  std::size_t skipped_steps = 0;
};

struct TrainResult {
  VariationalPosterior posterior;  // state at the best epoch
  std::vector<EpochLog> log;
  double best_loss = 0.0;
  int best_epoch = 0;
  std::string stop_reason;
};

/// Shuffled-minibatch Adam inside lookahead. After any epoch whose mean batch loss does not
/// strictly improve the best so far, lr <- (1 - lr_decay) lr; stops after `patience`
/// consecutive non-improving epochs or at max_epochs. Steps with non-finite loss or
/// gradient are skipped and mark the epoch as non-improving.
TrainResult train(Objective& objective, VariationalPosterior initial, const TrainConfig& config);

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log);

/// <prefix>.json manifest + <prefix>.bin blob of [mean..., log_sd...].
void save_checkpoint(const std::filesystem::path& prefix, const VariationalPosterior& posterior,
                     const ModelSpec& spec, const nlohmann::json& extra = {});

struct Checkpoint {
  ModelSpec spec;
  VariationalPosterior posterior;
  nlohmann::json manifest;
};
Checkpoint load_checkpoint(const std::filesystem::path& prefix);

}  // namespace quiltsurv
