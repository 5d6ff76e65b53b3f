#include "quiltsurv/inference.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "quiltsurv/common.hpp"
#include "quiltsurv/io.hpp"

namespace quiltsurv {

namespace {
constexpr char kCheckpointTag[] = "QSVP";
constexpr std::uint32_t kCheckpointVersion = 1;
const double kEntropyPerDim = 0.5 * (1.0 + kLogTwoPi);
}  // namespace

VariationalPosterior VariationalPosterior::initialize(std::vector<ParameterBlock> blocks,
                                                      double init_mean, double init_log_sd) {
  std::size_t n = 0;
  for (const auto& b : blocks) n = std::max(n, b.offset + b.size);
  VariationalPosterior q;
  q.blocks = std::move(blocks);
  q.mean.assign(n, init_mean);
  q.log_sd.assign(n, init_log_sd);
  return q;
}

const ParameterBlock& VariationalPosterior::block(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw std::out_of_range("no parameter block named " + std::string(name));
}

double VariationalPosterior::entropy() const {
  double h = 0.0;
  for (double w : log_sd) h += w + kEntropyPerDim;
  return h;
}

double VariationalPosterior::block_entropy(std::string_view name) const {
  const auto& b = block(name);
  double h = 0.0;
  for (std::size_t i = b.offset; i < b.offset + b.size; ++i) h += log_sd[i] + kEntropyPerDim;
  return h;
}

std::vector<double> VariationalPosterior::draw_unconstrained(std::span<const double> eps) const {
  if (eps.size() != size()) throw std::invalid_argument("eps size mismatch");
  std::vector<double> theta(size());
  for (std::size_t i = 0; i < size(); ++i) theta[i] = mean[i] + std::exp(log_sd[i]) * eps[i];
  return theta;
}

std::vector<double> VariationalPosterior::to_constrained(std::span<const double> unconstrained) const {
  if (unconstrained.size() != size()) throw std::invalid_argument("parameter size mismatch");
  std::vector<double> out(unconstrained.begin(), unconstrained.end());
  for (const auto& b : blocks) {
    if (b.bijector == Bijector::identity) continue;
    bijector_forward(b.bijector, unconstrained.subspan(b.offset, b.size),
                     std::span<double>(out).subspan(b.offset, b.size));
  }
  return out;
}

void warm_start_baseline(VariationalPosterior& q, const QuiltedSurvivalModel& model,
                         const ModelData& data) {
  if (q.size() != model.num_parameters()) throw std::invalid_argument("posterior does not match model");
  const auto& breaks = model.spec().breakpoints;
  const std::size_t ni = static_cast<std::size_t>(breaks.num_intervals());
  std::vector<double> events(ni, 0.0), expected(ni, 0.0);
  for (std::size_t n = 0; n < data.rows; ++n) {
    const auto pred = model.predict(q.mean, data.cohort_of(n), data.features_of(n), data.placement[n]);
    const auto expo = breaks.exposures(data.time[n]);
    for (std::size_t i = 0; i < ni; ++i) expected[i] += std::exp(pred.log_hazards[i]) * expo[i];
    if (data.event[n]) events[static_cast<std::size_t>(breaks.interval_of(data.time[n]))] += 1.0;
  }
  const std::size_t off = model.block("alpha").offset + model.alpha_layout().components().front().offset;
  for (std::size_t i = 0; i < ni; ++i)
    if (events[i] > 0.0 && expected[i] > 0.0) q.mean[off + i] += std::log(events[i] / expected[i]);
}

std::vector<std::vector<double>> sample_parameters(const VariationalPosterior& posterior, int samples,
                                                   std::mt19937_64& rng) {
  if (samples <= 0) throw std::invalid_argument("samples must be positive");
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(samples));
  std::vector<double> eps(posterior.size());
  for (int s = 0; s < samples; ++s) {
    for (auto& e : eps) e = normal(rng);
    out.push_back(posterior.to_constrained(posterior.draw_unconstrained(eps)));
  }
  return out;
}

std::size_t clamp_divergent_inplace(std::span<double> ll) {
  double lo = std::numeric_limits<double>::infinity();
  std::size_t bad = 0;
  for (double v : ll) {
    if (std::isfinite(v))
      lo = std::min(lo, v);
    else
      ++bad;
  }
  if (bad == 0) return 0;
  const double fill = std::isfinite(lo) ? lo - kClampOffset : kClampFallback;
  for (double& v : ll)
    if (!std::isfinite(v)) v = fill;
  return bad;
}

std::vector<double> clamp_divergent(std::span<const double> ll) {
  std::vector<double> out(ll.begin(), ll.end());
  clamp_divergent_inplace(out);
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (param_samples <= 0) throw std::invalid_argument("param_samples must be positive");
  if (!(initial_lr > 0.0)) throw std::invalid_argument("initial_lr must be positive");
  if (!(lr_decay >= 0.0 && lr_decay < 1.0)) throw std::invalid_argument("lr_decay must be in [0, 1)");
  if (patience <= 0) throw std::invalid_argument("patience must be positive");
  if (max_epochs <= 0) throw std::invalid_argument("max_epochs must be positive");
  if (patience > max_epochs) throw std::invalid_argument("patience must not exceed max_epochs");
  if (lookahead_sync <= 0) throw std::invalid_argument("lookahead_sync must be positive");
  if (!(lookahead_alpha > 0.0 && lookahead_alpha <= 1.0))
    throw std::invalid_argument("lookahead_alpha must be in (0, 1]");
  if (!std::isfinite(init_mean) || !std::isfinite(init_log_sd))
    throw std::invalid_argument("initial posterior values must be finite");
  if (threads <= 0) throw std::invalid_argument("threads must be positive");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},       {"param_samples", c.param_samples},
          {"initial_lr", c.initial_lr},       {"lr_decay", c.lr_decay},
          {"patience", c.patience},           {"max_epochs", c.max_epochs},
          {"lookahead_sync", c.lookahead_sync}, {"lookahead_alpha", c.lookahead_alpha},
          {"init_mean", c.init_mean},         {"init_log_sd", c.init_log_sd},
          {"seed", c.seed},                   {"threads", c.threads}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.param_samples = j.value("param_samples", c.param_samples);
  c.initial_lr = j.value("initial_lr", c.initial_lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.patience = j.value("patience", c.patience);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.lookahead_sync = j.value("lookahead_sync", c.lookahead_sync);
  c.lookahead_alpha = j.value("lookahead_alpha", c.lookahead_alpha);
  c.init_mean = j.value("init_mean", c.init_mean);
  c.init_log_sd = j.value("init_log_sd", c.init_log_sd);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

SurvivalLogDensity::SurvivalLogDensity(const QuiltedSurvivalModel& model, const ModelData& data,
                                       int threads)
    : model_(model), data_(data), threads_(threads) {}

void SurvivalLogDensity::log_likelihood(std::span<const double> theta,
                                        std::span<const std::size_t> rows, double scale,
                                        std::span<double> per_row, std::span<double> grad) const {
  // The ELBO evaluates the same batch once per parameter draw; reuse its plan.
  if (!std::equal(rows.begin(), rows.end(), cached_plan_.rows.begin(), cached_plan_.rows.end()))
    cached_plan_ = model_.plan(data_, rows);
  model_.log_likelihood(theta, data_, cached_plan_, scale, per_row, grad, threads_);
}

double SurvivalLogDensity::log_prior(std::span<const double> theta, std::span<double> grad) const {
  return model_.log_prior(theta, grad);
}

ElboEstimate minibatch_elbo(const LogDensityModel& model, const VariationalPosterior& posterior,
                            std::span<const std::size_t> batch,
                            std::span<const std::vector<double>> eps, std::span<double> grad_mean,
                            std::span<double> grad_log_sd) {
  const std::size_t n = posterior.size();
  if (n != model.num_parameters()) throw std::invalid_argument("posterior/model size mismatch");
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (eps.empty()) throw std::invalid_argument("at least one parameter draw is required");
  const bool want_grad = !grad_mean.empty();
  if (want_grad && (grad_mean.size() != n || grad_log_sd.size() != n))
    throw std::invalid_argument("gradient size mismatch");

  const double scale = static_cast<double>(model.num_rows()) / static_cast<double>(batch.size());
  const double inv_s = 1.0 / static_cast<double>(eps.size());
  ElboEstimate est;
  std::vector<double> per_row(batch.size());
  std::vector<double> g(want_grad ? n : 0);
  if (want_grad) {
    std::fill(grad_mean.begin(), grad_mean.end(), 0.0);
    std::fill(grad_log_sd.begin(), grad_log_sd.end(), 0.0);
  }

  for (const auto& e : eps) {
    const auto theta = posterior.draw_unconstrained(e);
    if (want_grad) std::fill(g.begin(), g.end(), 0.0);
    model.log_likelihood(theta, batch, scale, per_row, g);
    est.clamped += clamp_divergent_inplace(per_row);
    const double ll = scale * std::accumulate(per_row.begin(), per_row.end(), 0.0);
    const double lp = model.log_prior(theta, g);
    est.expected_log_likelihood += inv_s * ll;
    est.expected_log_prior += inv_s * lp;
    if (!want_grad) continue;
    for (std::size_t i = 0; i < n; ++i) {
      grad_mean[i] += inv_s * g[i];
      grad_log_sd[i] += inv_s * g[i] * e[i] * std::exp(posterior.log_sd[i]);
    }
  }
  est.entropy = posterior.entropy();
  est.elbo = est.expected_log_likelihood + est.expected_log_prior + est.entropy;
  if (want_grad)
    for (auto& v : grad_log_sd) v += 1.0;

  if (!std::isfinite(est.elbo)) {
    std::ostringstream msg;
    msg << "non-finite ELBO after clamping: log-likelihood " << est.expected_log_likelihood
        << ", log-prior " << est.expected_log_prior << ", entropy " << est.entropy;
    for (const auto& b : posterior.blocks) {
      for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
        if (!std::isfinite(posterior.mean[i]) || !std::isfinite(posterior.log_sd[i])) {
          msg << "; block " << b.name << " has non-finite variational parameters";
          break;
        }
      }
    }
    throw NumericalError(msg.str());
  }
  return est;
}

ElboObjective::ElboObjective(const LogDensityModel& model, int samples)
    : model_(model), samples_(samples) {
  if (samples <= 0) throw std::invalid_argument("samples must be positive");
}

double ElboObjective::loss(const VariationalPosterior& q, std::span<const std::size_t> batch,
                           std::mt19937_64& rng, std::span<double> grad_mean,
                           std::span<double> grad_log_sd) {
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> eps(static_cast<std::size_t>(samples_), std::vector<double>(q.size()));
  for (auto& e : eps)
    for (auto& v : e) v = normal(rng);
  const auto est = minibatch_elbo(model_, q, batch, eps, grad_mean, grad_log_sd);
  last_clamped_ = est.clamped;
  for (auto& v : grad_mean) v = -v;
  for (auto& v : grad_log_sd) v = -v;
  return -est.elbo;
}

namespace {

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  long t = 0;
  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::span<double> x, std::span<const double> g, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

TrainResult train(Objective& objective, VariationalPosterior initial, const TrainConfig& config) {
  config.validate();
  const std::size_t n_rows = objective.num_rows();
  if (n_rows == 0) throw DataError("no training rows");
  const std::size_t n = initial.size();

  std::mt19937_64 rng(config.seed);
  VariationalPosterior fast = initial;
  // Optimisation state is [mean..., log_sd...].
  std::vector<double> x(2 * n), slow(2 * n), grad(2 * n);
  std::copy(fast.mean.begin(), fast.mean.end(), x.begin());
  std::copy(fast.log_sd.begin(), fast.log_sd.end(), x.begin() + static_cast<std::ptrdiff_t>(n));
  slow = x;
  Adam adam(2 * n);

  auto sync_posterior = [&] {
    std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n), fast.mean.begin());
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(n), x.end(), fast.log_sd.begin());
  };

  TrainResult result;
  result.posterior = fast;
  result.best_loss = std::numeric_limits<double>::infinity();
  double lr = config.initial_lr;
  int stagnation = 0;
  long steps = 0;
  std::vector<std::size_t> order(n_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t counted = 0, skipped = 0;
    for (std::size_t start = 0; start < n_rows; start += config.batch_size) {
      const std::size_t stop = std::min(n_rows, start + config.batch_size);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      std::span<double> gm(grad.data(), n), gs(grad.data() + n, n);
      double loss;
      try {
        loss = objective.loss(fast, batch, rng, gm, gs);
      } catch (const NumericalError& e) {
        spdlog::warn("epoch {}: skipping step: {}", epoch, e.what());
        ++skipped;
        continue;
      }
      if (!std::isfinite(loss) || !all_finite(grad)) {
        spdlog::warn("epoch {}: non-finite loss or gradient, step skipped", epoch);
        ++skipped;
        continue;
      }
      loss_sum += loss;
      ++counted;
      adam.step(x, grad, lr);
      ++steps;
      if (steps % config.lookahead_sync == 0) {
        for (std::size_t i = 0; i < x.size(); ++i) {
          slow[i] += config.lookahead_alpha * (x[i] - slow[i]);
          x[i] = slow[i];
        }
      }
      sync_posterior();
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.skipped_steps = skipped;
    entry.mean_loss = counted > 0 ? loss_sum / static_cast<double>(counted)
                                  : std::numeric_limits<double>::quiet_NaN();
    entry.improved = counted > 0 && skipped == 0 && entry.mean_loss < result.best_loss;
    if (entry.improved) {
      result.best_loss = entry.mean_loss;
      result.best_epoch = epoch;
      result.posterior = fast;
      stagnation = 0;
    } else {
      ++stagnation;
      lr *= 1.0 - config.lr_decay;
    }
    entry.lr = lr;
    entry.stagnation = stagnation;
    result.log.push_back(entry);
    spdlog::debug("epoch {} loss {} lr {} stagnation {}", epoch, entry.mean_loss, lr, stagnation);

    if (stagnation >= config.patience) {
      result.stop_reason = "patience";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_epochs";
  return result;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,mean_loss,lr,stagnation,improved,skipped_steps\n";
  for (const auto& e : log)
    out << e.epoch << ',' << io::format_double(e.mean_loss) << ',' << io::format_double(e.lr) << ','
        << e.stagnation << ',' << (e.improved ? 1 : 0) << ',' << e.skipped_steps << '\n';
}

void save_checkpoint(const std::filesystem::path& prefix, const VariationalPosterior& posterior,
                     const ModelSpec& spec, const nlohmann::json& extra) {
  std::vector<double> blob(posterior.mean);
  blob.insert(blob.end(), posterior.log_sd.begin(), posterior.log_sd.end());
  auto bin = prefix;
  bin += ".bin";
  auto manifest_path = prefix;
  manifest_path += ".json";
  io::write_blob(bin, kCheckpointTag, kCheckpointVersion, blob);

  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : posterior.blocks)
    blocks.push_back({{"name", b.name},
                      {"offset", b.offset},
                      {"size", b.size},
                      {"bijector", to_string(b.bijector)},
                      {"assembly", to_string(b.assembly)}});
  nlohmann::json manifest = {{"format", "quiltsurv-posterior"},
                             {"version", kCheckpointVersion},
                             {"num_parameters", posterior.size()},
                             {"blob", bin.filename().string()},
                             {"model", model_spec_to_json(spec)},
                             {"blocks", blocks}};
  if (!extra.is_null()) manifest["extra"] = extra;
  io::write_json(manifest_path, manifest);
}

Checkpoint load_checkpoint(const std::filesystem::path& prefix) {
  auto manifest_path = prefix;
  manifest_path += ".json";
  Checkpoint ck;
  ck.manifest = io::read_json(manifest_path);
  if (ck.manifest.value("format", "") != "quiltsurv-posterior")
    throw DataError("not a posterior checkpoint: " + manifest_path.string());
  ck.spec = model_spec_from_json(ck.manifest.at("model"));
  const std::size_t n = ck.manifest.at("num_parameters").get<std::size_t>();
  const auto bin = manifest_path.parent_path() / ck.manifest.at("blob").get<std::string>();
  const auto blob = io::read_blob(bin, kCheckpointTag, kCheckpointVersion);
  if (blob.size() != 2 * n) throw DataError("checkpoint blob size mismatch");
  for (const auto& b : ck.manifest.at("blocks"))
    ck.posterior.blocks.push_back({b.at("name").get<std::string>(), b.at("offset").get<std::size_t>(),
                                   b.at("size").get<std::size_t>(),
                                   bijector_from_string(b.at("bijector").get<std::string>()),
                                   bijector_from_string(b.at("assembly").get<std::string>())});
  ck.posterior.mean.assign(blob.begin(), blob.begin() + static_cast<std::ptrdiff_t>(n));
  ck.posterior.log_sd.assign(blob.begin() + static_cast<std::ptrdiff_t>(n), blob.end());
  // The stored blocks must agree with the model rebuilt from the spec.
  QuiltedSurvivalModel model(ck.spec);
  if (model.num_parameters() != n) throw DataError("checkpoint does not match its model spec");
  return ck;
}

}  // namespace quiltsurv
