#include "quiltsurv/history.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "quiltsurv/common.hpp"

namespace quiltsurv {

namespace {

constexpr double kTiny = 1e-300;

void check_counts(const RowMatrix& counts) {
  if (counts.size() == 0) throw DataError("empty history count matrix");
  if (!counts.allFinite()) throw DataError("non-finite history counts");
  if ((counts.array() < 0.0).any()) throw DataError("negative history counts");
  if ((counts.array() == 0.0).all()) throw DataError("all-zero history count matrix");
}

}  // namespace

double poisson_loss(const RowMatrix& x, const RowMatrix& r) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xv = x.data()[i], rv = r.data()[i];
    total += rv;
    if (xv > 0.0) total -= xv * std::log(std::max(rv, kTiny));
  }
  return total;
}

double poisson_deviance(const RowMatrix& x, const RowMatrix& r) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xv = x.data()[i], rv = r.data()[i];
    total += rv - xv;
    if (xv > 0.0) total += xv * std::log(xv / std::max(rv, kTiny));
  }
  return 2.0 * total;
}

RowMatrix reconstruct(const RowMatrix& counts, const FactorizationModel& m) {
  return (counts * m.encoder.transpose()) * m.decoder;
}

double factorization_objective(const RowMatrix& counts, const FactorizationModel& m, double sparsity) {
  double penalty = 0.0;
  for (Eigen::Index k = 0; k < m.encoder.rows(); ++k)
    penalty += m.encoder.row(k).sum() * m.decoder.row(k).sum();
  return poisson_loss(counts, reconstruct(counts, m)) + sparsity * penalty;
}

FactorizationModel fit_factorization(const RowMatrix& x, const FactorizationConfig& cfg) {
  if (cfg.latent_dim < 1) throw std::invalid_argument("latent_dim must be at least 1");
  if (cfg.sparsity < 0.0) throw std::invalid_argument("sparsity must be non-negative");
  if (cfg.max_iterations < 1) throw std::invalid_argument("max_iterations must be positive");
  check_counts(x);
  const Eigen::Index k_dim = cfg.latent_dim, h_dim = x.cols();
  const double lambda = cfg.sparsity;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  FactorizationModel m;
  m.encoder.resize(k_dim, h_dim);
  m.decoder.resize(k_dim, h_dim);
  for (Eigen::Index i = 0; i < m.encoder.size(); ++i) m.encoder.data()[i] = unif(rng);
  for (Eigen::Index i = 0; i < m.decoder.size(); ++i) m.decoder.data()[i] = unif(rng);
  // Zero columns can never be reconstructed; start their weights at zero.
  const Eigen::RowVectorXd col_sums = x.colwise().sum();
  for (Eigen::Index h = 0; h < h_dim; ++h)
    if (col_sums(h) == 0.0) m.encoder.col(h).setZero();
  for (Eigen::Index k = 0; k < k_dim; ++k) m.decoder.row(k) /= m.decoder.row(k).sum();
  // Match the overall count scale so the first steps are not dominated by a mean shift.
  {
    const double target = x.sum();
    const double current = reconstruct(x, m).sum();
    if (current > 0.0) m.encoder *= target / current;
  }

  double obj = factorization_objective(x, m, lambda);
  m.loss_trace.push_back(obj);
  const RowMatrix x_sum_rows = x.colwise().sum();  // 1 x H

  for (int it = 0; it < cfg.max_iterations; ++it) {
    // Decoder: standard Poisson multiplicative step with the penalty in the denominator.
    {
      const RowMatrix prev_decoder = m.decoder, prev_encoder = m.encoder;
      const RowMatrix w = x * m.encoder.transpose();  // N x K
      const RowMatrix r = w * m.decoder;
      const RowMatrix ratio = (x.array() / r.array().max(kTiny)).matrix();
      const RowMatrix num = w.transpose() * ratio;  // K x H
      const Eigen::VectorXd w_sums = w.colwise().sum().transpose();
      for (Eigen::Index k = 0; k < k_dim; ++k) {
        const double denom = w_sums(k) + lambda * m.encoder.row(k).sum();
        if (denom > 0.0) m.decoder.row(k).array() *= num.row(k).array() / denom;
      }
      // Unit L1 decoder rows; the encoder absorbs the scale.
      for (Eigen::Index k = 0; k < k_dim; ++k) {
        const double s = m.decoder.row(k).sum();
        if (s > 0.0) {
          m.decoder.row(k) /= s;
          m.encoder.row(k) *= s;
        }
      }
      // The auxiliary-function step cannot increase the objective beyond rounding;
      // revert it if rounding says otherwise.
      const double updated = factorization_objective(x, m, lambda);
      if (updated <= obj) {
        obj = updated;
      } else {
        m.decoder = prev_decoder;
        m.encoder = prev_encoder;
      }
    }
    // Encoder: multiplicative step with exponent backtracking so the objective never rises.
    {
      const RowMatrix w = x * m.encoder.transpose();
      const RowMatrix r = w * m.decoder;
      const RowMatrix ratio = (x.array() / r.array().max(kTiny)).matrix();
      // d/dE_kh = sum_n x_nh sum_j D_kj (1 - ratio_nj) + lambda |D_k|.
      const RowMatrix neg = (ratio * m.decoder.transpose()).transpose() * x;  // K x H
      const Eigen::VectorXd d_sums = m.decoder.rowwise().sum();
      RowMatrix step(k_dim, h_dim);
      for (Eigen::Index k = 0; k < k_dim; ++k)
        for (Eigen::Index h = 0; h < h_dim; ++h) {
          const double pos = x_sum_rows(0, h) * d_sums(k) + lambda * d_sums(k);
          step(k, h) = pos > 0.0 ? neg(k, h) / pos : 1.0;
        }
      const RowMatrix previous = m.encoder;
      double eta = 1.0;
      bool accepted = false;
      for (int tries = 0; tries < 30; ++tries, eta *= 0.5) {
        m.encoder = (previous.array() * step.array().pow(eta)).matrix();
        const double candidate = factorization_objective(x, m, lambda);
        if (std::isfinite(candidate) && candidate <= obj) {
          obj = candidate;
          accepted = true;
          break;
        }
      }
      if (!accepted) m.encoder = previous;
    }
    const double last = m.loss_trace.back();
    m.loss_trace.push_back(obj);
    if (std::abs(last - obj) <= cfg.tolerance * std::max(1.0, std::abs(last))) break;
  }

  for (Eigen::Index k = 0; k < k_dim; ++k)
    if (m.encoder.row(k).maxCoeff() <= 0.0)
      throw NumericalError("latent dimension " + std::to_string(k) + " lost all encoder weight");
  return m;
}

std::vector<double> encode_history(std::span<const double> x, const FactorizationModel& m) {
  if (static_cast<Eigen::Index>(x.size()) != m.encoder.cols())
    throw std::invalid_argument("history vector length does not match the encoder");
  for (double v : x)
    if (!(v >= 0.0)) throw DataError("history counts must be non-negative");
  std::vector<double> z(static_cast<std::size_t>(m.encoder.rows()), 0.0);
  for (Eigen::Index k = 0; k < m.encoder.rows(); ++k)
    for (Eigen::Index h = 0; h < m.encoder.cols(); ++h) z[static_cast<std::size_t>(k)] += m.encoder(k, h) * x[static_cast<std::size_t>(h)];
  return z;
}

RowMatrix encode_histories(const RowMatrix& counts, const FactorizationModel& m) {
  if (counts.cols() != m.encoder.cols()) throw std::invalid_argument("history width does not match the encoder");
  if ((counts.array() < 0.0).any() || !counts.allFinite()) throw DataError("history counts must be non-negative");
  return counts * m.encoder.transpose();
}

std::vector<double> encoding_medians(const RowMatrix& z) {
  if (z.rows() == 0) throw DataError("no encodings to take medians of");
  std::vector<double> out;
  std::vector<double> col(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index d = 0; d < z.cols(); ++d) {
    for (Eigen::Index n = 0; n < z.rows(); ++n) col[static_cast<std::size_t>(n)] = z(n, d);
    std::sort(col.begin(), col.end());
    const std::size_t n = col.size();
    out.push_back(n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]));
  }
  return out;
}

int assign_group(std::span<const double> z, std::span<const double> medians) {
  if (z.size() != medians.size()) throw std::invalid_argument("encoding/median size mismatch");
  if (z.size() >= 31) throw std::invalid_argument("too many latent dimensions for a group index");
  int g = 0;
  for (std::size_t d = 0; d < z.size(); ++d)
    if (z[d] > medians[d]) g |= 1 << d;
  return g;
}

int HistoryEncoder::group_of(std::span<const double> x_hist) const {
  return assign_group(encode_history(x_hist, model), medians);
}

namespace {

nlohmann::json matrix_to_json(const RowMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.row(r).data(), m.row(r).data() + m.cols());
    rows.push_back(row);
  }
  return rows;
}

RowMatrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw DataError("empty weight matrix");
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw DataError("ragged weight matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

}  // namespace

nlohmann::json history_encoder_to_json(const HistoryEncoder& enc) {
  return {{"format", "history-encoder"},
          {"latent_dim", enc.model.latent_dim()},
          {"history_dim", enc.model.history_dim()},
          {"feature_names", enc.feature_names},
          {"encoder", matrix_to_json(enc.model.encoder)},
          {"decoder", matrix_to_json(enc.model.decoder)},
          {"medians", enc.medians},
          {"loss_trace", enc.model.loss_trace}};
}

HistoryEncoder history_encoder_from_json(const nlohmann::json& j) {
  HistoryEncoder enc;
  enc.model.encoder = matrix_from_json(j.at("encoder"));
  enc.model.decoder = matrix_from_json(j.at("decoder"));
  enc.medians = j.at("medians").get<std::vector<double>>();
  enc.feature_names = j.value("feature_names", std::vector<std::string>{});
  enc.model.loss_trace = j.value("loss_trace", std::vector<double>{});
  if (enc.model.encoder.rows() != enc.model.decoder.rows() ||
      enc.model.encoder.cols() != enc.model.decoder.cols())
    throw DataError("encoder/decoder shape mismatch");
  if (static_cast<Eigen::Index>(enc.medians.size()) != enc.model.encoder.rows())
    throw DataError("median count does not match latent_dim");
  if ((enc.model.encoder.array() < 0.0).any() || (enc.model.decoder.array() < 0.0).any())
    throw DataError("negative factorization weights");
  return enc;
}

nlohmann::json sparsity_report(const HistoryEncoder& enc, double threshold) {
  nlohmann::json dims = nlohmann::json::array();
  const auto& e = enc.model.encoder;
  for (Eigen::Index k = 0; k < e.rows(); ++k) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index h = 0; h < e.cols(); ++h)
      if (e(k, h) > threshold) idx.push_back(h);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return e(k, a) > e(k, b); });
    nlohmann::json terms = nlohmann::json::array();
    for (auto h : idx) {
      const std::string name = static_cast<std::size_t>(h) < enc.feature_names.size()
                                   ? enc.feature_names[static_cast<std::size_t>(h)]
                                   : "h" + std::to_string(h);
      terms.push_back({{"feature", name}, {"weight", e(k, h)}});
    }
    dims.push_back({{"dimension", k},
                    {"median", enc.medians.empty() ? 0.0 : enc.medians[static_cast<std::size_t>(k)]},
                    {"nonzero", idx.size()},
                    {"terms", terms}});
  }
  return {{"threshold", threshold}, {"dimensions", dims}};
}

}  // namespace quiltsurv
