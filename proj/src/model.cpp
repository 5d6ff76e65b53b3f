#include "quiltsurv/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "quiltsurv/common.hpp"

namespace quiltsurv {

ModelSpec ModelSpec::standard(std::vector<std::string> feature_names) {
  ModelSpec spec;
  spec.feature_names = std::move(feature_names);
  spec.schema = CohortSchema::standard();
  const LatticeSpec episode_lattice({{"mdc", 26}, {"hx", 32}, {"ccmcc", 3}}, 2);
  spec.alpha_lattice = episode_lattice;
  spec.gamma_lattice = episode_lattice;
  spec.nu_lattice = episode_lattice;
  spec.beta_lattice = LatticeSpec({{"race", 5}}, 1);
  return spec;
}

void ModelSpec::validate() const {
  for (const auto* lat : {&alpha_lattice, &beta_lattice, &gamma_lattice, &nu_lattice})
    schema.check_lattice(*lat);
  if (!(prior_scale > 0.0) || !(prior_decay > 0.0) || prior_decay > 1.0)
    throw std::invalid_argument("prior scale must be > 0 and decay in (0, 1]");
}

nlohmann::json model_spec_to_json(const ModelSpec& spec) {
  nlohmann::json axes = nlohmann::json::array();
  for (const auto& a : spec.schema.axes()) axes.push_back({{"name", a.name}, {"size", a.size}});
  return {{"breakpoints", spec.breakpoints.boundaries()},
          {"cohort_axes", axes},
          {"feature_names", spec.feature_names},
          {"alpha_lattice", lattice_to_json(spec.alpha_lattice)},
          {"beta_lattice", lattice_to_json(spec.beta_lattice)},
          {"gamma_lattice", lattice_to_json(spec.gamma_lattice)},
          {"nu_lattice", lattice_to_json(spec.nu_lattice)},
          {"prior_scale", spec.prior_scale},
          {"prior_decay", spec.prior_decay},
          {"horseshoe", spec.horseshoe},
          {"probability_covariates", spec.probability_covariates},
          {"use_xi", spec.use_xi}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  if (j.contains("breakpoints"))
    spec.breakpoints = Breakpoints(j.at("breakpoints").get<std::vector<double>>());
  if (j.contains("cohort_axes")) {
    std::vector<LatticeDim> axes;
    for (const auto& a : j.at("cohort_axes"))
      axes.push_back({a.at("name").get<std::string>(), a.at("size").get<int>()});
    spec.schema = CohortSchema(std::move(axes));
  }
  spec.feature_names = j.value("feature_names", std::vector<std::string>{});
  const auto standard = ModelSpec::standard({});
  auto lattice = [&](const char* key, const LatticeSpec& fallback) {
    return j.contains(key) ? lattice_from_json(j.at(key)) : fallback;
  };
  spec.alpha_lattice = lattice("alpha_lattice", standard.alpha_lattice);
  spec.beta_lattice = lattice("beta_lattice", standard.beta_lattice);
  spec.gamma_lattice = lattice("gamma_lattice", standard.gamma_lattice);
  spec.nu_lattice = lattice("nu_lattice", standard.nu_lattice);
  spec.prior_scale = j.value("prior_scale", spec.prior_scale);
  spec.prior_decay = j.value("prior_decay", spec.prior_decay);
  spec.horseshoe = j.value("horseshoe", spec.horseshoe);
  spec.probability_covariates = j.value("probability_covariates", spec.probability_covariates);
  spec.use_xi = j.value("use_xi", spec.use_xi);
  return spec;
}

ModelData ModelData::from_episodes(std::span<const EpisodeRecord> episodes, const ModelSpec& spec) {
  ModelData d;
  d.rows = episodes.size();
  d.num_axes = static_cast<std::size_t>(spec.schema.num_axes());
  const std::size_t p = spec.num_features();
  d.cohort.reserve(d.rows * d.num_axes);
  for (std::size_t n = 0; n < episodes.size(); ++n) {
    const auto& e = episodes[n];
    const std::string where = "episode " + std::to_string(n) + ": ";
    if (e.covariates.size() != p)
      throw DataError(where + "has " + std::to_string(e.covariates.size()) +
                      " covariates, model expects " + std::to_string(p));
    try {
      spec.schema.validate(e.cohort);
    } catch (const DataError& err) {
      throw DataError(where + err.what());
    }
    if (e.placement < 0 || e.placement >= kNumPlacements) throw DataError(where + "bad placement");
    if (!std::isfinite(e.wait_days) || e.wait_days < 0.0) throw DataError(where + "bad wait_days");
    for (std::size_t j = 0; j < p; ++j)
      if (e.covariates[j]) d.feature_idx.push_back(static_cast<std::uint32_t>(j));
    d.feature_ptr.push_back(d.feature_idx.size());
    d.cohort.insert(d.cohort.end(), e.cohort.begin(), e.cohort.end());
    d.placement.push_back(e.placement);
    d.time.push_back(e.wait_days);
    d.event.push_back(e.event ? 1 : 0);
  }
  return d;
}

QuiltedSurvivalModel::QuiltedSurvivalModel(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const auto n_int = static_cast<std::size_t>(spec_.breakpoints.num_intervals());
  const std::size_t p = spec_.num_features();
  alpha_ = QuiltLayout(spec_.alpha_lattice, n_int);
  beta_ = QuiltLayout(spec_.beta_lattice, std::max<std::size_t>(n_int * p, 1));
  gamma_ = QuiltLayout(spec_.gamma_lattice, n_int * kInterventionSize);
  nu_ = QuiltLayout(spec_.nu_lattice, kNumThresholds);

  auto add = [&](std::string name, std::size_t size, Bijector bij, Bijector assembly) {
    blocks_.push_back({std::move(name), num_parameters_, size, bij, assembly});
    num_parameters_ += size;
    return blocks_.back().offset;
  };
  alpha_off_ = add("alpha", alpha_.size(), Bijector::identity, Bijector::identity);
  beta_off_ = add("beta", beta_.size(), Bijector::identity, Bijector::identity);
  gamma_off_ = add("gamma", gamma_.size(), Bijector::identity, Bijector::negated_softplus);
  nu_off_ = add("nu", nu_.size(), Bijector::identity, Bijector::ordered_thresholds);
  if (spec_.horseshoe && p > 0) {
    const std::size_t cells = spec_.beta_lattice.cell_count();
    beta_local_off_ = add("beta_local", cells * n_int * p, Bijector::softplus, Bijector::identity);
    beta_global_off_ = add("beta_global", cells, Bijector::softplus, Bijector::identity);
  }
  if (spec_.use_xi && p > 0) {
    xi_off_ = add("xi", p, Bijector::identity, Bijector::identity);
    xi_local_off_ = add("xi_local", p, Bijector::softplus, Bijector::identity);
    xi_global_off_ = add("xi_global", 1, Bijector::softplus, Bijector::identity);
  }
}

const ParameterBlock& QuiltedSurvivalModel::block(std::string_view name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw std::out_of_range("no parameter block '" + std::string(name) + "'");
}

bool QuiltedSurvivalModel::has_block(std::string_view name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const auto& b) { return b.name == name; });
}

BatchPlan QuiltedSurvivalModel::plan(const ModelData& data, std::span<const std::size_t> rows) const {
  BatchPlan out;
  out.rows.assign(rows.begin(), rows.end());
  auto fill = [&](const QuiltLayout& layout, BatchPlan::CellSet& set) {
    std::unordered_map<std::size_t, std::uint32_t> slot_of;
    set.row_slot.reserve(rows.size());
    for (std::size_t n : rows) {
      if (n >= data.rows) throw std::out_of_range("batch row outside data");
      auto kappa = spec_.schema.project(layout.lattice(), data.cohort_of(n));
      const std::size_t cell = layout.lattice().cell_index(kappa);
      auto [it, inserted] = slot_of.try_emplace(cell, static_cast<std::uint32_t>(set.kappas.size()));
      if (inserted) {
        set.offsets.push_back(layout.cell_row_offsets(kappa));
        set.kappas.push_back(std::move(kappa));
      }
      set.row_slot.push_back(it->second);
    }
  };
  fill(alpha_, out.alpha);
  fill(beta_, out.beta);
  fill(gamma_, out.gamma);
  fill(nu_, out.nu);
  return out;
}

namespace {

// Assembled values of every slot of a cell set: slots x value_size.
std::vector<double> assemble_slots(const BatchPlan::CellSet& set, std::span<const double> block,
                                   std::size_t value_size) {
  std::vector<double> out(set.kappas.size() * value_size, 0.0);
  for (std::size_t s = 0; s < set.kappas.size(); ++s) {
    double* dst = out.data() + s * value_size;
    for (std::size_t off : set.offsets[s])
      for (std::size_t v = 0; v < value_size; ++v) dst[v] += block[off + v];
  }
  return out;
}

void scatter_slots(const BatchPlan::CellSet& set, std::span<const double> slot_grad,
                   std::span<double> block_grad, std::size_t value_size) {
  for (std::size_t s = 0; s < set.kappas.size(); ++s) {
    const double* src = slot_grad.data() + s * value_size;
    for (std::size_t off : set.offsets[s])
      for (std::size_t v = 0; v < value_size; ++v) block_grad[off + v] += src[v];
  }
}

// P(I = k) for logits a_1 > ... > a_5 (a_0 = +inf, a_6 = -inf), evaluated without
// cancellation: sigma(a) - sigma(b) = sigma(a) sigma(-b) (1 - e^(b-a)).
double category_probability(int k, const double* logits) {
  if (k == 0) return sigmoid(-logits[0]);
  if (k == kNumPlacements - 1) return sigmoid(logits[kNumThresholds - 1]);
  const double a = logits[k - 1];
  const double b = logits[k];
  return sigmoid(a) * sigmoid(-b) * -std::expm1(b - a);
}

struct ChunkGrad {
  std::vector<double> alpha, beta, gamma, nu, xi;
};

}  // namespace

void QuiltedSurvivalModel::log_likelihood(std::span<const double> theta, const ModelData& data,
                                          const BatchPlan& plan, double scale,
                                          std::span<double> per_row, std::span<double> grad,
                                          int threads) const {
  if (theta.size() != num_parameters_) throw std::invalid_argument("theta size mismatch");
  if (per_row.size() != plan.rows.size()) throw std::invalid_argument("per_row size mismatch");
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != num_parameters_) throw std::invalid_argument("grad size mismatch");

  const auto& breaks = spec_.breakpoints;
  const int n_int = breaks.num_intervals();
  const std::size_t ni = static_cast<std::size_t>(n_int);
  const std::size_t p = spec_.num_features();
  const std::size_t vb = beta_.value_size();
  const std::size_t vg = gamma_.value_size();
  const bool prob_cov = spec_.probability_covariates;

  const auto alpha_vals = assemble_slots(plan.alpha, theta.subspan(alpha_off_, alpha_.size()), ni);
  const auto beta_vals = assemble_slots(plan.beta, theta.subspan(beta_off_, beta_.size()), vb);
  auto gamma_raw = assemble_slots(plan.gamma, theta.subspan(gamma_off_, gamma_.size()), vg);
  const auto nu_raw = assemble_slots(plan.nu, theta.subspan(nu_off_, nu_.size()), kNumThresholds);

  std::vector<double> gamma_vals = gamma_raw;
  for (std::size_t s = 0; s < plan.gamma.kappas.size(); ++s)
    constrain_gamma(std::span<double>(gamma_vals).subspan(s * vg, vg), n_int);
  std::vector<double> thresholds(nu_raw.size());
  for (std::size_t s = 0; s < plan.nu.kappas.size(); ++s) {
    const auto t = threshold_transform(std::span<const double>(nu_raw).subspan(s * kNumThresholds, kNumThresholds));
    std::copy(t.begin(), t.end(), thresholds.begin() + static_cast<std::ptrdiff_t>(s * kNumThresholds));
  }
  const double* xi = xi_off_ ? theta.data() + *xi_off_ : nullptr;

  std::vector<double> lower(ni), upper(ni);
  for (int i = 0; i < n_int; ++i) {
    lower[static_cast<std::size_t>(i)] = breaks.lower(i);
    upper[static_cast<std::size_t>(i)] = breaks.upper(i);
  }

  const std::size_t n_rows = plan.rows.size();
  const std::size_t n_chunks = (n_rows + kChunkRows - 1) / kChunkRows;
  std::vector<ChunkGrad> chunks(want_grad ? n_chunks : 0);

  auto run_chunk = [&](std::size_t c) {
    ChunkGrad* cg = nullptr;
    if (want_grad) {
      cg = &chunks[c];
      cg->alpha.assign(plan.alpha.kappas.size() * ni, 0.0);
      cg->beta.assign(plan.beta.kappas.size() * vb, 0.0);
      cg->gamma.assign(plan.gamma.kappas.size() * vg, 0.0);
      cg->nu.assign(plan.nu.kappas.size() * kNumThresholds, 0.0);
      if (xi) cg->xi.assign(p, 0.0);
    }
    std::vector<double> eta(ni), expo(ni), g(ni);
    double logits[kNumThresholds], prob[kNumThresholds], dprob[kNumThresholds];
    double iv[kInterventionSize];
    const std::size_t end = std::min(n_rows, (c + 1) * kChunkRows);
    for (std::size_t r = c * kChunkRows; r < end; ++r) {
      const std::size_t n = plan.rows[r];
      const std::size_t sa = plan.alpha.row_slot[r], sb = plan.beta.row_slot[r];
      const std::size_t sg = plan.gamma.row_slot[r], sn = plan.nu.row_slot[r];
      const auto feats = data.features_of(n);
      const int placement = data.placement[n];

      double lp = 0.0;
      if (xi)
        for (auto j : feats) lp += xi[j];
      const double* nu = thresholds.data() + sn * kNumThresholds;
      for (int k = 0; k < kNumThresholds; ++k) {
        logits[k] = nu[k] + lp;
        prob[k] = sigmoid(logits[k]);
      }
      const double p_place = category_probability(placement, logits);
      const double ll_place = std::log(p_place);

      for (int k = 0; k < kNumThresholds; ++k) {
        iv[k] = prob_cov ? prob[k] : 0.0;
        iv[kNumThresholds + k] = placement >= k + 1 ? 1.0 : 0.0;
      }
      const double* a = alpha_vals.data() + sa * ni;
      const double* b = beta_vals.data() + sb * vb;
      const double* gm = gamma_vals.data() + sg * vg;
      const double t = data.time[n];
      const bool event = data.event[n] != 0;
      const int m = breaks.interval_of(t);
      double ll_surv = 0.0;
      for (std::size_t i = 0; i < ni; ++i) {
        double e = a[i];
        const double* bi = b + i * p;
        for (auto j : feats) e += bi[j];
        const double* gi = gm + i * kInterventionSize;
        for (int k = 0; k < kInterventionSize; ++k) e += gi[k] * iv[k];
        eta[i] = e;
        expo[i] = t > lower[i] ? std::min(t, upper[i]) - lower[i] : 0.0;
        if (expo[i] > 0.0) ll_surv -= std::exp(e) * expo[i];
      }
      if (event) ll_surv += eta[static_cast<std::size_t>(m)];
      const double ll = ll_surv + ll_place;
      per_row[r] = ll;
      if (!want_grad || !std::isfinite(ll)) continue;

      for (std::size_t i = 0; i < ni; ++i)
        g[i] = scale * (((event && i == static_cast<std::size_t>(m)) ? 1.0 : 0.0) -
                        (expo[i] > 0.0 ? std::exp(eta[i]) * expo[i] : 0.0));
      double* ga = cg->alpha.data() + sa * ni;
      double* gb = cg->beta.data() + sb * vb;
      double* gg = cg->gamma.data() + sg * vg;
      for (int k = 0; k < kNumThresholds; ++k) dprob[k] = 0.0;
      for (std::size_t i = 0; i < ni; ++i) {
        ga[i] += g[i];
        double* gbi = gb + i * p;
        for (auto j : feats) gbi[j] += g[i];
        double* ggi = gg + i * kInterventionSize;
        const double* gmi = gm + i * kInterventionSize;
        for (int k = 0; k < kInterventionSize; ++k) ggi[k] += g[i] * iv[k];
        if (prob_cov)
          for (int k = 0; k < kNumThresholds; ++k) dprob[k] += g[i] * gmi[k];
      }
      const double inv_p = scale / p_place;
      if (placement >= 1) dprob[placement - 1] += inv_p;
      if (placement <= kNumThresholds - 1) dprob[placement] -= inv_p;
      double* gn = cg->nu.data() + sn * kNumThresholds;
      double dlp = 0.0;
      for (int k = 0; k < kNumThresholds; ++k) {
        const double dlogit = dprob[k] * prob[k] * (1.0 - prob[k]);
        gn[k] += dlogit;
        dlp += dlogit;
      }
      if (xi)
        for (auto j : feats) cg->xi[j] += dlp;
    }
  };

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n_chunks)));
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t c = static_cast<std::size_t>(w); c < n_chunks; c += static_cast<std::size_t>(workers))
          run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }
  if (!want_grad) return;

  ChunkGrad total;
  total.alpha.assign(plan.alpha.kappas.size() * ni, 0.0);
  total.beta.assign(plan.beta.kappas.size() * vb, 0.0);
  total.gamma.assign(plan.gamma.kappas.size() * vg, 0.0);
  total.nu.assign(plan.nu.kappas.size() * kNumThresholds, 0.0);
  total.xi.assign(xi ? p : 0, 0.0);
  auto add_into = [](std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  };
  for (const auto& cg : chunks) {
    add_into(total.alpha, cg.alpha);
    add_into(total.beta, cg.beta);
    add_into(total.gamma, cg.gamma);
    add_into(total.nu, cg.nu);
    add_into(total.xi, cg.xi);
  }

  // Constraint adjoints: gamma indicators through -softplus, nu through the ordered map.
  for (std::size_t s = 0; s < plan.gamma.kappas.size(); ++s)
    for (std::size_t i = 0; i < ni; ++i)
      for (int k = kNumThresholds; k < kInterventionSize; ++k) {
        const std::size_t idx = s * vg + i * kInterventionSize + static_cast<std::size_t>(k);
        total.gamma[idx] *= -sigmoid(gamma_raw[idx]);
      }
  for (std::size_t s = 0; s < plan.nu.kappas.size(); ++s) {
    double* gn = total.nu.data() + s * kNumThresholds;
    const double* u = nu_raw.data() + s * kNumThresholds;
    double tail = 0.0;
    double du[kNumThresholds];
    for (int k = kNumThresholds - 1; k >= 1; --k) {
      tail += gn[k];
      du[k] = -sigmoid(u[k]) * tail;
    }
    du[0] = tail + gn[0];
    for (int k = 0; k < kNumThresholds; ++k) gn[k] = du[k];
  }

  scatter_slots(plan.alpha, total.alpha, grad.subspan(alpha_off_, alpha_.size()), ni);
  scatter_slots(plan.beta, total.beta, grad.subspan(beta_off_, beta_.size()), vb);
  scatter_slots(plan.gamma, total.gamma, grad.subspan(gamma_off_, gamma_.size()), vg);
  scatter_slots(plan.nu, total.nu, grad.subspan(nu_off_, nu_.size()), kNumThresholds);
  if (xi)
    for (std::size_t j = 0; j < p; ++j) grad[*xi_off_ + j] += total.xi[j];
}

namespace {

// Horseshoe over `coef` with local scales softplus(local_u) and global softplus(global_u),
// including the softplus log-Jacobians. Gradients are added when the spans are non-empty.
double horseshoe_term(std::span<const double> coef, std::span<const double> local_u,
                      double global_u, std::span<double> coef_grad,
                      std::span<double> local_grad, double* global_grad) {
  const double tau = softplus(global_u);
  double total = half_cauchy_log_density(tau) - log1pexp(-global_u);
  double dtau = -2.0 * tau / (1.0 + tau * tau);
  const bool want_grad = !coef_grad.empty();
  for (std::size_t v = 0; v < coef.size(); ++v) {
    const double lam = softplus(local_u[v]);
    const double s = lam * tau;
    const double b = coef[v];
    total += normal_log_density(b, 0.0, s) + half_cauchy_log_density(lam) - log1pexp(-local_u[v]);
    if (!want_grad) continue;
    const double inv_s2 = 1.0 / (s * s);
    coef_grad[v] += -b * inv_s2;
    const double ds = -1.0 / s + b * b * inv_s2 / s;
    const double dlam = ds * tau - 2.0 * lam / (1.0 + lam * lam);
    local_grad[v] += dlam * sigmoid(local_u[v]) + sigmoid(-local_u[v]);
    dtau += ds * lam;
  }
  if (want_grad) *global_grad += dtau * sigmoid(global_u) + sigmoid(-global_u);
  return total;
}

}  // namespace

double QuiltedSurvivalModel::log_prior(std::span<const double> theta, std::span<double> grad) const {
  if (theta.size() != num_parameters_) throw std::invalid_argument("theta size mismatch");
  const bool want_grad = !grad.empty();
  auto sub = [&](std::size_t off, std::size_t n) {
    return want_grad ? grad.subspan(off, n) : std::span<double>{};
  };
  const double scale = spec_.prior_scale, decay = spec_.prior_decay;
  double total = 0.0;
  total += prior_log_density(alpha_, theta.subspan(alpha_off_, alpha_.size()), scale, decay, sub(alpha_off_, alpha_.size()));
  total += prior_log_density(beta_, theta.subspan(beta_off_, beta_.size()), scale, decay, sub(beta_off_, beta_.size()));
  total += prior_log_density(gamma_, theta.subspan(gamma_off_, gamma_.size()), scale, decay, sub(gamma_off_, gamma_.size()));
  total += prior_log_density(nu_, theta.subspan(nu_off_, nu_.size()), scale, decay, sub(nu_off_, nu_.size()));

  if (beta_local_off_) {
    const std::size_t vb = beta_.value_size();
    const auto beta_block = theta.subspan(beta_off_, beta_.size());
    std::vector<double> cell(vb), cell_grad(vb);
    const auto& lat = spec_.beta_lattice;
    for (std::size_t c = 0; c < lat.cell_count(); ++c) {
      const auto kappa = lat.cell_coords(c);
      beta_.assemble(beta_block, kappa, cell);
      std::fill(cell_grad.begin(), cell_grad.end(), 0.0);
      const std::size_t local = *beta_local_off_ + c * vb;
      const std::size_t global = *beta_global_off_ + c;
      total += horseshoe_term(cell, theta.subspan(local, vb), theta[global],
                              want_grad ? std::span<double>(cell_grad) : std::span<double>{},
                              sub(local, vb), want_grad ? &grad[global] : nullptr);
      if (want_grad) beta_.scatter(grad.subspan(beta_off_, beta_.size()), kappa, cell_grad);
    }
  }
  if (xi_off_) {
    const std::size_t p = spec_.num_features();
    total += horseshoe_term(theta.subspan(*xi_off_, p), theta.subspan(*xi_local_off_, p),
                            theta[*xi_global_off_], sub(*xi_off_, p), sub(*xi_local_off_, p),
                            want_grad ? &grad[*xi_global_off_] : nullptr);
  }
  return total;
}

PemParameters QuiltedSurvivalModel::pem_parameters(std::span<const double> theta) const {
  if (theta.size() != num_parameters_) throw std::invalid_argument("theta size mismatch");
  auto slice = [&](std::size_t off, std::size_t n) {
    return std::vector<double>(theta.begin() + static_cast<std::ptrdiff_t>(off),
                               theta.begin() + static_cast<std::ptrdiff_t>(off + n));
  };
  PemParameters params;
  params.breakpoints = spec_.breakpoints;
  params.schema = spec_.schema;
  params.num_features = spec_.num_features();
  params.alpha = LatticeDecomposition(alpha_, slice(alpha_off_, alpha_.size()));
  params.beta = LatticeDecomposition(beta_, slice(beta_off_, beta_.size()));
  params.gamma = LatticeDecomposition(gamma_, slice(gamma_off_, gamma_.size()));
  return params;
}

PlacementParameters QuiltedSurvivalModel::placement_parameters(std::span<const double> theta) const {
  if (theta.size() != num_parameters_) throw std::invalid_argument("theta size mismatch");
  PlacementParameters params;
  params.schema = spec_.schema;
  params.nu = LatticeDecomposition(
      nu_, std::vector<double>(theta.begin() + static_cast<std::ptrdiff_t>(nu_off_),
                               theta.begin() + static_cast<std::ptrdiff_t>(nu_off_ + nu_.size())));
  if (xi_off_)
    params.xi.assign(theta.begin() + static_cast<std::ptrdiff_t>(*xi_off_),
                     theta.begin() + static_cast<std::ptrdiff_t>(*xi_off_ + spec_.num_features()));
  return params;
}

QuiltedSurvivalModel::RowPrediction QuiltedSurvivalModel::predict(
    std::span<const double> theta, std::span<const int> cohort,
    std::span<const std::uint32_t> active_features, int placement) const {
  if (theta.size() != num_parameters_) throw std::invalid_argument("theta size mismatch");
  spec_.schema.validate(cohort);
  const int n_int = spec_.breakpoints.num_intervals();
  const std::size_t ni = static_cast<std::size_t>(n_int);
  const std::size_t p = spec_.num_features();
  for (auto j : active_features)
    if (j >= p) throw std::invalid_argument("feature index out of range");

  std::vector<double> a(ni), b(beta_.value_size()), gm(gamma_.value_size()), u(kNumThresholds);
  alpha_.assemble(theta.subspan(alpha_off_, alpha_.size()), spec_.schema.project(alpha_.lattice(), cohort), a);
  beta_.assemble(theta.subspan(beta_off_, beta_.size()), spec_.schema.project(beta_.lattice(), cohort), b);
  gamma_.assemble(theta.subspan(gamma_off_, gamma_.size()), spec_.schema.project(gamma_.lattice(), cohort), gm);
  nu_.assemble(theta.subspan(nu_off_, nu_.size()), spec_.schema.project(nu_.lattice(), cohort), u);
  constrain_gamma(gm, n_int);
  double lp = 0.0;
  if (xi_off_)
    for (auto j : active_features) lp += theta[*xi_off_ + j];

  RowPrediction out;
  out.exceedance = exceedance_probs(threshold_transform(u), lp);
  auto iv = build_intervention_covariates(placement, out.exceedance);
  if (!spec_.probability_covariates)
    for (int k = 0; k < kNumThresholds; ++k) iv[static_cast<std::size_t>(k)] = 0.0;
  out.log_hazards.resize(ni);
  for (std::size_t i = 0; i < ni; ++i) {
    double e = a[i];
    for (auto j : active_features) e += b[i * p + j];
    for (int k = 0; k < kInterventionSize; ++k)
      e += gm[i * kInterventionSize + static_cast<std::size_t>(k)] * iv[static_cast<std::size_t>(k)];
    out.log_hazards[i] = e;
  }
  return out;
}

}  // namespace quiltsurv
