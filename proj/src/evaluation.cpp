#include "quiltsurv/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "quiltsurv/common.hpp"
#include "quiltsurv/io.hpp"

namespace quiltsurv {

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
}

void ScoredSet::validate() const {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  for (auto l : labels)
    if (l > 1) throw std::invalid_argument("labels must be 0 or 1");
  for (double s : scores)
    if (std::isnan(s)) throw DataError("NaN score");
}

namespace {

std::vector<std::size_t> order_by_score(const std::vector<double>& scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

}  // namespace

double auroc(const ScoredSet& s) {
  s.validate();
  const std::size_t n = s.scores.size();
  const std::size_t pos = s.positives();
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw DataError("AUROC needs both classes");
  const auto idx = order_by_score(s.scores, false);
  // Sum of 1-based midranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && s.scores[idx[j]] == s.scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (s.labels[idx[k]]) rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auprc(const ScoredSet& s) {
  s.validate();
  const std::size_t n = s.scores.size();
  const std::size_t pos = s.positives();
  if (pos == 0) throw DataError("AUPRC needs at least one positive");
  const auto idx = order_by_score(s.scores, true);
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && s.scores[idx[j]] == s.scores[idx[i]]) {
      (s.labels[idx[j]] ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / static_cast<double>(pos);
    ap += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

BootstrapResult bootstrap_sd(const ScoredSet& scored, const Metric& metric, int resamples,
                             std::uint64_t seed, std::size_t max_redraws) {
  if (resamples < 100) throw std::invalid_argument("bootstrap needs at least 100 resamples");
  scored.validate();
  const std::size_t n = scored.scores.size();
  if (n == 0) throw DataError("bootstrap of an empty set");
  BootstrapResult out;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(resamples));
  ScoredSet sample;
  sample.scores.resize(n);
  sample.labels.resize(n);
  for (int r = 0; r < resamples; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (;;) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        sample.scores[i] = scored.scores[k];
        sample.labels[i] = scored.labels[k];
      }
      try {
        values.push_back(metric(sample));
        break;
      } catch (const DataError&) {
        if (++out.redraws > max_redraws) throw DataError("too many degenerate bootstrap resamples");
      }
    }
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return out;
}

HorizonLabels horizon_labels(std::span<const double> scores, std::span<const double> time,
                             std::span<const std::uint8_t> event, double horizon) {
  if (scores.size() != time.size() || time.size() != event.size())
    throw std::invalid_argument("scores, times and events differ in length");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  HorizonLabels out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool ev = event[i] != 0;
    if (!ev && time[i] < horizon) {
      ++out.excluded;
      continue;
    }
    out.kept.push_back(i);
    out.scored.scores.push_back(scores[i]);
    out.scored.labels.push_back(ev && time[i] <= horizon ? 1 : 0);
  }
  return out;
}

std::vector<double> predict_event_probabilities(const QuiltedSurvivalModel& model,
                                                std::span<const double> theta,
                                                const ModelData& data, double horizon, int threads) {
  std::vector<double> out(data.rows);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t n = begin; n < end; ++n) {
      const auto pred = model.predict(theta, data.cohort_of(n), data.features_of(n), data.placement[n]);
      out[n] = event_probability_from_log_hazards(pred.log_hazards, model.spec().breakpoints, horizon);
    }
  };
  const std::size_t workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || data.rows < 2 * workers) {
    work(0, data.rows);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (data.rows + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk, e = std::min(data.rows, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

HorizonMetrics evaluate_horizon(std::span<const double> scores, std::span<const double> time,
                                std::span<const std::uint8_t> event, double horizon, int resamples,
                                std::uint64_t seed) {
  const auto labels = horizon_labels(scores, time, event, horizon);
  HorizonMetrics m;
  m.horizon = horizon;
  m.n = labels.scored.scores.size();
  m.positives = labels.scored.positives();
  m.excluded = labels.excluded;
  m.auroc = auroc(labels.scored);
  m.auprc = auprc(labels.scored);
  if (resamples > 0) {
    m.auroc_sd = bootstrap_sd(labels.scored, auroc, resamples, seed).sd;
    m.auprc_sd = bootstrap_sd(labels.scored, auprc, resamples, seed).sd;
  }
  return m;
}

nlohmann::json metrics_to_json(std::span<const HorizonMetrics> metrics) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : metrics)
    arr.push_back({{"horizon", m.horizon},
                   {"n", m.n},
                   {"positives", m.positives},
                   {"excluded_censored", m.excluded},
                   {"auroc", m.auroc},
                   {"auprc", m.auprc},
                   {"auroc_bootstrap_sd", m.auroc_sd},
                   {"auprc_bootstrap_sd", m.auprc_sd}});
  return {{"metrics", arr}};
}

namespace {

struct Welford {
  std::size_t n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double sd() const { return n > 1 ? std::sqrt(std::max(0.0, m2 / static_cast<double>(n - 1))) : 0.0; }
};

void write_cohort_header(std::ostream& out, const LatticeSpec& lattice) {
  out << "cell";
  for (const auto& d : lattice.dims()) out << ',' << d.name;
}

void write_cohort_prefix(std::ostream& out, const LatticeSpec& lattice, std::span<const int> kappa) {
  out << lattice.cell_index(kappa);
  for (int c : kappa) out << ',' << c;
}

}  // namespace

std::vector<EffectRow> cohort_effect_summary(const QuiltedSurvivalModel& model,
                                             const VariationalPosterior& posterior, int draws,
                                             std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("draws must be positive");
  const auto& layout = model.gamma_layout();
  const auto& block = model.block("gamma");
  if (posterior.size() != model.num_parameters()) throw std::invalid_argument("posterior does not match model");
  const std::size_t ni = static_cast<std::size_t>(model.spec().breakpoints.num_intervals());
  const std::size_t cells = layout.lattice().cell_count();
  const std::size_t vs = layout.value_size();

  std::vector<Welford> ind(cells * ni * kNumThresholds), cum(cells * ni * kNumThresholds);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> raw(block.size), value(vs);
  std::vector<std::vector<std::size_t>> offsets(cells);
  for (std::size_t c = 0; c < cells; ++c) offsets[c] = layout.cell_row_offsets(layout.lattice().cell_coords(c));

  for (int s = 0; s < draws; ++s) {
    for (std::size_t i = 0; i < block.size; ++i)
      raw[i] = posterior.mean[block.offset + i] + std::exp(posterior.log_sd[block.offset + i]) * normal(rng);
    for (std::size_t c = 0; c < cells; ++c) {
      std::fill(value.begin(), value.end(), 0.0);
      for (std::size_t off : offsets[c])
        for (std::size_t v = 0; v < vs; ++v) value[v] += raw[off + v];
      for (std::size_t i = 0; i < ni; ++i) {
        double running = 0.0;
        for (int k = 0; k < kNumThresholds; ++k) {
          const double effect = -softplus(value[i * kInterventionSize + kNumThresholds + static_cast<std::size_t>(k)]);
          running += effect;
          const std::size_t idx = (c * ni + i) * kNumThresholds + static_cast<std::size_t>(k);
          ind[idx].add(effect);
          cum[idx].add(running);
        }
      }
    }
  }

  std::vector<EffectRow> rows(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    auto& r = rows[c];
    r.cohort = layout.lattice().cell_coords(c);
    r.mean.resize(ni);
    r.sd.resize(ni);
    r.cumulative_mean.resize(ni);
    r.cumulative_sd.resize(ni);
    for (std::size_t i = 0; i < ni; ++i)
      for (int k = 0; k < kNumThresholds; ++k) {
        const std::size_t idx = (c * ni + i) * kNumThresholds + static_cast<std::size_t>(k);
        const auto kk = static_cast<std::size_t>(k);
        r.mean[i][kk] = ind[idx].mean;
        r.sd[i][kk] = ind[idx].sd();
        r.cumulative_mean[i][kk] = cum[idx].mean;
        r.cumulative_sd[i][kk] = cum[idx].sd();
      }
  }
  return rows;
}

void write_effects_csv(std::ostream& out, const QuiltedSurvivalModel& model, std::span<const EffectRow> rows) {
  const auto& lattice = model.gamma_layout().lattice();
  const int ni = model.spec().breakpoints.num_intervals();
  write_cohort_header(out, lattice);
  for (int i = 0; i < ni; ++i)
    for (int k = 1; k <= kNumThresholds; ++k)
      out << ",mean_i" << i << "_k" << k << ",sd_i" << i << "_k" << k;
  out << '\n';
  for (const auto& r : rows) {
    write_cohort_prefix(out, lattice, r.cohort);
    for (std::size_t i = 0; i < r.mean.size(); ++i)
      for (std::size_t k = 0; k < kNumThresholds; ++k)
        out << ',' << io::format_double(r.mean[i][k]) << ',' << io::format_double(r.sd[i][k]);
    out << '\n';
  }
}

void write_effects_long_csv(std::ostream& out, const QuiltedSurvivalModel& model,
                            std::span<const EffectRow> rows) {
  const auto& lattice = model.gamma_layout().lattice();
  write_cohort_header(out, lattice);
  out << ",interval,k,mean,sd,cumulative_mean,cumulative_sd\n";
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.mean.size(); ++i)
      for (std::size_t k = 0; k < kNumThresholds; ++k) {
        write_cohort_prefix(out, lattice, r.cohort);
        out << ',' << i << ',' << k + 1 << ',' << io::format_double(r.mean[i][k]) << ','
            << io::format_double(r.sd[i][k]) << ',' << io::format_double(r.cumulative_mean[i][k]) << ','
            << io::format_double(r.cumulative_sd[i][k]) << '\n';
      }
}

std::vector<BaselineRow> baseline_hazard_report(const QuiltedSurvivalModel& model,
                                                const VariationalPosterior& posterior) {
  if (posterior.size() != model.num_parameters()) throw std::invalid_argument("posterior does not match model");
  const auto& layout = model.alpha_layout();
  const auto& block = model.block("alpha");
  const std::size_t ni = layout.value_size();
  std::vector<BaselineRow> rows;
  for (std::size_t c = 0; c < layout.lattice().cell_count(); ++c) {
    BaselineRow r;
    r.cohort = layout.lattice().cell_coords(c);
    r.mean.assign(ni, 0.0);
    std::vector<double> var(ni, 0.0);
    for (std::size_t off : layout.cell_row_offsets(r.cohort))
      for (std::size_t i = 0; i < ni; ++i) {
        r.mean[i] += posterior.mean[block.offset + off + i];
        var[i] += std::exp(2.0 * posterior.log_sd[block.offset + off + i]);
      }
    r.sd.resize(ni);
    for (std::size_t i = 0; i < ni; ++i) r.sd[i] = std::sqrt(var[i]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_baseline_csv(std::ostream& out, const QuiltedSurvivalModel& model, std::span<const BaselineRow> rows) {
  const auto& lattice = model.alpha_layout().lattice();
  write_cohort_header(out, lattice);
  for (std::size_t i = 0; i < model.alpha_layout().value_size(); ++i) out << ",mean_i" << i << ",sd_i" << i;
  out << '\n';
  for (const auto& r : rows) {
    write_cohort_prefix(out, lattice, r.cohort);
    for (std::size_t i = 0; i < r.mean.size(); ++i)
      out << ',' << io::format_double(r.mean[i]) << ',' << io::format_double(r.sd[i]);
    out << '\n';
  }
}

std::vector<ThresholdRow> threshold_report(const QuiltedSurvivalModel& model,
                                           const VariationalPosterior& posterior) {
  if (posterior.size() != model.num_parameters()) throw std::invalid_argument("posterior does not match model");
  const auto& layout = model.nu_layout();
  const auto& block = model.block("nu");
  std::span<const double> params(posterior.mean.data() + block.offset, block.size);
  std::vector<ThresholdRow> rows;
  std::vector<double> u(kNumThresholds);
  for (std::size_t c = 0; c < layout.lattice().cell_count(); ++c) {
    ThresholdRow r;
    r.cohort = layout.lattice().cell_coords(c);
    layout.assemble(params, r.cohort, u);
    r.thresholds = threshold_transform(u);
    r.exceedance = exceedance_probs(r.thresholds);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_threshold_csv(std::ostream& out, const QuiltedSurvivalModel& model, std::span<const ThresholdRow> rows) {
  const auto& lattice = model.nu_layout().lattice();
  write_cohort_header(out, lattice);
  for (int k = 1; k <= kNumThresholds; ++k) out << ",nu_" << k;
  for (int k = 1; k <= kNumThresholds; ++k) out << ",p_ge" << k;
  out << '\n';
  for (const auto& r : rows) {
    write_cohort_prefix(out, lattice, r.cohort);
    for (double v : r.thresholds) out << ',' << io::format_double(v);
    for (double v : r.exceedance) out << ',' << io::format_double(v);
    out << '\n';
  }
}

std::vector<CoefficientRow> top_coefficients(const QuiltedSurvivalModel& model,
                                             const VariationalPosterior& posterior, int interval,
                                             std::size_t k, std::span<const int> cohort) {
  const auto& spec = model.spec();
  if (interval < 0 || interval >= spec.breakpoints.num_intervals())
    throw std::invalid_argument("interval out of range");
  const std::size_t p = spec.num_features();
  const auto& layout = model.beta_layout();
  const auto& block = model.block("beta");
  std::vector<std::size_t> offsets;
  if (cohort.empty())
    offsets.push_back(layout.components().front().offset);
  else
    offsets = layout.cell_row_offsets(cohort);

  std::vector<CoefficientRow> rows(p);
  for (std::size_t j = 0; j < p; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t off : offsets) {
      const std::size_t at = block.offset + off + static_cast<std::size_t>(interval) * p + j;
      mean += posterior.mean[at];
      var += std::exp(2.0 * posterior.log_sd[at]);
    }
    rows[j] = {spec.feature_names[j], j, mean, std::sqrt(var)};
  }
  std::stable_sort(rows.begin(), rows.end(), [](const CoefficientRow& a, const CoefficientRow& b) {
    const double fa = std::abs(a.mean), fb = std::abs(b.mean);
    if (fa != fb) return fa > fb;
    return a.feature < b.feature;
  });
  rows.resize(std::min(k, p));
  return rows;
}

}  // namespace quiltsurv
