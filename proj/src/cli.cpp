#include "quiltsurv/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "quiltsurv/common.hpp"
#include "quiltsurv/evaluation.hpp"
#include "quiltsurv/history.hpp"
#include "quiltsurv/inference.hpp"
#include "quiltsurv/ingest.hpp"
#include "quiltsurv/io.hpp"
#include "quiltsurv/quantizer.hpp"
#include "quiltsurv/synth.hpp"

namespace quiltsurv::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A run document: shared keys at top level, one object per subcommand.
struct ConfigDoc {
  json root = json::object();

  json section(const char* name) const {
    return root.contains(name) && root.at(name).is_object() ? root.at(name) : json::object();
  }
};

ConfigDoc load_config(const std::string& path) {
  ConfigDoc doc;
  if (path.empty()) return doc;
  doc.root = io::read_json(path);
  if (!doc.root.is_object()) throw UsageError("config must be a JSON object: " + path);
  return doc;
}

// Flag value wins; otherwise the first config object holding the key; otherwise the default.
template <class T>
void merge(T& value, const CLI::Option* flag, std::initializer_list<const json*> sources, const char* key) {
  if (flag && flag->count() > 0) return;
  for (const json* src : sources)
    if (src && src->contains(key)) {
      value = src->at(key).get<T>();
      return;
    }
}

std::string horizon_label(double h) {
  if (h == std::floor(h) && std::abs(h) < 1e9) return std::to_string(static_cast<long long>(h));
  return io::format_double(h);
}

ModelSpec spec_for_features(const json& model_json, std::size_t p) {
  ModelSpec spec = model_json.is_object() && !model_json.empty() ? model_spec_from_json(model_json)
                                                                 : ModelSpec::standard({});
  if (spec.feature_names.empty())
    for (std::size_t j = 0; j < p; ++j) spec.feature_names.push_back("x" + std::to_string(j));
  if (spec.num_features() != p)
    throw DataError("model declares " + std::to_string(spec.num_features()) + " features, data has " +
                    std::to_string(p));
  spec.validate();
  return spec;
}

json model_json_from_file(const std::string& path) {
  if (path.empty()) return json::object();
  auto j = io::read_json(path);
  // Accept a bare model spec, a simulation manifest or a checkpoint manifest.
  if (j.contains("model")) return j.at("model");
  return j;
}

std::vector<double> parse_grid(const std::vector<double>& grid) {
  return grid.empty() ? default_percentile_grid() : grid;
}

RowMatrix numeric_table_matrix(const NumericTable& t) {
  RowMatrix m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t c = 0; c < t.columns.size(); ++c)
    for (std::size_t r = 0; r < t.rows(); ++r) {
      const double v = t.columns[c][r];
      if (std::isnan(v)) throw DataError("missing value in column " + t.names[c]);
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  return m;
}

// ---- simulate -------------------------------------------------------------------------

struct SimulateArgs {
  std::string config, out, manifest, model;
  std::size_t n = 5000;
  std::size_t features = 20;
  std::uint64_t seed = 1;
  double confounding = 0.0;
  double severity_sd = 0.0;
  double window = 90.0;
  double density = 0.2;
};

int cmd_simulate(const SimulateArgs& a, const std::map<std::string, const CLI::Option*>& flags) {
  auto doc = load_config(a.config);
  const json sec = doc.section("simulate");
  SimulateArgs v = a;
  merge(v.n, flags.at("n"), {&sec}, "n");
  merge(v.features, flags.at("features"), {&sec}, "features");
  merge(v.seed, flags.at("seed"), {&sec, &doc.root}, "seed");
  merge(v.confounding, flags.at("confounding"), {&sec}, "confounding");
  merge(v.severity_sd, flags.at("severity-sd"), {&sec}, "severity_sd");
  merge(v.window, flags.at("window"), {&sec}, "censor_window");
  merge(v.density, flags.at("density"), {&sec}, "feature_density");
  merge(v.out, flags.at("out"), {&sec}, "out");
  merge(v.manifest, flags.at("manifest"), {&sec}, "manifest");
  if (v.out.empty()) throw UsageError("simulate needs --out");

  json model_json = a.model.empty() ? doc.section("model") : model_json_from_file(a.model);
  GeneratorSpec gen;
  gen.model = spec_for_features(model_json, v.features);
  const QuiltedSurvivalModel model(gen.model);
  std::mt19937_64 rng(v.seed);
  const TruthConfig truth_cfg = truth_config_from_json(doc.section("truth"));
  gen.truth = random_truth(model, truth_cfg, rng);
  gen.severity = interaction_severity(gen.model.schema, v.severity_sd, rng);
  gen.confounding = v.confounding;
  gen.individual_severity_sd = sec.value("individual_severity_sd", 0.0);
  gen.feature_density = v.density;
  gen.n = v.n;
  gen.censor_window = v.window;
  gen.seed = v.seed;

  auto data = generate(gen);
  write_episodes(v.out, data.episodes);
  if (!v.manifest.empty()) {
    data.manifest["truth_config"] = truth_config_to_json(truth_cfg);
    io::write_json(v.manifest, data.manifest);
  }
  spdlog::info("simulated {} episodes ({} events)", gen.n, data.manifest["summary"]["events"].get<std::size_t>());
  return kExitOk;
}

// ---- ingest ---------------------------------------------------------------------------

struct IngestArgs {
  std::string config, claims, deaths, out, observation_end, split_cutoff, train_out, test_out, rejects;
  std::vector<std::string> cohort_axes;
};

int cmd_ingest(const IngestArgs& a, const std::map<std::string, const CLI::Option*>& flags) {
  auto doc = load_config(a.config);
  const json sec = doc.section("ingest");
  IngestArgs v = a;
  merge(v.claims, flags.at("claims"), {&sec}, "claims");
  merge(v.deaths, flags.at("deaths"), {&sec}, "deaths");
  merge(v.out, flags.at("out"), {&sec}, "out");
  merge(v.observation_end, flags.at("observation-end"), {&sec}, "observation_end");
  merge(v.split_cutoff, flags.at("split-cutoff"), {&sec}, "split_cutoff");
  merge(v.train_out, flags.at("train-out"), {&sec}, "train_out");
  merge(v.test_out, flags.at("test-out"), {&sec}, "test_out");
  merge(v.rejects, flags.at("rejects"), {&sec}, "rejects");
  merge(v.cohort_axes, flags.at("cohort-axes"), {&sec}, "cohort_axes");
  if (v.claims.empty() || v.out.empty() || v.observation_end.empty())
    throw UsageError("ingest needs --claims, --out and --observation-end");
  if (v.cohort_axes.empty())
    for (const auto& ax : CohortSchema::standard().axes()) v.cohort_axes.push_back(ax.name);

  auto load = load_claims(v.claims, v.cohort_axes);
  auto grouped = group_claims(load.claims);
  std::map<std::string, int> deaths;
  if (!v.deaths.empty()) {
    const auto table = io::read_csv(fs::path(v.deaths));
    const int pid = table.require_column("person_id"), dd = table.require_column("death_date");
    for (const auto& row : table.rows) deaths[row.at(static_cast<std::size_t>(pid))] = io::parse_iso_date(row.at(static_cast<std::size_t>(dd)));
  }
  auto unplanned = std::make_unique<bool[]>(grouped.episodes.size());
  for (std::size_t i = 0; i < grouped.episodes.size(); ++i) unplanned[i] = grouped.episodes[i].unplanned;
  const auto episodes = compute_wait(grouped.episodes, std::span<const bool>(unplanned.get(), grouped.episodes.size()),
                                     deaths, io::parse_iso_date(v.observation_end));
  write_episodes(v.out, episodes);
  if (!v.split_cutoff.empty()) {
    if (v.train_out.empty() || v.test_out.empty()) throw UsageError("--split-cutoff needs --train-out and --test-out");
    const auto split = temporal_split(episodes, io::parse_iso_date(v.split_cutoff));
    write_episodes(v.train_out, split.train);
    write_episodes(v.test_out, split.test);
  }
  if (!v.rejects.empty()) {
    std::ofstream out(v.rejects);
    out << "stage,index,reason\n";
    for (const auto& r : load.rejected) out << "load," << r.index << ",\"" << r.reason << "\"\n";
    for (const auto& r : grouped.rejected) out << "group," << r.index << ",\"" << r.reason << "\"\n";
  }
  spdlog::info("{} claims -> {} episodes ({} rejected)", load.claims.size(), episodes.size(),
               load.rejected.size() + grouped.rejected.size());
  return kExitOk;
}

// ---- quantize -------------------------------------------------------------------------

struct QuantizeArgs {
  std::string config, table, map, out, report, episodes, episodes_out;
  std::vector<double> grid;
};

int cmd_quantize_fit(const QuantizeArgs& a) {
  if (a.table.empty() || a.out.empty()) throw UsageError("quantize fit needs --table and --out");
  auto doc = load_config(a.config);
  auto grid = a.grid;
  if (grid.empty()) grid = doc.section("quantize").value("percentile_grid", std::vector<double>{});
  grid = parse_grid(grid);
  const auto table = read_numeric_csv(a.table);
  QuantizationReport report;
  const auto map = fit_quantization(table, grid, &report);
  io::write_json(a.out, quantization_map_to_json(map));
  if (!a.report.empty()) io::write_json(a.report, quantization_report_to_json(report));
  for (const auto& name : report.dropped_constant) spdlog::info("dropped constant feature {}", name);
  return kExitOk;
}

int cmd_quantize_apply(const QuantizeArgs& a) {
  if (a.table.empty() || a.map.empty() || a.out.empty())
    throw UsageError("quantize apply needs --table, --map and --out");
  const auto map = quantization_map_from_json(io::read_json(a.map));
  const auto table = read_numeric_csv(a.table);
  const auto m = transform_table(table, map);
  write_binary_csv(a.out, m);
  if (!a.episodes.empty()) {
    if (a.episodes_out.empty()) throw UsageError("--episodes needs --episodes-out");
    auto episodes = read_episodes(a.episodes);
    if (episodes.size() != m.rows)
      throw DataError("episode count " + std::to_string(episodes.size()) + " differs from table rows " +
                      std::to_string(m.rows));
    for (std::size_t r = 0; r < m.rows; ++r) {
      const auto row = m.row(r);
      episodes[r].covariates.assign(row.begin(), row.end());
    }
    write_episodes(a.episodes_out, episodes);
  }
  return kExitOk;
}

// ---- history --------------------------------------------------------------------------

struct HistoryArgs {
  std::string config, counts, encoder, out, report, episodes, episodes_out, axis = "hx";
  int latent_dim = 5;
  double sparsity = 0.1;
  int iterations = 500;
  std::uint64_t seed = 1;
};

int cmd_history_fit(const HistoryArgs& a, const std::map<std::string, const CLI::Option*>& flags) {
  auto doc = load_config(a.config);
  const json sec = doc.section("history");
  HistoryArgs v = a;
  merge(v.latent_dim, flags.at("latent-dim"), {&sec}, "latent_dim");
  merge(v.sparsity, flags.at("sparsity"), {&sec}, "sparsity");
  merge(v.iterations, flags.at("iterations"), {&sec}, "iterations");
  merge(v.seed, flags.at("seed"), {&sec, &doc.root}, "seed");
  if (v.counts.empty() || v.out.empty()) throw UsageError("history fit needs --counts and --out");
  const auto table = read_numeric_csv(v.counts);
  const auto counts = numeric_table_matrix(table);
  FactorizationConfig cfg;
  cfg.latent_dim = v.latent_dim;
  cfg.sparsity = v.sparsity;
  cfg.max_iterations = v.iterations;
  cfg.seed = v.seed;
  HistoryEncoder enc;
  enc.model = fit_factorization(counts, cfg);
  enc.medians = encoding_medians(encode_histories(counts, enc.model));
  enc.feature_names = table.names;
  io::write_json(v.out, history_encoder_to_json(enc));
  if (!v.report.empty()) io::write_json(v.report, sparsity_report(enc));
  return kExitOk;
}

int cmd_history_encode(const HistoryArgs& a) {
  if (a.counts.empty() || a.encoder.empty() || a.out.empty())
    throw UsageError("history encode needs --counts, --encoder and --out");
  const auto enc = history_encoder_from_json(io::read_json(a.encoder));
  const auto counts = numeric_table_matrix(read_numeric_csv(a.counts));
  const auto z = encode_histories(counts, enc.model);
  std::vector<int> groups(static_cast<std::size_t>(z.rows()));
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot write " + a.out);
  out << "row";
  for (Eigen::Index d = 0; d < z.cols(); ++d) out << ",z" << d;
  out << ",group\n";
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    std::vector<double> zr(z.row(r).data(), z.row(r).data() + z.cols());
    groups[static_cast<std::size_t>(r)] = assign_group(zr, enc.medians);
    out << r;
    for (double x : zr) out << ',' << io::format_double(x);
    out << ',' << groups[static_cast<std::size_t>(r)] << '\n';
  }
  if (!a.episodes.empty()) {
    if (a.episodes_out.empty()) throw UsageError("--episodes needs --episodes-out");
    auto episodes = read_episodes(a.episodes);
    if (episodes.size() != groups.size()) throw DataError("episode count differs from history rows");
    const int axis = CohortSchema::standard().axis(a.axis);
    for (std::size_t r = 0; r < episodes.size(); ++r) {
      auto& coh = episodes[r].cohort;
      if (static_cast<int>(coh.size()) <= axis) coh.resize(static_cast<std::size_t>(axis) + 1, 0);
      coh[static_cast<std::size_t>(axis)] = groups[r];
    }
    write_episodes(a.episodes_out, episodes);
  }
  return kExitOk;
}

// ---- train ----------------------------------------------------------------------------

struct TrainArgs {
  std::string config, episodes, model, out, log;
  int epochs = 100;
  std::size_t batch_size = 10000;
  double lr = 0.0015;
  std::uint64_t seed = 1;
  int threads = 1;
  bool ablate = false;
  bool warm_start = true;
};

int cmd_train(const TrainArgs& a, const std::map<std::string, const CLI::Option*>& flags) {
  auto doc = load_config(a.config);
  const json sec = doc.section("train");
  TrainConfig cfg = train_config_from_json(sec);
  TrainArgs v = a;
  v.epochs = cfg.max_epochs;
  v.batch_size = cfg.batch_size;
  v.lr = cfg.initial_lr;
  v.seed = cfg.seed;
  v.threads = cfg.threads;
  if (flags.at("epochs")->count()) v.epochs = a.epochs;
  if (flags.at("batch-size")->count()) v.batch_size = a.batch_size;
  if (flags.at("lr")->count()) v.lr = a.lr;
  if (flags.at("threads")->count()) v.threads = a.threads;
  merge(v.seed, flags.at("seed"), {&sec, &doc.root}, "seed");
  merge(v.episodes, flags.at("episodes"), {&sec}, "episodes");
  merge(v.out, flags.at("out"), {&sec}, "out");
  merge(v.log, flags.at("log"), {&sec}, "log");
  merge(v.warm_start, nullptr, {&sec}, "warm_start");
  if (v.episodes.empty() || v.out.empty()) throw UsageError("train needs --episodes and --out");
  cfg.max_epochs = v.epochs;
  cfg.patience = std::min(cfg.patience, cfg.max_epochs);
  cfg.batch_size = v.batch_size;
  cfg.initial_lr = v.lr;
  cfg.seed = v.seed;
  cfg.threads = v.threads;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const auto episodes = read_episodes(v.episodes);
  if (episodes.empty()) throw DataError("no training episodes");
  json model_json = a.model.empty() ? doc.section("model") : model_json_from_file(a.model);
  ModelSpec spec = spec_for_features(model_json, episodes.front().covariates.size());
  if (v.ablate) spec.probability_covariates = false;
  const QuiltedSurvivalModel model(spec);
  const auto data = ModelData::from_episodes(episodes, spec);

  auto q = VariationalPosterior::initialize(model.blocks(), cfg.init_mean, cfg.init_log_sd);
  if (v.warm_start) warm_start_baseline(q, model, data);
  SurvivalLogDensity density(model, data, cfg.threads);
  ElboObjective objective(density, cfg.param_samples);
  const auto result = train(objective, std::move(q), cfg);
  json extra = {{"train_config", train_config_to_json(cfg)},
                {"warm_start", v.warm_start},
                {"best_epoch", result.best_epoch},
                {"best_loss", result.best_loss},
                {"epochs_run", result.log.size()},
                {"stop_reason", result.stop_reason}};
  save_checkpoint(v.out, result.posterior, spec, extra);
  if (!v.log.empty()) write_training_log(v.log, result.log);
  spdlog::info("trained {} epochs, best epoch {} (loss {})", result.log.size(), result.best_epoch, result.best_loss);
  return kExitOk;
}

// ---- predict / evaluate / effects ----------------------------------------------------

struct PredictArgs {
  std::string config, checkpoint, episodes, out;
  std::vector<double> horizons;
};

std::vector<double> resolve_horizons(std::vector<double> h, const ConfigDoc& doc) {
  if (h.empty()) h = doc.root.value("horizons", std::vector<double>{30.0, 90.0});
  for (double x : h)
    if (!(x > 0.0)) throw UsageError("horizons must be positive");
  return h;
}

int cmd_predict(const PredictArgs& a) {
  if (a.checkpoint.empty() || a.episodes.empty() || a.out.empty())
    throw UsageError("predict needs --checkpoint, --episodes and --out");
  auto doc = load_config(a.config);
  const auto horizons = resolve_horizons(a.horizons, doc);
  const auto ck = load_checkpoint(a.checkpoint);
  const QuiltedSurvivalModel model(ck.spec);
  const auto episodes = read_episodes(a.episodes);
  const auto data = ModelData::from_episodes(episodes, ck.spec);
  const int ni = ck.spec.breakpoints.num_intervals();
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot write " + a.out);
  out << "row,person_id,time,event,placement";
  for (double h : horizons) out << ",p_" << horizon_label(h);
  for (int i = 0; i < ni; ++i) out << ",log_hazard_" << i;
  for (int k = 1; k <= kNumThresholds; ++k) out << ",p_placement_ge" << k;
  out << '\n';
  for (std::size_t n = 0; n < data.rows; ++n) {
    const auto pred = model.predict(ck.posterior.mean, data.cohort_of(n), data.features_of(n), data.placement[n]);
    out << n << ',' << episodes[n].person_id << ',' << io::format_double(data.time[n]) << ','
        << int(data.event[n]) << ',' << data.placement[n];
    for (double h : horizons) {
      const double p = event_probability_from_log_hazards(pred.log_hazards, ck.spec.breakpoints, h);
      if (!std::isfinite(p)) throw NumericalError("non-finite prediction for row " + std::to_string(n));
      out << ',' << io::format_double(p);
    }
    for (double lh : pred.log_hazards) out << ',' << io::format_double(lh);
    for (double e : pred.exceedance) out << ',' << io::format_double(e);
    out << '\n';
  }
  return kExitOk;
}

struct EvaluateArgs {
  std::string config, predictions, out;
  std::vector<double> horizons;
  int resamples = 200;
  std::uint64_t seed = 1;
};

int cmd_evaluate(const EvaluateArgs& a, const std::map<std::string, const CLI::Option*>& flags) {
  auto doc = load_config(a.config);
  const json sec = doc.section("evaluate");
  EvaluateArgs v = a;
  merge(v.resamples, flags.at("resamples"), {&sec}, "resamples");
  merge(v.seed, flags.at("seed"), {&sec, &doc.root}, "seed");
  if (v.predictions.empty() || v.out.empty()) throw UsageError("evaluate needs --predictions and --out");
  const auto horizons = resolve_horizons(v.horizons, doc);
  const auto table = io::read_csv(fs::path(v.predictions));
  const int tcol = table.require_column("time"), ecol = table.require_column("event");
  std::vector<double> time;
  std::vector<std::uint8_t> event;
  for (const auto& row : table.rows) {
    time.push_back(std::stod(row.at(static_cast<std::size_t>(tcol))));
    event.push_back(row.at(static_cast<std::size_t>(ecol)) == "1" ? 1 : 0);
  }
  std::vector<HorizonMetrics> metrics;
  for (double h : horizons) {
    const int pcol = table.require_column("p_" + horizon_label(h));
    std::vector<double> scores;
    for (const auto& row : table.rows) scores.push_back(std::stod(row.at(static_cast<std::size_t>(pcol))));
    metrics.push_back(evaluate_horizon(scores, time, event, h, v.resamples, v.seed));
  }
  io::write_json(v.out, metrics_to_json(metrics));
  for (const auto& m : metrics)
    spdlog::info("horizon {}: AUROC {:.4f} AUPRC {:.4f} (n={}, excluded={})", m.horizon, m.auroc, m.auprc, m.n, m.excluded);
  return kExitOk;
}

struct EffectsArgs {
  std::string config, checkpoint, out, long_out, baseline, coefficients, thresholds;
  int draws = 200;
  std::uint64_t seed = 1;
  std::size_t top_k = 40;
};

int cmd_effects(const EffectsArgs& a, const std::map<std::string, const CLI::Option*>& flags) {
  auto doc = load_config(a.config);
  const json sec = doc.section("effects");
  EffectsArgs v = a;
  merge(v.draws, flags.at("draws"), {&sec}, "draws");
  merge(v.seed, flags.at("seed"), {&sec, &doc.root}, "seed");
  merge(v.top_k, flags.at("top-k"), {&sec}, "top_k");
  if (v.checkpoint.empty() || v.out.empty()) throw UsageError("effects needs --checkpoint and --out");
  const auto ck = load_checkpoint(v.checkpoint);
  const QuiltedSurvivalModel model(ck.spec);
  const auto rows = cohort_effect_summary(model, ck.posterior, v.draws, v.seed);
  {
    std::ofstream out(v.out);
    if (!out) throw std::runtime_error("cannot write " + v.out);
    write_effects_csv(out, model, rows);
  }
  if (!v.long_out.empty()) {
    std::ofstream out(v.long_out);
    write_effects_long_csv(out, model, rows);
  }
  if (!v.baseline.empty()) {
    std::ofstream out(v.baseline);
    write_baseline_csv(out, model, baseline_hazard_report(model, ck.posterior));
  }
  if (!v.thresholds.empty()) {
    std::ofstream out(v.thresholds);
    write_threshold_csv(out, model, threshold_report(model, ck.posterior));
  }
  if (!v.coefficients.empty()) {
    std::ofstream out(v.coefficients);
    out << "interval,rank,feature,mean,sd\n";
    for (int i = 0; i < ck.spec.breakpoints.num_intervals(); ++i) {
      const auto top = top_coefficients(model, ck.posterior, i, v.top_k);
      for (std::size_t r = 0; r < top.size(); ++r)
        out << i << ',' << r + 1 << ',' << top[r].feature << ',' << io::format_double(top[r].mean) << ','
            << io::format_double(top[r].sd) << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quilted piecewise-exponential survival models with ordinal placement adjustment"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  std::map<std::string, const CLI::Option*> flags;

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate synthetic episodes from a random ground truth");
  simulate->add_option("--config", sim.config, "JSON run document");
  flags["out"] = simulate->add_option("--out", sim.out, "Episode JSON-lines output");
  flags["manifest"] = simulate->add_option("--manifest", sim.manifest, "Ground-truth manifest output");
  simulate->add_option("--model", sim.model, "Model spec JSON (bare or inside a manifest)");
  flags["n"] = simulate->add_option("--n", sim.n, "Number of episodes");
  flags["features"] = simulate->add_option("--features", sim.features, "Number of binary features");
  flags["seed"] = simulate->add_option("--seed", sim.seed, "Random seed");
  flags["confounding"] = simulate->add_option("--confounding", sim.confounding, "Severity multiplier");
  flags["severity-sd"] = simulate->add_option("--severity-sd", sim.severity_sd, "Cohort interaction severity sd");
  flags["window"] = simulate->add_option("--window", sim.window, "Censoring window in days");
  flags["density"] = simulate->add_option("--density", sim.density, "Feature density");
  std::map<std::string, const CLI::Option*> sim_flags = flags;

  flags.clear();
  IngestArgs ing;
  auto* ingest = app.add_subcommand("ingest", "Group claims into episodes and compute wait times");
  ingest->add_option("--config", ing.config, "JSON run document");
  flags["claims"] = ingest->add_option("--claims", ing.claims, "Claims CSV or JSON-lines");
  flags["deaths"] = ingest->add_option("--deaths", ing.deaths, "CSV with person_id,death_date");
  flags["out"] = ingest->add_option("--out", ing.out, "Episode JSON-lines output");
  flags["observation-end"] = ingest->add_option("--observation-end", ing.observation_end, "Last observed date (ISO)");
  flags["split-cutoff"] = ingest->add_option("--split-cutoff", ing.split_cutoff, "Temporal split date (ISO)");
  flags["train-out"] = ingest->add_option("--train-out", ing.train_out, "Training episodes output");
  flags["test-out"] = ingest->add_option("--test-out", ing.test_out, "Test episodes output");
  flags["rejects"] = ingest->add_option("--rejects", ing.rejects, "Rejected-record CSV output");
  flags["cohort-axes"] = ingest->add_option("--cohort-axes", ing.cohort_axes, "Cohort columns in axis order");
  std::map<std::string, const CLI::Option*> ing_flags = flags;

  QuantizeArgs qa;
  auto* quantize = app.add_subcommand("quantize", "Percentile-threshold feature quantization");
  quantize->require_subcommand(1);
  auto* qfit = quantize->add_subcommand("fit", "Fit cutoffs on a training table");
  qfit->add_option("--config", qa.config, "JSON run document");
  qfit->add_option("--table", qa.table, "Numeric CSV")->required();
  qfit->add_option("--out", qa.out, "Quantization map JSON output")->required();
  qfit->add_option("--grid", qa.grid, "Percentiles in (0,100)")->delimiter(',');
  qfit->add_option("--report", qa.report, "Fit report JSON output");
  auto* qapply = quantize->add_subcommand("apply", "Encode a table with a fitted map");
  qapply->add_option("--table", qa.table, "Numeric CSV")->required();
  qapply->add_option("--map", qa.map, "Quantization map JSON")->required();
  qapply->add_option("--out", qa.out, "Binary CSV output")->required();
  qapply->add_option("--episodes", qa.episodes, "Episodes whose covariates are replaced row by row");
  qapply->add_option("--episodes-out", qa.episodes_out, "Updated episodes output");

  flags.clear();
  HistoryArgs ha;
  auto* history = app.add_subcommand("history", "History count factorization and cohort groups");
  history->require_subcommand(1);
  auto* hfit = history->add_subcommand("fit", "Fit the sparse encoder and training medians");
  hfit->add_option("--config", ha.config, "JSON run document");
  hfit->add_option("--counts", ha.counts, "History count CSV")->required();
  hfit->add_option("--out", ha.out, "Encoder JSON output")->required();
  hfit->add_option("--report", ha.report, "Sparsity report JSON output");
  flags["latent-dim"] = hfit->add_option("--latent-dim", ha.latent_dim, "Latent dimensions");
  flags["sparsity"] = hfit->add_option("--sparsity", ha.sparsity, "L1 weight on the encoder");
  flags["iterations"] = hfit->add_option("--iterations", ha.iterations, "Maximum outer iterations");
  flags["seed"] = hfit->add_option("--seed", ha.seed, "Random seed");
  std::map<std::string, const CLI::Option*> hist_flags = flags;
  auto* henc = history->add_subcommand("encode", "Encode histories and assign groups");
  henc->add_option("--counts", ha.counts, "History count CSV")->required();
  henc->add_option("--encoder", ha.encoder, "Encoder JSON")->required();
  henc->add_option("--out", ha.out, "Encodings CSV output")->required();
  henc->add_option("--episodes", ha.episodes, "Episodes whose history axis is replaced row by row");
  henc->add_option("--episodes-out", ha.episodes_out, "Updated episodes output");
  henc->add_option("--axis", ha.axis, "Cohort axis receiving the group");

  flags.clear();
  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Fit the variational posterior");
  trainc->add_option("--config", ta.config, "JSON run document");
  flags["episodes"] = trainc->add_option("--episodes", ta.episodes, "Training episodes");
  trainc->add_option("--model", ta.model, "Model spec JSON (bare or inside a manifest)");
  flags["out"] = trainc->add_option("--out", ta.out, "Checkpoint prefix");
  flags["log"] = trainc->add_option("--log", ta.log, "Training log CSV");
  flags["epochs"] = trainc->add_option("--epochs", ta.epochs, "Maximum epochs");
  flags["batch-size"] = trainc->add_option("--batch-size", ta.batch_size, "Minibatch size");
  flags["lr"] = trainc->add_option("--lr", ta.lr, "Initial learning rate");
  flags["seed"] = trainc->add_option("--seed", ta.seed, "Random seed");
  flags["threads"] = trainc->add_option("--threads", ta.threads, "Likelihood threads");
  trainc->add_flag("--ablate", ta.ablate, "Drop the placement-probability covariates");
  std::map<std::string, const CLI::Option*> train_flags = flags;

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Event probabilities at each horizon");
  predict->add_option("--config", pa.config, "JSON run document");
  predict->add_option("--checkpoint", pa.checkpoint, "Checkpoint prefix")->required();
  predict->add_option("--episodes", pa.episodes, "Episodes to score")->required();
  predict->add_option("--out", pa.out, "Predictions CSV output")->required();
  predict->add_option("--horizons", pa.horizons, "Horizons in days")->delimiter(',');

  flags.clear();
  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "AUROC/AUPRC with bootstrap sd");
  evaluate->add_option("--config", ea.config, "JSON run document");
  evaluate->add_option("--predictions", ea.predictions, "Predictions CSV")->required();
  evaluate->add_option("--out", ea.out, "Metric JSON output")->required();
  evaluate->add_option("--horizons", ea.horizons, "Horizons in days")->delimiter(',');
  flags["resamples"] = evaluate->add_option("--resamples", ea.resamples, "Bootstrap resamples (0 disables)");
  flags["seed"] = evaluate->add_option("--seed", ea.seed, "Bootstrap seed");
  std::map<std::string, const CLI::Option*> eval_flags = flags;

  flags.clear();
  EffectsArgs fa;
  auto* effects = app.add_subcommand("effects", "Cohort placement effects and baseline reports");
  effects->add_option("--config", fa.config, "JSON run document");
  effects->add_option("--checkpoint", fa.checkpoint, "Checkpoint prefix")->required();
  effects->add_option("--out", fa.out, "Cohort effect CSV output")->required();
  effects->add_option("--long", fa.long_out, "Long-format effect CSV output");
  effects->add_option("--baseline", fa.baseline, "Baseline log-hazard CSV output");
  effects->add_option("--coefficients", fa.coefficients, "Top coefficient CSV output");
  effects->add_option("--thresholds", fa.thresholds, "Cohort placement threshold CSV output");
  flags["draws"] = effects->add_option("--draws", fa.draws, "Monte-Carlo draws");
  flags["seed"] = effects->add_option("--seed", fa.seed, "Random seed");
  flags["top-k"] = effects->add_option("--top-k", fa.top_k, "Coefficients per interval");
  std::map<std::string, const CLI::Option*> effect_flags = flags;

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));
  try {
    if (simulate->parsed()) return cmd_simulate(sim, sim_flags);
    if (ingest->parsed()) return cmd_ingest(ing, ing_flags);
    if (qfit->parsed()) return cmd_quantize_fit(qa);
    if (qapply->parsed()) return cmd_quantize_apply(qa);
    if (hfit->parsed()) return cmd_history_fit(ha, hist_flags);
    if (henc->parsed()) return cmd_history_encode(ha);
    if (trainc->parsed()) return cmd_train(ta, train_flags);
    if (predict->parsed()) return cmd_predict(pa);
    if (evaluate->parsed()) return cmd_evaluate(ea, eval_flags);
    if (effects->parsed()) return cmd_effects(fa, effect_flags);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    err << "data error: malformed JSON: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace quiltsurv::cli
