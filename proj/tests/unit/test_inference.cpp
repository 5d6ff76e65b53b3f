#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "quiltsurv/common.hpp"
#include "quiltsurv/inference.hpp"
#include "toy.hpp"

using namespace quiltsurv;

namespace {

std::vector<std::vector<double>> fixed_noise(std::size_t n, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> eps(static_cast<std::size_t>(samples), std::vector<double>(n));
  for (auto& e : eps)
    for (auto& v : e) v = normal(rng);
  return eps;
}

// Returns loss 1 in epoch 1 and 2 afterwards.
class RiggedObjective : public Objective {
 public:
  explicit RiggedObjective(std::size_t rows) : rows_(rows) {}
  std::size_t num_rows() const override { return rows_; }
  double loss(const VariationalPosterior&, std::span<const std::size_t>, std::mt19937_64&,
              std::span<double> gm, std::span<double> gs) override {
    std::fill(gm.begin(), gm.end(), 0.1);
    std::fill(gs.begin(), gs.end(), 0.0);
    return calls_++ < static_cast<int>(rows_) ? 1.0 : 2.0;
  }

 private:
  std::size_t rows_;
  int calls_ = 0;
};

class NanObjective : public Objective {
 public:
  std::size_t num_rows() const override { return 4; }
  double loss(const VariationalPosterior&, std::span<const std::size_t>, std::mt19937_64&,
              std::span<double> gm, std::span<double> gs) override {
    std::fill(gm.begin(), gm.end(), std::nan(""));
    std::fill(gs.begin(), gs.end(), 0.0);
    return 1.0;
  }
};

}  // namespace

TEST_CASE("clamping contract") {
  std::vector<double> finite{-1.0, -2.0};
  CHECK(clamp_divergent(finite) == finite);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> mixed{-50.0, -inf};
  CHECK(clamp_divergent(mixed) == std::vector<double>{-50.0, -150.0});
  std::vector<double> none{-inf, std::nan("")};
  CHECK(clamp_divergent(none) == std::vector<double>{-1e6, -1e6});
}

TEST_CASE("sampling from the variational posterior") {
  std::vector<ParameterBlock> blocks{{"a", 0, 3, Bijector::identity, Bijector::identity},
                                     {"s", 3, 2, Bijector::softplus, Bijector::identity}};
  auto q = VariationalPosterior::initialize(blocks, 0.3, -60.0);
  std::mt19937_64 rng(1);
  for (const auto& d : sample_parameters(q, 5, rng)) {
    CHECK(d[0] == 0.3);
    CHECK(d[3] == doctest::Approx(softplus(0.3)).epsilon(1e-14));
  }
  q = VariationalPosterior::initialize(blocks, -3.0, std::log(2.0));
  const int s = 100000;
  const auto draws = sample_parameters(q, s, rng);
  double mean = 0.0;
  for (const auto& d : draws) {
    mean += d[1];
    CHECK(d[4] > 0.0);
  }
  mean /= s;
  CHECK(std::abs(mean + 3.0) < 3.0 * 2.0 / std::sqrt(static_cast<double>(s)));
  CHECK(q.entropy() == doctest::Approx(5 * (std::log(2.0) + 0.5 * (1.0 + kLogTwoPi))));
  CHECK(q.block_entropy("s") == doctest::Approx(2 * (std::log(2.0) + 0.5 * (1.0 + kLogTwoPi))));
}

TEST_CASE("model log-likelihood and prior gradients match finite differences") {
  const auto spec = toy::small_spec(3, true);
  const auto data = toy::small_data(spec, 200, 4);
  QuiltedSurvivalModel model(spec);
  const auto md = ModelData::from_episodes(data.episodes, spec);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 0.3);
  std::vector<double> theta(model.num_parameters());
  for (auto& v : theta) v = normal(rng);
  std::vector<std::size_t> rows(md.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto plan = model.plan(md, rows);
  std::vector<double> per_row(rows.size()), grad(theta.size(), 0.0);
  model.log_likelihood(theta, md, plan, 1.0, per_row, grad);
  model.log_prior(theta, grad);
  auto joint = [&](const std::vector<double>& t) {
    std::vector<double> pr(rows.size());
    model.log_likelihood(t, md, plan, 1.0, pr, {});
    return std::accumulate(pr.begin(), pr.end(), 0.0) + model.log_prior(t);
  };
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto p = theta, m = theta;
    p[i] += 1e-5;
    m[i] -= 1e-5;
    const double fd = (joint(p) - joint(m)) / 2e-5;
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("minibatch ELBO gradient matches finite differences") {
  const auto spec = toy::small_spec(3);
  const auto data = toy::small_data(spec, 120, 9);
  QuiltedSurvivalModel model(spec);
  const auto md = ModelData::from_episodes(data.episodes, spec);
  SurvivalLogDensity density(model, md);
  auto q = VariationalPosterior::initialize(model.blocks(), 0.0, std::log(0.1));
  warm_start_baseline(q, model, md);
  const auto eps = fixed_noise(q.size(), 2, 77);
  std::vector<std::size_t> batch{0, 5, 7, 11, 40, 41, 90, 100};
  std::vector<double> gm(q.size()), gs(q.size());
  minibatch_elbo(density, q, batch, eps, gm, gs);
  auto elbo = [&](const VariationalPosterior& v) { return minibatch_elbo(density, v, batch, eps).elbo; };
  for (std::size_t i = 0; i < q.size(); i += 3) {
    auto p = q, m = q;
    p.mean[i] += 1e-5;
    m.mean[i] -= 1e-5;
    CHECK(gm[i] == doctest::Approx((elbo(p) - elbo(m)) / 2e-5).epsilon(1e-4).scale(1.0));
    p = q;
    m = q;
    p.log_sd[i] += 1e-5;
    m.log_sd[i] -= 1e-5;
    CHECK(gs[i] == doctest::Approx((elbo(p) - elbo(m)) / 2e-5).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("ELBO likelihood scaling") {
  std::vector<double> y{0.5, 1.0, -0.2, 0.8};
  toy::GaussianToy small(y, 1.0, 0.0, 2.0);
  auto doubled = y;
  doubled.insert(doubled.end(), y.begin(), y.end());
  toy::GaussianToy big(doubled, 1.0, 0.0, 2.0);
  const auto q = small.initial(0.4, std::log(0.3));
  const auto eps = fixed_noise(1, 4, 3);
  std::vector<std::size_t> all4{0, 1, 2, 3}, all8{0, 1, 2, 3, 4, 5, 6, 7};
  const auto e4 = minibatch_elbo(small, q, all4, eps);
  const auto e8 = minibatch_elbo(big, q, all8, eps);
  CHECK(e8.expected_log_likelihood == doctest::Approx(2.0 * e4.expected_log_likelihood));
  // A half batch of the doubled data is scaled by 2 and equals the full sum here.
  const auto half = minibatch_elbo(big, q, all4, eps);
  CHECK(half.expected_log_likelihood == doctest::Approx(e8.expected_log_likelihood));
}

TEST_CASE("conjugate Gaussian posterior is recovered") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal(1.5, 1.0);
  std::vector<double> y(200);
  for (auto& v : y) v = normal(rng);
  toy::GaussianToy toy_model(y, 1.0, 0.0, 3.0);
  ElboObjective objective(toy_model, 256);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.initial_lr = 0.02;
  cfg.max_epochs = 300;
  cfg.patience = 20;
  const auto result = train(objective, toy_model.initial(cfg.init_mean, cfg.init_log_sd), cfg);
  CHECK(std::abs(result.posterior.mean[0] - toy_model.posterior_mean()) < 1e-2);
  CHECK(std::abs(std::exp(result.posterior.log_sd[0]) - toy_model.posterior_sd()) < 1e-2);
}

TEST_CASE("schedule with a non-improving loss") {
  RiggedObjective objective(4);
  TrainConfig cfg;
  cfg.batch_size = 1;
  const auto result = train(objective, VariationalPosterior::initialize({{"a", 0, 2}}, 0.0, 0.0), cfg);
  CHECK(result.log.size() == 6);
  CHECK(result.stop_reason == "patience");
  CHECK(result.best_epoch == 1);
  for (const auto& e : result.log)
    CHECK(e.lr == doctest::Approx(0.0015 * std::pow(0.9, e.epoch - 1)).epsilon(1e-12));
  CHECK(result.log[3].lr == doctest::Approx(0.00109350).epsilon(1e-8));
  // Best-epoch snapshot: one step of size lr in the negative gradient direction per row.
  CHECK(result.posterior.mean[0] < 0.0);
}

TEST_CASE("non-finite gradients are skipped and counted as stagnation") {
  NanObjective objective;
  TrainConfig cfg;
  cfg.batch_size = 2;
  const auto init = VariationalPosterior::initialize({{"a", 0, 1}}, 0.25, 0.0);
  const auto result = train(objective, init, cfg);
  CHECK(result.log.size() == 5);
  for (const auto& e : result.log) {
    CHECK(e.skipped_steps == 2);
    CHECK_FALSE(e.improved);
  }
  CHECK(result.posterior.mean[0] == 0.25);
}

TEST_CASE("training is deterministic given the seed") {
  const auto spec = toy::small_spec(2);
  const auto data = toy::small_data(spec, 300, 5);
  QuiltedSurvivalModel model(spec);
  const auto md = ModelData::from_episodes(data.episodes, spec);
  SurvivalLogDensity density(model, md);
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.max_epochs = 3;
  cfg.patience = 3;
  auto run = [&] {
    ElboObjective obj(density, 2);
    return train(obj, VariationalPosterior::initialize(model.blocks(), 0.0, std::log(0.01)), cfg);
  };
  const auto a = run(), b = run();
  CHECK(a.posterior.mean == b.posterior.mean);
  CHECK(a.posterior.log_sd == b.posterior.log_sd);
}

TEST_CASE("config validation and checkpoints") {
  TrainConfig bad;
  bad.patience = 200;
  CHECK_THROWS(bad.validate());
  const auto back = train_config_from_json(train_config_to_json(TrainConfig{}));
  CHECK(back.initial_lr == 0.0015);
  CHECK(back.batch_size == 10000);

  const auto spec = toy::small_spec(2, true);
  QuiltedSurvivalModel model(spec);
  auto q = VariationalPosterior::initialize(model.blocks(), 0.1, -2.0);
  q.mean[3] = 7.5;
  const auto prefix = std::filesystem::temp_directory_path() / "ckpt_unit";
  save_checkpoint(prefix, q, spec);
  const auto ck = load_checkpoint(prefix);
  CHECK(ck.posterior.mean == q.mean);
  CHECK(ck.posterior.log_sd == q.log_sd);
  CHECK(ck.posterior.blocks.size() == q.blocks.size());
  CHECK(QuiltedSurvivalModel(ck.spec).num_parameters() == model.num_parameters());
}
