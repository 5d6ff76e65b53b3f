#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "quiltsurv/common.hpp"
#include "quiltsurv/model.hpp"
#include "toy.hpp"

using namespace quiltsurv;

namespace {

std::vector<double> random_theta(const QuiltedSurvivalModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.4);
  std::vector<double> theta(model.num_parameters());
  for (auto& v : theta) v = normal(rng);
  return theta;
}

}  // namespace

TEST_CASE("per-row likelihood equals survival plus placement terms") {
  const auto spec = toy::small_spec(4, true);
  const auto data = toy::small_data(spec, 300, 6);
  QuiltedSurvivalModel model(spec);
  const auto md = ModelData::from_episodes(data.episodes, spec);
  const auto theta = random_theta(model, 1);
  std::vector<std::size_t> rows(md.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<double> per_row(md.rows);
  model.log_likelihood(theta, md, model.plan(md, rows), 1.0, per_row, {});
  for (std::size_t n = 0; n < md.rows; ++n) {
    const auto pred = model.predict(theta, md.cohort_of(n), md.features_of(n), md.placement[n]);
    const double surv = pem_log_likelihood({md.time[n], md.event[n] != 0}, pred.log_hazards, spec.breakpoints);
    const double place = placement_log_likelihood(md.placement[n], category_probs(pred.exceedance));
    CHECK(per_row[n] == doctest::Approx(surv + place).epsilon(1e-12));
  }
}

TEST_CASE("likelihood is identical across thread counts") {
  const auto spec = toy::small_spec(3);
  const auto data = toy::small_data(spec, 5000, 2);
  QuiltedSurvivalModel model(spec);
  const auto md = ModelData::from_episodes(data.episodes, spec);
  const auto theta = random_theta(model, 2);
  std::vector<std::size_t> rows(md.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto plan = model.plan(md, rows);
  std::vector<double> r1(md.rows), r4(md.rows), g1(theta.size(), 0.0), g4(theta.size(), 0.0);
  model.log_likelihood(theta, md, plan, 1.0, r1, g1, 1);
  model.log_likelihood(theta, md, plan, 1.0, r4, g4, 4);
  CHECK(r1 == r4);
  CHECK(g1 == g4);
}

TEST_CASE("gamma indicators are non-positive and ablation drops probability terms") {
  auto spec = toy::small_spec(2);
  QuiltedSurvivalModel model(spec);
  const auto theta = random_theta(model, 3);
  const auto pem = model.pem_parameters(theta);
  for (std::size_t c = 0; c < spec.gamma_lattice.cell_count(); ++c) {
    const auto g = pem.gamma_values(spec.gamma_lattice.cell_coords(c));
    for (int i = 0; i < 4; ++i)
      for (int k = 5; k < 10; ++k) CHECK(g[static_cast<std::size_t>(i * 10 + k)] <= 0.0);
  }

  spec.probability_covariates = false;
  QuiltedSurvivalModel ablated(spec);
  std::vector<int> cohort{1, 0};
  std::vector<std::uint32_t> none;
  // Changing only the probability coefficients of gamma leaves ablated hazards unchanged.
  auto moved = theta;
  const std::size_t goff = ablated.block("gamma").offset + ablated.gamma_layout().components().front().offset;
  for (int i = 0; i < 4; ++i) moved[goff + static_cast<std::size_t>(i * 10)] += 1.0;
  const auto a = ablated.predict(theta, cohort, none, 2), b = ablated.predict(moved, cohort, none, 2);
  CHECK(a.log_hazards == b.log_hazards);
  const auto c = model.predict(theta, cohort, none, 2), d = model.predict(moved, cohort, none, 2);
  CHECK(c.log_hazards != d.log_hazards);
}

TEST_CASE("model data validation and spec serialisation") {
  const auto spec = toy::small_spec(2, true);
  const auto data = toy::small_data(spec, 10, 1);
  auto bad = data.episodes;
  bad[0].cohort = {0, 5};
  CHECK_THROWS_AS(ModelData::from_episodes(bad, spec), DataError);
  bad = data.episodes;
  bad[1].covariates.push_back(1);
  CHECK_THROWS_AS(ModelData::from_episodes(bad, spec), DataError);
  bad = data.episodes;
  bad[2].placement = 6;
  CHECK_THROWS_AS(ModelData::from_episodes(bad, spec), DataError);

  const auto back = model_spec_from_json(model_spec_to_json(spec));
  CHECK(QuiltedSurvivalModel(back).num_parameters() == QuiltedSurvivalModel(spec).num_parameters());
  CHECK(back.use_xi);

  // The standard model fits in a modest parameter budget.
  QuiltedSurvivalModel standard(ModelSpec::standard(std::vector<std::string>(20, "x")));
  CHECK(standard.has_block("beta_local"));
  CHECK(standard.num_parameters() < 500000);
}
