#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "quiltsurv/common.hpp"
#include "quiltsurv/synth.hpp"
#include "toy.hpp"

using namespace quiltsurv;

namespace {

// Constant hazard lambda everywhere and no covariate or placement effects.
GeneratorSpec constant_hazard(double lambda, std::size_t n, double window) {
  GeneratorSpec gen;
  gen.model = toy::small_spec(4);
  QuiltedSurvivalModel model(gen.model);
  TruthConfig tc;
  tc.baseline_log_hazard.assign(4, std::log(lambda));
  tc.alpha_sd = 0.0;
  tc.beta_density = 0.0;
  tc.gamma_indicator = 0.0;
  std::mt19937_64 rng(1);
  gen.truth = random_truth(model, tc, rng);
  gen.n = n;
  gen.censor_window = window;
  gen.seed = 8;
  return gen;
}

double median_wait(const SyntheticData& d) {
  std::vector<double> t;
  for (const auto& e : d.episodes) t.push_back(e.event ? e.wait_days : std::numeric_limits<double>::infinity());
  std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2), t.end());
  return t[t.size() / 2];
}

}  // namespace

TEST_CASE("inverse transform waits") {
  Breakpoints b;
  std::vector<double> constant(4, 0.1);
  CHECK(inverse_transform_wait(1.0 - std::exp(-1.0), constant, b) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(inverse_transform_wait(1e-12, constant, b) < 1e-9);
  std::vector<double> step{0.05, 0.01, 0.2, 0.03};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif;
  for (int i = 0; i < 1000; ++i) {
    const double u = unif(rng);
    const double t = inverse_transform_wait(u, step, b);
    CHECK(std::abs(cumulative_hazard(t, step, b) + std::log1p(-u)) < 1e-10);
  }
  std::vector<double> vanishing{0.01, 0.0, 0.0, 0.0};
  CHECK(std::isinf(inverse_transform_wait(0.9, vanishing, b)));
}

TEST_CASE("empirical event probability under a constant hazard") {
  const auto gen = constant_hazard(0.1, 20000, 30.0);
  const auto data = generate(gen);
  double events = 0.0;
  for (const auto& e : data.episodes) {
    events += e.event;
    CHECK(e.wait_days <= 30.0);
  }
  const double p = 1.0 - std::exp(-3.0);
  const double n = static_cast<double>(data.episodes.size());
  CHECK(std::abs(events / n - p) < 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("doubling the hazard halves the median wait") {
  const std::size_t n = 20000;
  const auto slow = generate(constant_hazard(0.05, n, 1000.0));
  const auto fast = generate(constant_hazard(0.1, n, 1000.0));
  // Sample median of an exponential: sd ~ 1 / (lambda sqrt(n)).
  const double m_slow = median_wait(slow), m_fast = median_wait(fast);
  CHECK(std::abs(m_slow - std::log(2.0) / 0.05) < 4.0 / (0.05 * std::sqrt(double(n))));
  CHECK(std::abs(m_fast - std::log(2.0) / 0.1) < 4.0 / (0.1 * std::sqrt(double(n))));
  CHECK(std::abs(m_slow / m_fast - 2.0) < 0.1);
}

TEST_CASE("generation is seed-deterministic") {
  auto gen = constant_hazard(0.1, 500, 90.0);
  gen.confounding = 0.5;
  gen.individual_severity_sd = 0.3;
  const auto a = generate(gen), b = generate(gen);
  REQUIRE(a.episodes.size() == b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i)
    CHECK(episode_to_json(a.episodes[i]) == episode_to_json(b.episodes[i]));
  CHECK(a.manifest == b.manifest);
  gen.seed += 1;
  const auto c = generate(gen);
  bool differs = false;
  for (std::size_t i = 0; i < a.episodes.size(); ++i) differs |= a.episodes[i].wait_days != c.episodes[i].wait_days;
  CHECK(differs);
}

TEST_CASE("interaction severity has no main effects") {
  CohortSchema schema({{"a", 3}, {"b", 4}});
  std::mt19937_64 rng(2);
  const auto sev = interaction_severity(schema, 0.7, rng);
  REQUIRE(sev.size() == 12);
  double ss = 0.0;
  for (double v : sev) ss += v * v;
  CHECK(std::sqrt(ss / 12.0) == doctest::Approx(0.7).epsilon(1e-9));
  for (int a = 0; a < 3; ++a) {
    double row = 0.0;
    for (int b = 0; b < 4; ++b) row += sev[static_cast<std::size_t>(a * 4 + b)];
    CHECK(std::abs(row) < 1e-9);
  }
  for (int b = 0; b < 4; ++b) {
    double col = 0.0;
    for (int a = 0; a < 3; ++a) col += sev[static_cast<std::size_t>(a * 4 + b)];
    CHECK(std::abs(col) < 1e-9);
  }
}

TEST_CASE("invalid generator specs") {
  auto gen = constant_hazard(0.1, 10, 30.0);
  gen.truth.pop_back();
  CHECK_THROWS_AS(generate(gen), std::invalid_argument);
  gen = constant_hazard(0.1, 10, 30.0);
  gen.feature_density = 1.5;
  CHECK_THROWS_AS(generate(gen), std::invalid_argument);
}
