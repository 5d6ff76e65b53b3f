#include <cmath>
#include <random>
#include <sstream>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "doctest.h"
#include "quiltsurv/common.hpp"
#include "quiltsurv/quilt.hpp"

using namespace quiltsurv;

namespace {

LatticeSpec two_by_two(int order) { return LatticeSpec({{"row", 2}, {"col", 2}}, order); }

}  // namespace

TEST_CASE("lattice cell index round trip and bounds") {
  LatticeSpec lat({{"a", 3}, {"b", 4}, {"c", 2}}, 2);
  CHECK(lat.cell_count() == 24);
  for (std::size_t c = 0; c < lat.cell_count(); ++c) CHECK(lat.cell_index(lat.cell_coords(c)) == c);
  std::vector<int> bad{3, 0, 0};
  CHECK_THROWS_AS(lat.cell_index(bad), std::out_of_range);
  std::vector<int> neg{0, -1, 0};
  CHECK_THROWS_AS(lat.cell_index(neg), std::out_of_range);
  CHECK_THROWS(LatticeSpec({{"a", 2}}, 2));
  CHECK_THROWS(LatticeSpec({{"a", 0}}, 0));
}

TEST_CASE("component subsets and footprint") {
  QuiltLayout layout(LatticeSpec({{"a", 3}, {"b", 4}, {"c", 2}}, 2), 5);
  // {} + {a},{b},{c} + {a,b},{a,c},{b,c}
  CHECK(layout.components().size() == 7);
  const std::size_t rows = 1 + (3 + 4 + 2) + (12 + 6 + 8);
  CHECK(layout.size() == rows * 5);
  CHECK(layout.components().front().order() == 0);
  // Footprint is below the dense lattice when max_order < dims.
  CHECK(layout.size() < 5 * (1 + 3 + 4 + 2 + 12 + 6 + 8 + 24));
}

TEST_CASE("assemble on a 2x2 additive lattice") {
  LatticeDecomposition d(two_by_two(1), 1);
  // Components: global, row, col.
  d.component(0)[0] = 1.0;
  d.component(1)[0] = 0.5;
  d.component(1)[1] = -0.5;
  d.component(2)[0] = 0.2;
  d.component(2)[1] = -0.2;
  std::vector<int> k00{0, 0}, k11{1, 1}, k01{0, 1};
  CHECK(d.assemble(k00)[0] == doctest::Approx(1.7));
  CHECK(d.assemble(k11)[0] == doctest::Approx(0.3));
  CHECK(d.assemble(k01)[0] == doctest::Approx(1.3));
  std::vector<int> out{2, 0};
  CHECK_THROWS(d.assemble(out));
}

TEST_CASE("assemble edge cases") {
  LatticeDecomposition zero(LatticeSpec({{"a", 3}, {"b", 2}}, 2), 3);
  for (std::size_t c = 0; c < zero.lattice().cell_count(); ++c)
    for (double v : zero.assemble(zero.lattice().cell_coords(c))) CHECK(v == 0.0);

  LatticeDecomposition global(LatticeSpec({{"a", 3}, {"b", 2}}, 0), 2);
  global.component(0)[0] = 0.7;
  global.component(0)[1] = -1.1;
  for (std::size_t c = 0; c < global.lattice().cell_count(); ++c) {
    const auto v = global.assemble(global.lattice().cell_coords(c));
    CHECK(v[0] == 0.7);
    CHECK(v[1] == -1.1);
  }
}

TEST_CASE("assemble matches a brute-force subset sum and is linear") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  LatticeSpec lat({{"a", 3}, {"b", 2}, {"c", 4}}, 2);
  LatticeDecomposition d1(lat, 2), d2(lat, 2), comb(lat, 2);
  for (auto& v : d1.values()) v = normal(rng);
  for (auto& v : d2.values()) v = normal(rng);
  for (std::size_t i = 0; i < comb.values().size(); ++i) comb.values()[i] = 2.0 * d1.values()[i] - 3.0 * d2.values()[i];
  for (std::size_t c = 0; c < lat.cell_count(); ++c) {
    const auto kappa = lat.cell_coords(c);
    // Oracle: walk every component and index it directly from its own dims.
    std::vector<double> expect(2, 0.0);
    for (std::size_t ci = 0; ci < d1.layout().components().size(); ++ci) {
      const auto& comp = d1.layout().components()[ci];
      std::size_t row = 0;
      for (std::size_t k = 0; k < comp.dims.size(); ++k) row = row * lat.dims()[comp.dims[k]].size + kappa[comp.dims[k]];
      for (int v = 0; v < 2; ++v) expect[v] += d1.component(ci)[row * 2 + v];
    }
    const auto got = d1.assemble(kappa);
    CHECK(got[0] == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(got[1] == doctest::Approx(expect[1]).epsilon(1e-12));
    const auto lin = comb.assemble(kappa);
    const auto g2 = d2.assemble(kappa);
    CHECK(lin[0] == doctest::Approx(2.0 * got[0] - 3.0 * g2[0]).epsilon(1e-12));
  }
}

TEST_CASE("scatter is the adjoint of assemble") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  QuiltLayout layout(LatticeSpec({{"a", 3}, {"b", 4}}, 2), 3);
  std::vector<double> x(layout.size()), y(3), out(3), g(layout.size(), 0.0);
  for (auto& v : x) v = normal(rng);
  for (auto& v : y) v = normal(rng);
  std::vector<int> kappa{2, 1};
  layout.assemble(x, kappa, out);
  layout.scatter(g, kappa, y);
  double lhs = 0.0, rhs = 0.0;
  for (int i = 0; i < 3; ++i) lhs += out[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * g[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("order-decay Gaussian prior") {
  LatticeDecomposition single(LatticeSpec({}, 0), 1);
  CHECK(prior_log_density(single, 5.0, 0.1) == doctest::Approx(-std::log(5.0) - 0.5 * kLogTwoPi));
  CHECK(prior_log_density(single, 5.0, 0.1) == doctest::Approx(-2.52837).epsilon(1e-5));
  CHECK(order_scale(1, 5.0, 0.1) == doctest::Approx(0.5));
  CHECK(order_scale(2, 5.0, 0.1) == doctest::Approx(0.05));

  // Order-1 component at scale 0.5; independence across components.
  LatticeDecomposition d(LatticeSpec({{"a", 2}}, 1), 1);
  d.component(0)[0] = 0.3;
  d.component(1)[0] = -0.2;
  d.component(1)[1] = 0.1;
  const double expect = normal_log_density(0.3, 0, 5) + normal_log_density(-0.2, 0, 0.5) + normal_log_density(0.1, 0, 0.5);
  CHECK(prior_log_density(d, 5.0, 0.1) == doctest::Approx(expect).epsilon(1e-12));

  // Gradient of the flat form by central differences.
  std::vector<double> params(d.values().begin(), d.values().end()), grad(params.size(), 0.0);
  prior_log_density(d.layout(), params, 5.0, 0.1, grad);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params, m = params;
    p[i] += 1e-6;
    m[i] -= 1e-6;
    const double fd = (prior_log_density(d.layout(), p, 5.0, 0.1) - prior_log_density(d.layout(), m, 5.0, 0.1)) / 2e-6;
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-6));
  }
  CHECK_THROWS(prior_log_density(d, 0.0, 0.1));
  CHECK_THROWS(prior_log_density(d, 5.0, 1.5));
}

TEST_CASE("implied correlation examples") {
  std::vector<double> var{1.0, 1.0}, rho{0.0, 0.0};
  CHECK(implied_correlation(var, 0, rho) == doctest::Approx(0.5));
  CHECK(implied_correlation(var, 1, rho) == doctest::Approx(1.0));
  std::vector<double> var0{0.0, 2.0, 1.0}, rho0{0.0, 0.0, 0.0};
  CHECK(implied_correlation(var0, -1, rho0) == doctest::Approx(0.0));
  std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS(implied_correlation(zero, 0, rho));
}

TEST_CASE("implied correlation agrees with sampled component tensors") {
  // Two cells of a 2x2 order-1 lattice sharing only the global term: sigma0 = sigma1 = 1
  // per component gives order variances 1 and 2 (two order-1 subsets), none shared.
  const auto lat = two_by_two(1);
  std::vector<int> k1{0, 0}, k2{1, 1};
  std::vector<double> scales{1.0, std::sqrt(0.5)};
  const auto cs = correlation_structure(lat, k1, k2, scales);
  const double rho = implied_correlation(cs.order_variances, cs.shared_order, cs.within_order_corr);
  CHECK(rho == doctest::Approx(0.5));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  LatticeDecomposition d(lat, 1);
  const auto orders = d.layout().scalar_orders();
  const int draws = 100000;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int s = 0; s < draws; ++s) {
    for (std::size_t i = 0; i < d.values().size(); ++i) d.values()[i] = scales[orders[i]] * normal(rng);
    const double x = d.assemble(k1)[0], y = d.assemble(k2)[0];
    sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
  }
  const double n = draws;
  const double cov = sxy / n - sx * sy / (n * n);
  const double mc = cov / std::sqrt((sxx / n - sx * sx / (n * n)) * (syy / n - sy * sy / (n * n)));
  CHECK(std::abs(mc - rho) < 0.01);
}

TEST_CASE("horseshoe density") {
  HorseshoeState unit{{0.0}, {1.0}, 1.0};
  CHECK(horseshoe_log_density(unit) == doctest::Approx(-3.208398).epsilon(1e-6));
  CHECK(horseshoe_log_density(unit) == doctest::Approx(-0.5 * kLogTwoPi - 2.0 * std::log(kPi)).epsilon(1e-12));
  HorseshoeState a{{0.7, -1.3}, {0.4, 2.0}, 0.3}, b{{-0.7, 1.3}, {0.4, 2.0}, 0.3};
  CHECK(horseshoe_log_density(a) == doctest::Approx(horseshoe_log_density(b)));
  HorseshoeState bad{{0.0}, {0.0}, 1.0};
  CHECK_THROWS(horseshoe_log_density(bad));
  HorseshoeState bad_tau{{0.0}, {1.0}, -1.0};
  CHECK_THROWS(horseshoe_log_density(bad_tau));

  // Marginal over lambda (tau = 1) grows without bound as beta -> 0.
  boost::math::quadrature::exp_sinh<double> integrator;
  auto marginal = [&](double beta) {
    return integrator.integrate([&](double lam) {
      return std::exp(normal_log_density(beta, 0.0, lam) + half_cauchy_log_density(lam));
    });
  };
  const double m1 = marginal(0.1), m2 = marginal(0.01), m3 = marginal(0.001);
  CHECK(m2 > m1 + 0.5);
  CHECK(m3 > m2 + 0.5);
  // Known asymptote: p(beta) ~ log(1/beta^2) / sqrt(2 pi^3) up to O(1).
  CHECK(std::abs((m3 - m2) - std::log(100.0) / std::sqrt(2.0 * kPi * kPi * kPi)) < 0.05);
}

TEST_CASE("decomposition save/load and cell dump") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  LatticeDecomposition d(LatticeSpec({{"a", 3}, {"b", 2}}, 2), 4);
  for (auto& v : d.values()) v = normal(rng);
  const auto prefix = std::filesystem::temp_directory_path() / "quilt_roundtrip";
  d.save(prefix);
  const auto back = LatticeDecomposition::load(prefix);
  CHECK(back.lattice() == d.lattice());
  REQUIRE(back.values().size() == d.values().size());
  for (std::size_t i = 0; i < d.values().size(); ++i) CHECK(back.values()[i] == d.values()[i]);
  std::ostringstream out;
  d.dump_cells(out);
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 6);
}
