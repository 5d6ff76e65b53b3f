#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "quiltsurv/bijector.hpp"

using namespace quiltsurv;

namespace {

// log |det J| from a central-difference Jacobian.
double numeric_log_det(Bijector b, const std::vector<double>& x) {
  const std::size_t n = x.size();
  Eigen::MatrixXd jac(n, n);
  std::vector<double> yp(n), ym(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto xp = x, xm = x;
    xp[j] += 1e-6;
    xm[j] -= 1e-6;
    bijector_forward(b, xp, yp);
    bijector_forward(b, xm, ym);
    for (std::size_t i = 0; i < n; ++i) jac(i, j) = (yp[i] - ym[i]) / 2e-6;
  }
  return std::log(std::abs(jac.determinant()));
}

}  // namespace

TEST_CASE("bijector round trips and Jacobians") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (auto b : {Bijector::identity, Bijector::softplus, Bijector::negated_softplus,
                 Bijector::ordered_thresholds}) {
    CHECK(bijector_from_string(to_string(b)) == b);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(10), y(10), back(10);
      for (auto& v : x) v = normal(rng);
      bijector_forward(b, x, y);
      bijector_inverse(b, y, back);
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-8));
      if (b == Bijector::softplus)
        for (double v : y) CHECK(v > 0.0);
      if (b == Bijector::negated_softplus)
        for (double v : y) CHECK(v < 0.0);
      if (b == Bijector::ordered_thresholds)
        for (std::size_t i = 1; i < 5; ++i) {
          CHECK(y[i] < y[i - 1]);
          CHECK(y[5 + i] < y[5 + i - 1]);
        }
      CHECK(bijector_log_det_jacobian(b, x) == doctest::Approx(numeric_log_det(b, x)).epsilon(1e-6));
    }
  }
  CHECK_THROWS(bijector_from_string("cube"));
  std::vector<double> three(3), out(3);
  CHECK_THROWS(bijector_forward(Bijector::ordered_thresholds, three, out));
}
