#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "tdglm/spatial.hpp"

using namespace tdglm;

TEST_CASE("pairwise distances") {
  {
    Eigen::MatrixXd coords(1, 2);
    coords << 0.0, 0.0;
    const Eigen::MatrixXd d = pairwise_distances(coords);
    CHECK(d.rows() == 1);
    CHECK(d(0, 0) == 0.0);
  }
  {
    Eigen::MatrixXd coords(2, 2);
    coords << 0.0, 0.0, 3.0, 4.0;
    const Eigen::MatrixXd d = pairwise_distances(coords);
    CHECK(d(0, 1) == doctest::Approx(5.0));
    CHECK(d(1, 0) == doctest::Approx(5.0));
    CHECK(d(0, 0) == 0.0);
  }
  {
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd coords(10, 2);
    for (int i = 0; i < 10; ++i) {
      coords(i, 0) = u(gen);
      coords(i, 1) = u(gen);
    }
    const Eigen::MatrixXd d = pairwise_distances(coords);
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) {
        const double dx = coords(i, 0) - coords(j, 0);
        const double dy = coords(i, 1) - coords(j, 1);
        CHECK(d(i, j) == doctest::Approx(std::sqrt(dx * dx + dy * dy)));
        CHECK(d(i, j) == d(j, i));
      }
    }
  }
  {
    Eigen::MatrixXd coords(2, 2);
    coords << 0.0, 0.0, std::nan(""), 1.0;
    CHECK_THROWS(pairwise_distances(coords));
  }
}

TEST_CASE("matern correlation values") {
  Eigen::MatrixXd d(2, 2);
  d << 0.0, 1.0, 1.0, 0.0;

  CHECK(matern_correlation(d, 3.0, 0.5)(0, 0) == 1.0);
  // nu = 1/2 is the exponential kernel
  CHECK(matern_correlation(d, 3.0, 0.5)(0, 1) ==
        doctest::Approx(0.04978706836786394).epsilon(1e-12));
  // reference values from high-precision Bessel evaluation
  CHECK(matern_correlation(d, 1.0, 1.5)(0, 1) ==
        doctest::Approx(0.7357588823428846).epsilon(1e-10));
  Eigen::MatrixXd d2(2, 2);
  d2 << 0.0, 0.7, 0.7, 0.0;
  CHECK(matern_correlation(d2, 2.0, 2.5)(0, 1) ==
        doctest::Approx(0.7529427299017051).epsilon(1e-10));
  Eigen::MatrixXd d3(2, 2);
  d3 << 0.0, 2.5, 2.5, 0.0;
  CHECK(matern_correlation(d3, 1.3, 1.0)(0, 1) ==
        doctest::Approx(0.09693297183713039).epsilon(1e-10));

  CHECK_THROWS(matern_correlation(d, -1.0, 0.5));
  CHECK_THROWS(matern_correlation(d, 1.0, 0.0));
}

TEST_CASE("matern nu=1/2 equals the exponential kernel elementwise") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd coords(12, 2);
  for (int i = 0; i < 12; ++i) {
    coords(i, 0) = u(gen);
    coords(i, 1) = u(gen);
  }
  const Eigen::MatrixXd dist = pairwise_distances(coords);
  for (double phi_s : {0.5, 3.0, 10.0}) {
    const Eigen::MatrixXd r = matern_correlation(dist, phi_s, 0.5);
    for (int i = 0; i < 12; ++i) {
      for (int j = 0; j < 12; ++j) {
        CHECK(std::abs(r(i, j) - std::exp(-phi_s * dist(i, j))) < 1e-12);
      }
    }
  }
}

TEST_CASE("matern correlation is decreasing in distance and decay") {
  for (double nu : {0.5, 1.5, 2.7}) {
    double prev = 1.0;
    for (double dv : {0.1, 0.4, 0.9, 1.6, 2.8}) {
      Eigen::MatrixXd d(2, 2);
      d << 0.0, dv, dv, 0.0;
      const double r = matern_correlation(d, 2.0, nu)(0, 1);
      CHECK(r < prev);
      CHECK(r > 0.0);
      CHECK(r <= 1.0);
      prev = r;
    }
    prev = 1.0;
    for (double phi_s : {0.2, 0.9, 2.5, 7.0}) {
      Eigen::MatrixXd d(2, 2);
      d << 0.0, 0.8, 0.8, 0.0;
      const double r = matern_correlation(d, phi_s, nu)(0, 1);
      CHECK(r < prev);
      prev = r;
    }
  }
}

TEST_CASE("cholesky factorization") {
  {
    const CholState c = chol_factor(Eigen::MatrixXd::Identity(3, 3));
    CHECK(c.log_det() == doctest::Approx(0.0));
    CHECK((c.lower() - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-14);
    CHECK(c.jitter() == 0.0);
  }
  {
    Eigen::MatrixXd m(2, 2);
    m << 4.0, 0.0, 0.0, 9.0;
    CHECK(chol_factor(m).log_det() == doctest::Approx(std::log(36.0)));
  }
  {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd a(20, 20);
    for (int i = 0; i < 20; ++i) {
      for (int j = 0; j < 20; ++j) a(i, j) = z(gen);
    }
    const Eigen::MatrixXd spd =
        a.transpose() * a + Eigen::MatrixXd::Identity(20, 20);
    const CholState c = chol_factor(spd);
    const Eigen::MatrixXd rebuilt = c.lower() * c.lower().transpose();
    CHECK((rebuilt - spd).norm() / spd.norm() < 1e-10);

    // solves match a dense inverse
    Eigen::VectorXd v(20);
    for (int i = 0; i < 20; ++i) v[i] = z(gen);
    const Eigen::VectorXd direct = spd.inverse() * v;
    CHECK((c.solve(v) - direct).norm() / direct.norm() < 1e-8);
    CHECK(c.quad_form(v) == doctest::Approx(v.dot(direct)).epsilon(1e-8));
    CHECK((c.inverse() - spd.inverse()).norm() / spd.inverse().norm() < 1e-8);
  }
  {
    // indefinite input exhausts the jitter ladder
    Eigen::MatrixXd m(2, 2);
    m << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(chol_factor(m), NotPositiveDefiniteError);
  }
  {
    // near-singular correlation rescued by jitter
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(4, 4, 1.0);
    m.diagonal().array() += 1e-9;
    const CholState c = chol_factor(m, 1e-10);
    CHECK(c.jitter() >= 0.0);
    CHECK(std::isfinite(c.log_det()));
  }
}

TEST_CASE("spatial domain wires coordinates to distances") {
  Eigen::MatrixXd coords(3, 2);
  coords << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;
  const SpatialDomain dom(coords);
  CHECK(dom.size() == 3);
  CHECK(dom.dist(0, 1) == doctest::Approx(1.0));
  CHECK(dom.dist(1, 2) == doctest::Approx(std::sqrt(2.0)));
}
