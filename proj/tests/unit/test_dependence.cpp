#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "warpex/dependence.hpp"
#include "warpex/error.hpp"

using namespace warpex;

TEST_CASE("semivariogram values") {
  const VariogramParams psi{0.2, 1.5};
  CHECK(semivariogram(0.0, psi) == 0.0);
  CHECK(semivariogram(0.2, {0.2, 0.37}) == doctest::Approx(1.0));
  CHECK(semivariogram(0.1, psi) == doctest::Approx(0.35355339059327373).epsilon(1e-14));
  CHECK(semivariogram(Eigen::Vector2d(0.3, 0.4), Eigen::Vector2d(0.0, 0.0), {0.5, 1.0}) == doctest::Approx(1.0));
}

TEST_CASE("variogram raw parametrisation") {
  for (double rp : {-3.0, 0.0, 2.5})
    for (double rk : {-4.0, 0.0, 3.0}) {
      const VariogramParams v = VariogramParams::from_raw(rp, rk);
      CHECK(v.phi > 0.0);
      CHECK(v.kappa > kKappaMin);
      CHECK(v.kappa < kKappaMax);
      CHECK(v.raw_phi() == doctest::Approx(rp).epsilon(1e-10));
      CHECK(v.raw_kappa() == doctest::Approx(rk).epsilon(1e-10));
      const double h = 1e-6;
      CHECK(v.dphi_draw() == doctest::Approx((VariogramParams::from_raw(rp + h, rk).phi -
                                              VariogramParams::from_raw(rp - h, rk).phi) / (2 * h)).epsilon(1e-6));
      CHECK(v.dkappa_draw() == doctest::Approx((VariogramParams::from_raw(rp, rk + h).kappa -
                                                VariogramParams::from_raw(rp, rk - h).kappa) / (2 * h)).epsilon(1e-6));
    }
  CHECK_THROWS_AS(VariogramParams({0.0, 1.0}).validate(), ValidationError);
  CHECK_THROWS_AS(VariogramParams({1.0, 2.0}).validate(), ValidationError);
  CHECK_NOTHROW(VariogramParams({0.1, 1.99}).validate());
}

TEST_CASE("Brown-Resnick matrix for two sites") {
  Coords xy(2, 2);
  xy << 0, 0, 0.3, 0.4;
  const BrMatrix br = br_matrix(xy, {0.5, 1.0});
  REQUIRE(br.dim() == 1);
  CHECK(br.sigma(0, 0) == doctest::Approx(2.0));
  CHECK(br.jitter == 0.0);
}

TEST_CASE("Brown-Resnick matrix for three collinear sites") {
  const double h = 0.15;
  Coords xy(3, 2);
  xy << 0, 0, h, 0, 2 * h, 0;
  const BrMatrix br = br_matrix(xy, {h, 1.0});
  Eigen::Matrix2d want;
  want << 2, 2, 2, 4;
  CHECK((br.sigma - want).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(br.log_det() == doctest::Approx(std::log(4.0)));
}

TEST_CASE("duplicated sites are rejected") {
  Coords xy(3, 2);
  xy << 0, 0, 0.2, 0.1, 0.2, 0.1;
  CHECK_THROWS_AS(br_matrix(xy, {0.3, 1.0}), NumericError);
}

TEST_CASE("Brown-Resnick matrix matches the double loop and is positive semidefinite") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-0.5, 0.5), K(0.1, 1.9), P(0.05, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const int D = 3 + rep;
    Coords xy(D, 2);
    for (int i = 0; i < D; ++i) xy.row(i) << U(rng), U(rng);
    const VariogramParams psi{P(rng), K(rng)};
    const BrMatrix br = br_matrix(xy, psi);
    auto g = [&](int i, int j) { return std::pow((xy.row(i) - xy.row(j)).norm() / psi.phi, psi.kappa); };
    double err = 0.0;
    for (int i = 1; i < D; ++i)
      for (int j = 1; j < D; ++j) err = std::max(err, std::abs(br.sigma(i - 1, j - 1) - (g(i, 0) + g(j, 0) - g(i, j))));
    CHECK(err < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(br.sigma);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("theoretical CEP") {
  CHECK(theoretical_cep(0.0) == 1.0);
  CHECK(theoretical_cep(2.0) == doctest::Approx(0.31731050786291415).epsilon(1e-13));
  CHECK(theoretical_cep(1e6) < 1e-100);
  double prev = 1.0 + 1e-15;
  for (int k = -60; k <= 30; ++k) {
    const double v = theoretical_cep(std::pow(10.0, k / 10.0));
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
    CHECK(v < prev);
    prev = v;
  }
  for (double g : {0.01, 0.5, 2.0, 7.0}) {
    const double h = 1e-6 * g;
    CHECK(theoretical_cep_derivative(g) ==
          doctest::Approx((theoretical_cep(g + h) - theoretical_cep(g - h)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("normal cdf accuracy") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-15));
  CHECK(normal_cdf(-5.0) == doctest::Approx(2.866515718791939e-07).epsilon(1e-13));
  CHECK(normal_pdf(0.0) == doctest::Approx(0.3989422804014327));
}
