#include <doctest.h>

#include <random>

#include "warpex/empirics.hpp"
#include "warpex/error.hpp"

using namespace warpex;

namespace {
Eigen::MatrixXd pareto_matrix(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (int t = 0; t < n; ++t)
    for (int j = 0; j < d; ++j) x(t, j) = 1.0 / (1.0 - U(rng));
  return x;
}

// Direct per-pair count over events, written independently of the library's matrix product.
Eigen::MatrixXd naive_cep(const Eigen::MatrixXd& x, const RiskSpec& risk, double u, double up, BoolMatrix& valid) {
  const Eigen::Index d = x.cols();
  Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(d, d);
  valid = BoolMatrix::Constant(d, d, false);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      int joint = 0, ni = 0, nj = 0;
      for (Eigen::Index t = 0; t < x.rows(); ++t) {
        if (evaluate_exact(risk, x.row(t).transpose()) < u) continue;
        const bool a = x(t, i) >= up, b = x(t, j) >= up;
        joint += a && b;
        ni += a;
        nj += b;
      }
      if (ni + nj == 0) continue;
      valid(i, j) = true;
      pi(i, j) = joint / (0.5 * (ni + nj));
    }
  return pi;
}
}  // namespace

TEST_CASE("type 7 quantile") {
  CHECK(quantile_type7({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile_type7({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(quantile_type7({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(quantile_type7({10, 20}, 0.25) == 12.5);
  CHECK_THROWS_AS(quantile_type7({}, 0.5), ValidationError);
  CHECK_THROWS_AS(quantile_type7({1.0}, 1.5), ValidationError);
}

TEST_CASE("hand filter of four events") {
  Eigen::MatrixXd x(4, 1);
  x << 1, 2, 3, 4;
  const double u = quantile_type7({1, 2, 3, 4}, 0.5);
  const ExceedanceSet ex = select_exceedances(x, RiskSpec::sum(), u, 1.0);
  REQUIRE(ex.count() == 2);
  CHECK(ex.z(0, 0) == doctest::Approx(3.0 / 2.5));
  CHECK(ex.z(1, 0) == doctest::Approx(4.0 / 2.5));
  CHECK(ex.rows == std::vector<Eigen::Index>{2, 3});
}

TEST_CASE("extract exceedances at the 95% quantile keeps 5% of rows") {
  const Eigen::MatrixXd x = pareto_matrix(5000, 6, 1);
  const ExceedanceSet ex = extract_exceedances(x, RiskSpec::site(2), 0.95, 0.9);
  CHECK(ex.count() == 250);
  for (Eigen::Index t = 0; t < ex.count(); ++t) CHECK(ex.z(t, 2) >= 1.0);
  CHECK(ex.z.minCoeff() > 0.0);
}

TEST_CASE("zero risk quantile keeps every row") {
  const Eigen::MatrixXd x = pareto_matrix(50, 3, 2);
  const ExceedanceSet ex = extract_exceedances(x, RiskSpec::sum(), 0.0, 0.5);
  CHECK(ex.count() == 50);
  CHECK(ex.u == doctest::Approx(x.rowwise().sum().minCoeff()));
}

TEST_CASE("extract exceedances preconditions") {
  CHECK_THROWS_AS(extract_exceedances(pareto_matrix(19, 3, 3), RiskSpec::sum(), 0.5, 0.5), ValidationError);
  CHECK_THROWS_AS(extract_exceedances(pareto_matrix(100, 3, 3), RiskSpec::sum(), 0.95, 0.5), ValidationError);
  Eigen::MatrixXd bad = pareto_matrix(100, 3, 3);
  bad(4, 1) = -1.0;
  CHECK_THROWS_AS(extract_exceedances(bad, RiskSpec::sum(), 0.5, 0.5), ValidationError);
}

TEST_CASE("exceedances are invariant under joint scaling") {
  const Eigen::MatrixXd x = pareto_matrix(400, 4, 4);
  const ExceedanceSet a = select_exceedances(x, RiskSpec::max(), 6.0, 3.0);
  const ExceedanceSet b = select_exceedances(Eigen::MatrixXd(3.5 * x), RiskSpec::max(), 6.0 * 3.5, 3.0 * 3.5);
  REQUIRE(a.count() == b.count());
  CHECK(a.rows == b.rows);
  CHECK((a.z - b.z).cwiseAbs().maxCoeff() < 1e-14 * a.z.cwiseAbs().maxCoeff());
}

TEST_CASE("resampling picks rows by index") {
  const ExceedanceSet ex = select_exceedances(pareto_matrix(200, 3, 5), RiskSpec::sum(), 8.0, 2.0);
  const ExceedanceSet re = ex.resample({1, 1, 0});
  REQUIRE(re.count() == 3);
  CHECK(re.z.row(0) == ex.z.row(1));
  CHECK(re.z.row(2) == ex.z.row(0));
  CHECK(re.u == ex.u);
}

TEST_CASE("three-event toy CEP") {
  BoolMatrix ind(3, 2);
  ind << true, true, true, false, false, true;
  const CepMatrix c = cep_from_indicators(ind);
  CHECK(c.pi(0, 1) == 0.5);
  CHECK(c.pi(1, 0) == 0.5);
  CHECK(c.pi(0, 0) == 1.0);
  CHECK(c.n_joint(0, 1) == 1);
  CHECK(c.valid_pairs() == 1);
}

TEST_CASE("duplicated site gives CEP one") {
  Eigen::MatrixXd x = pareto_matrix(300, 3, 7);
  x.col(2) = x.col(0);
  const CepMatrix c = empirical_cep(x, RiskSpec::sum(), 5.0, 3.0);
  CHECK(c.pi(0, 2) == 1.0);
}

TEST_CASE("independent columns give CEP near the marginal exceedance rate") {
  const Eigen::MatrixXd x = pareto_matrix(40000, 2, 8);
  const CepMatrix c = empirical_cep(x, RiskSpec::site(0), 1.0, 5.0);
  CHECK(c.pi(0, 1) == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("empirical CEP equals the naive count exactly") {
  for (int rep = 0; rep < 30; ++rep) {
    const int n = 10 + rep, d = 2 + rep % 9;
    const Eigen::MatrixXd x = pareto_matrix(n, d, 100 + rep);
    const RiskSpec risk = rep % 3 == 0 ? RiskSpec::sum() : rep % 3 == 1 ? RiskSpec::max() : RiskSpec::site(1);
    const double u = 1.5 * (rep % 4 + 1);
    const double up = 2.0 + rep % 5;
    BoolMatrix valid;
    const Eigen::MatrixXd want = naive_cep(x, risk, u, up, valid);
    const CepMatrix got = empirical_cep(x, risk, u, up);
    CHECK(got.valid == valid);
    CHECK(got.pi == want);
    CHECK(got.pi == got.pi.transpose());
    CHECK(got.pi.minCoeff() >= 0.0);
    CHECK(got.pi.maxCoeff() <= 1.0);
  }
}

TEST_CASE("CEP from an exceedance set matches the raw-data estimator") {
  const Eigen::MatrixXd x = pareto_matrix(2000, 5, 12);
  const ExceedanceSet ex = extract_exceedances(x, RiskSpec::sum(), 0.9, 0.8);
  const CepMatrix a = empirical_cep(x, RiskSpec::sum(), ex.u, ex.u_marg);
  const CepMatrix b = empirical_cep(ex);
  CHECK((a.pi - b.pi).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("weight schemes") {
  CHECK(pair_weight(WeightScheme::OneOverTwoMinusPi, 0.0) == 0.5);
  CHECK(pair_weight(WeightScheme::OneOverTwoMinusPi, 1.0) == 1.0);
  CHECK(pair_weight(WeightScheme::PiHat, 0.3) == 0.3);
  CHECK(pair_weight(WeightScheme::Uniform, 0.3) == 1.0);
  CHECK(weight_scheme_from_string(to_string(WeightScheme::PiHat)) == WeightScheme::PiHat);
  CHECK_THROWS_AS(weight_scheme_from_string("inverse"), ValidationError);
}

TEST_CASE("CEP against distance") {
  BoolMatrix none = BoolMatrix::Constant(5, 3, false);
  Coords xy(3, 2);
  xy << 0, 0, 0.3, 0, 0, 0.4;
  const CepDistanceTable empty = cep_vs_distance(cep_from_indicators(none), xy, {0.2, 1.0});
  CHECK(empty.rows.empty());
  CHECK(empty.mean_abs_diff == 0.0);

  BoolMatrix ind(4, 3);
  ind << true, true, false, true, false, true, true, true, true, false, false, true;
  const CepMatrix c = cep_from_indicators(ind);
  const CepDistanceTable t = cep_vs_distance(c, xy, {0.2, 1.0});
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[2].distance == doctest::Approx(0.5));
  CHECK(t.rows[0].pi_model == doctest::Approx(theoretical_cep(1.5)));
  double mad = 0.0;
  for (const auto& r : t.rows) mad += std::abs(r.pi_hat - r.pi_model);
  CHECK(t.mean_abs_diff == doctest::Approx(mad / 3));
  CHECK_THROWS_AS(cep_vs_distance(c, Coords(xy.topRows(2)), {0.2, 1.0}), ValidationError);
}
