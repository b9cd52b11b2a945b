#include <doctest.h>

#include <cmath>
#include <random>

#include "warpex/empirics.hpp"
#include "warpex/error.hpp"
#include "warpex/simulate.hpp"
#include "warpex/tailmargins.hpp"

using namespace warpex;

namespace {
Coords five_sites() {
  Coords xy(5, 2);
  xy << 0, 0, 0.1, 0, 0, 0.15, -0.2, 0.1, 0.25, -0.3;
  return xy;
}

std::vector<double> pareto_pit(const Eigen::VectorXd& r) {
  std::vector<double> u(static_cast<size_t>(r.size()));
  for (Eigen::Index i = 0; i < r.size(); ++i) u[static_cast<size_t>(i)] = 1.0 - 1.0 / r[i];
  return u;
}
}  // namespace

TEST_CASE("increments are anchored at zero with the right covariance") {
  const Coords xy = five_sites();
  const VariogramParams psi{0.3, 1.2};
  const IncrementSampler s(xy, psi);
  const Eigen::Index anchor = 2;
  std::mt19937_64 rng(1);
  const int n = 100000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(5, 5);
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd e = s.increments(anchor, rng);
    CHECK(e[anchor] == 0.0);
    acc += e * e.transpose() / n;
  }
  const Eigen::MatrixXd& g = s.gamma();
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 5; ++k) {
      const double cik = g(i, anchor) + g(k, anchor) - g(i, k);
      const double cii = 2 * g(i, anchor), ckk = 2 * g(k, anchor);
      // Gaussian fourth moments give Var(e_i e_k) = C_ii C_kk + C_ik^2.
      const double se = std::sqrt((cii * ckk + cik * cik) / n);
      CHECK(std::abs(acc(i, k) - cik) < std::max(4 * se, 1e-12));
    }
}

TEST_CASE("two-site increment variance") {
  Coords xy(2, 2);
  xy << 0, 0, 0.3, 0.4;
  const VariogramParams psi{1.0, 1.0};
  std::mt19937_64 rng(2);
  double s2 = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) s2 += std::pow(gaussian_increments(xy, psi, 0, rng)[1], 2) / n;
  CHECK(s2 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("extremal functions have unit mean and equal one at the anchor") {
  const IncrementSampler s(five_sites(), {0.3, 1.0});
  std::mt19937_64 rng(3);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(5);
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd y = s.extremal_function(4, rng);
    CHECK(y[4] == 1.0);
    mean += y / n;
  }
  // Var(exp(e - gamma)) = exp(2 gamma) - 1 for the log-normal profile.
  for (int i = 0; i < 5; ++i)
    CHECK(std::abs(mean[i] - 1.0) < std::max(4 * std::sqrt(std::expm1(2 * s.gamma()(i, 4)) / n), 1e-9));
}

TEST_CASE("extremal functions tend to one when the variogram vanishes") {
  std::mt19937_64 rng(4);
  const Eigen::VectorXd y = extremal_function(five_sites(), {1e6, 1.0}, 0, rng);
  CHECK((y.array() - 1.0).abs().maxCoeff() < 1e-3);
}

TEST_CASE("site simulation has a standard Pareto anchor") {
  SimConfig c;
  c.sites = five_sites();
  c.psi = {0.3, 1.0};
  c.risk = RiskSpec::site(1);
  c.n = 10000;
  c.seed = 5;
  const SimResult r = simulate(c);
  const Eigen::VectorXd anchor = r.z.col(1);
  CHECK(ks_test(pareto_pit(anchor)).distance < 0.02);
  CHECK(((anchor.array() > 10.0).cast<double>().mean()) == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("site simulation CEPs approach the limiting value") {
  SimConfig c;
  c.sites = five_sites();
  c.psi = {0.3, 1.0};
  c.risk = RiskSpec::site(0);
  c.n = 400000;
  c.seed = 6;
  const SimResult r = simulate(c);
  const double up = quantile_type7(std::vector<double>(r.z.data(), r.z.data() + r.z.size()), 0.99);
  const CepMatrix cep = empirical_cep(r.z, c.risk, 1.0, up);
  const Eigen::MatrixXd g = semivariogram_matrix(c.sites, c.psi);
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) CHECK(std::abs(cep.pi(i, j) - theoretical_cep(g(i, j))) < 0.03);
}

TEST_CASE("sum simulation has a standard Pareto sum") {
  SimConfig c;
  c.sites = five_sites();
  c.psi = {0.3, 1.0};
  c.risk = RiskSpec::sum();
  c.n = 10000;
  c.seed = 7;
  const SimResult r = simulate(c);
  CHECK(ks_test(pareto_pit(r.z.rowwise().sum())).distance < 0.02);
}

TEST_CASE("one site reduces to a Pareto variable") {
  SimConfig c;
  c.sites = Coords::Zero(1, 2);
  c.psi = {0.3, 1.0};
  c.n = 2000;
  c.seed = 8;
  c.risk = RiskSpec::sum();
  const SimResult a = simulate(c);
  c.risk = RiskSpec::max();
  const SimResult b = simulate_rpareto_rejection(c);
  CHECK(b.acceptance_rate == 1.0);
  CHECK(ks_test(pareto_pit(a.z.col(0))).p_value > 0.01);
  CHECK(ks_test(pareto_pit(b.z.col(0))).p_value > 0.01);
}

TEST_CASE("rejection with the sum functional accepts everything") {
  SimConfig c;
  c.sites = five_sites();
  c.psi = {0.3, 1.0};
  c.risk = RiskSpec::sum();
  c.n = 500;
  c.seed = 9;
  const SimResult r = simulate_rpareto_rejection(c);
  CHECK(r.acceptance_rate == 1.0);
  CHECK(r.proposals == 500);
}

TEST_CASE("rejection sampler targets the max functional") {
  SimConfig c;
  c.sites = five_sites();
  c.psi = {0.3, 1.0};
  c.risk = RiskSpec::max();
  c.n = 10000;
  c.seed = 10;
  const SimResult r = simulate(c);
  CHECK(r.acceptance_rate < 1.0);
  CHECK(ks_test(pareto_pit(r.z.rowwise().maxCoeff())).distance < 0.02);
}

TEST_CASE("rejection sampler handles sum_beta below one") {
  SimConfig c;
  c.sites = five_sites();
  c.psi = {0.3, 1.0};
  c.risk = RiskSpec::sum_beta(0.5);
  c.n = 4000;
  c.seed = 11;
  const SimResult r = simulate(c);
  Eigen::VectorXd risk(r.z.rows());
  for (Eigen::Index t = 0; t < r.z.rows(); ++t) risk[t] = evaluate(c.risk, r.z.row(t).transpose());
  CHECK(ks_test(pareto_pit(risk)).p_value > 0.01);
}

TEST_CASE("rejection budget exhaustion is a numeric error") {
  SimConfig c;
  c.sites = unit_grid(6, 6).coords;
  c.psi = {100.0, 1.5};  // near-flat profiles: max / sum is about 1/36
  c.risk = RiskSpec::max();
  c.n = 5;
  c.max_rejection_tries = 1;
  c.seed = 12;
  CHECK_THROWS_AS(simulate(c), NumericError);
}

TEST_CASE("threshold stability") {
  SimConfig c;
  c.sites = five_sites();
  c.psi = {0.3, 1.0};
  c.risk = RiskSpec::sum();
  c.n = 10000;
  c.seed = 13;
  const SimResult a = simulate(c);
  c.seed = 14;
  c.n = 40000;
  const SimResult b = simulate(c);
  for (double u : {2.0, 5.0}) {
    std::vector<double> r_all, r_cond, s_all, s_cond;
    for (Eigen::Index t = 0; t < a.z.rows(); ++t) r_all.push_back(a.z.row(t).sum()), s_all.push_back(a.z(t, 3));
    for (Eigen::Index t = 0; t < b.z.rows(); ++t)
      if (b.z.row(t).sum() >= u) r_cond.push_back(b.z.row(t).sum() / u), s_cond.push_back(b.z(t, 3) / u);
    CHECK(ks_two_sample(r_all, r_cond).p_value > 0.01);
    CHECK(ks_two_sample(s_all, s_cond).p_value > 0.01);
  }
}

TEST_CASE("truth warp is applied before simulating") {
  SimConfig c;
  c.sites = five_sites();
  c.psi = {0.3, 1.0};
  c.truth = WarpStack({RbfUnit::with_weight(Eigen::Vector2d::Zero(), 4.0, 0.8)});
  c.n = 3;
  const SimResult r = simulate(c);
  CHECK(r.warped == c.truth->apply(c.sites).warped);
}

TEST_CASE("same seed gives identical output") {
  SimConfig c;
  c.sites = five_sites();
  c.psi = {0.3, 1.0};
  c.risk = RiskSpec::max();
  c.n = 300;
  c.seed = 15;
  CHECK(simulate(c).z == simulate(c).z);
  c.seed = 16;
  const Eigen::MatrixXd other = simulate(c).z;
  c.seed = 15;
  CHECK(simulate(c).z != other);
}

TEST_CASE("simulation config validation") {
  SimConfig c;
  c.sites = five_sites();
  c.n = 0;
  CHECK_THROWS_AS(simulate(c), ValidationError);
  c.n = 3;
  c.risk = RiskSpec::site(9);
  CHECK_THROWS_AS(simulate(c), ValidationError);
  c.risk = RiskSpec::site(0);
  c.psi = {0.2, 2.5};
  CHECK_THROWS_AS(simulate(c), ValidationError);
  c.psi = {0.2, 1.0};
  c.sites.row(1) = c.sites.row(0);
  CHECK_THROWS_AS(simulate(c), NumericError);
}
