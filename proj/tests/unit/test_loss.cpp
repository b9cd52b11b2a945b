#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "warpex/error.hpp"
#include "warpex/loss.hpp"
#include "warpex/simulate.hpp"

using namespace warpex;

namespace {
Coords coords(std::initializer_list<std::pair<double, double>> xs) {
  Coords c(static_cast<Eigen::Index>(xs.size()), 2);
  Eigen::Index r = 0;
  for (auto [x, y] : xs) c.row(r++) << x, y;
  return c;
}

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Coords random_sites(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  Coords xy(d, 2);
  for (int i = 0; i < d; ++i) xy.row(i) << U(rng), U(rng);
  return xy;
}

ExceedanceSet small_events(const Coords& sites, const RiskSpec& risk, std::uint64_t seed, int n = 600) {
  SimConfig sc;
  sc.sites = sites;
  sc.psi = {0.3, 1.2};
  sc.risk = risk;
  sc.n = n;
  sc.seed = seed;
  return extract_exceedances(simulate(sc).z, risk, 0.9, 0.9);
}

// Five-point central difference.
template <class F>
double fd(F&& f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}
}  // namespace

TEST_CASE("log intensity for two sites") {
  const BrMatrix br = br_matrix(coords({{0, 0}, {0.2, 0}}), {0.2, 1.0});
  const double want = -0.5 * std::log(2.0) - 0.5 * std::log(2 * std::numbers::pi) - 0.25;
  CHECK(br_log_intensity(vec({1, 1}), br) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("log intensity homogeneity and the zero quadratic form") {
  std::mt19937_64 rng(3);
  const Coords xy = random_sites(6, rng);
  const VariogramParams psi{0.4, 1.3};
  const BrMatrix br = br_matrix(xy, psi);
  const Eigen::VectorXd z = vec({1.3, 0.4, 2.2, 5.0, 0.9, 1.1});
  for (double c : {0.1, 2.0, 37.0})
    CHECK(br_log_intensity(Eigen::VectorXd(c * z), br) ==
          doctest::Approx(br_log_intensity(z, br) - 7.0 * std::log(c)).epsilon(1e-12));
  // z_i = z_0 exp(-gamma_i0) makes every transformed component zero.
  Eigen::VectorXd z0(6);
  z0[0] = 1.7;
  for (int i = 1; i < 6; ++i) z0[i] = 1.7 * std::exp(-br.gamma_anchor[i - 1]);
  double want = -0.5 * br.log_det() - 2.0 * std::log(z0[0]) - 2.5 * std::log(2 * std::numbers::pi);
  for (int i = 1; i < 6; ++i) want -= std::log(z0[i]);
  CHECK(br_log_intensity(z0, br) == doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("log intensity partials match finite differences") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> U(0.3, 4.0), P(0.1, 0.8), K(0.3, 1.8);
  const int dims[] = {3, 5, 10};
  for (int rep = 0; rep < 100; ++rep) {
    const int d = dims[rep % 3];
    const BrMatrix br = br_matrix(random_sites(d, rng), {P(rng), K(rng)});
    Eigen::VectorXd z(d);
    for (auto& v : z) v = U(rng);
    const LogIntensityDerivatives der = br_log_intensity_derivatives(z, br);
    CHECK(der.value == doctest::Approx(br_log_intensity(z, br)).epsilon(1e-13));
    for (int i = 0; i < d; ++i) {
      auto f = [&](double v) {
        Eigen::VectorXd w = z;
        w[i] = v;
        return br_log_intensity(w, br);
      };
      auto g = [&](double v) {
        Eigen::VectorXd w = z;
        w[i] = v;
        return br_log_intensity_derivatives(w, br).grad[i];
      };
      const double h = 1e-3 * z[i];
      const double g_fd = fd(f, z[i], h), h_fd = fd(g, z[i], h);
      CHECK(std::abs(der.grad[i] - g_fd) <= 1e-5 * std::max(1.0, std::abs(g_fd)));
      CHECK(std::abs(der.hess_diag[i] - h_fd) <= 1e-5 * std::max(1.0, std::abs(h_fd)));
    }
  }
}

TEST_CASE("event score against symbolic reference values") {
  // Values from an independent symbolic differentiation of the log intensity.
  const BrMatrix b2 = br_matrix(coords({{0, 0}, {0.2, 0}}), {0.2, 1.0});
  CHECK(br_log_intensity(vec({2, 2}), b2) == doctest::Approx(-3.5949536651644813247).epsilon(1e-13));
  CHECK(gsm_event_score(vec({2, 2}), b2, RiskSpec::sum()) == doctest::Approx(-2.1477828713160133415).epsilon(1e-12));

  const BrMatrix b3 = br_matrix(coords({{0, 0}, {0.3, 0.1}, {-0.2, 0.4}}), {0.25, 1.5});
  const Eigen::VectorXd z = vec({1.5, 0.7, 2.2});
  CHECK(br_log_intensity(z, b3) == doctest::Approx(-5.2353578889847499638).epsilon(1e-13));
  CHECK(gsm_event_score(z, b3, RiskSpec::max(20)) == doctest::Approx(-2.6159604637679466156).epsilon(1e-12));
  CHECK(gsm_event_score(z, b3, RiskSpec::site(0)) == doctest::Approx(-1.2619279732641400240).epsilon(1e-12));
}

TEST_CASE("event score vanishes on the risk boundary and rejects non-exceedances") {
  const BrMatrix b = br_matrix(coords({{0, 0}, {0.3, 0.1}, {-0.2, 0.4}}), {0.25, 1.5});
  CHECK(gsm_event_score(vec({0.5, 0.2, 0.3}), b, RiskSpec::sum()) == 0.0);
  CHECK_THROWS_AS(gsm_event_score(vec({0.5, 0.2, 0.2}), b, RiskSpec::sum()), ValidationError);
}

TEST_CASE("batched GSM loss equals the sum of event scores") {
  std::mt19937_64 rng(5);
  const Coords xy = random_sites(7, rng);
  const RiskSpec risk = RiskSpec::max(20);
  const ExceedanceSet ex = small_events(xy, risk, 1);
  const VariogramParams psi{0.35, 1.1};
  const BrMatrix br = br_matrix(xy, psi);
  double total = 0.0;
  for (Eigen::Index t = 0; t < ex.count(); ++t) total += gsm_event_score(ex.z.row(t).transpose(), br, risk);
  CHECK(gsm_loss(psi, WarpStack(), xy, ex, risk) == doctest::Approx(total).epsilon(1e-11));
}

TEST_CASE("GSM loss is additive and order free") {
  std::mt19937_64 rng(6);
  const Coords xy = random_sites(5, rng);
  const ExceedanceSet ex = small_events(xy, RiskSpec::sum(), 2);
  const VariogramParams psi{0.3, 1.0};
  const double base = gsm_loss(psi, WarpStack(), xy, ex, RiskSpec::sum());

  std::vector<Eigen::Index> twice, reversed;
  for (Eigen::Index t = 0; t < ex.count(); ++t) twice.push_back(t), twice.push_back(t);
  for (Eigen::Index t = ex.count(); t-- > 0;) reversed.push_back(t);
  CHECK(gsm_loss(psi, WarpStack(), xy, ex.resample(twice), RiskSpec::sum()) == doctest::Approx(2 * base).epsilon(1e-12));
  CHECK(gsm_loss(psi, WarpStack(), xy, ex.resample(reversed), RiskSpec::sum()) == doctest::Approx(base).epsilon(1e-12));
  CHECK(gsm_loss(psi, WarpStack(), xy, ex.resample({}), RiskSpec::sum()) == 0.0);
}

TEST_CASE("GSM loss prefers the generating parameters") {
  std::mt19937_64 rng(7);
  const Coords xy = random_sites(30, rng);
  SimConfig sc;
  sc.sites = xy;
  sc.psi = {0.2, 1.0};
  sc.risk = RiskSpec::site(0);
  sc.n = 5000;
  sc.seed = 8;
  const ExceedanceSet ex = extract_exceedances(simulate(sc).z, sc.risk, 0.95, 0.95);
  const double truth = gsm_loss(sc.psi, WarpStack(), xy, ex, sc.risk);
  for (double fp : {0.5, 1.5})
    for (double fk : {0.7, 1.0, 1.3}) CHECK(truth < gsm_loss({0.2 * fp, fk}, WarpStack(), xy, ex, sc.risk));
}

TEST_CASE("WLS loss hand values") {
  CepMatrix cep;
  cep.pi = Eigen::MatrixXd::Identity(2, 2);
  cep.pi(0, 1) = cep.pi(1, 0) = 0.5;
  cep.weight = Eigen::MatrixXd::Ones(2, 2);
  cep.weight(0, 1) = cep.weight(1, 0) = 1.0 / 1.5;
  cep.valid = BoolMatrix::Constant(2, 2, true);
  cep.n_joint = Eigen::MatrixXi::Ones(2, 2);
  cep.n_marg = Eigen::VectorXi::Ones(2);
  // gamma with limiting CEP 0.3, by bisection.
  double lo = 0.0, hi = 20.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (theoretical_cep(mid) > 0.3 ? lo : hi) = mid;
  }
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
  g(0, 1) = g(1, 0) = lo;
  CHECK(wls_loss_from_gamma(g, cep) == doctest::Approx(0.04 / 1.5).epsilon(1e-12));
  g(0, 1) = g(1, 0) = 2.0 * std::pow(0.6744897501960817, 2);  // limiting CEP 0.5
  CHECK(wls_loss_from_gamma(g, cep) == doctest::Approx(0.0).epsilon(1e-12));
  cep.valid.setConstant(false);
  CHECK_THROWS_AS(wls_loss_from_gamma(g, cep), ValidationError);
}

TEST_CASE("regularised loss") {
  SrRbfUnit s2 = SrRbfUnit::identity(2);
  s2.layers[3].raw_weight = rbf_raw_from_weight(1.0);
  s2.layers[7].raw_weight = rbf_raw_from_weight(2.0);
  const WarpStack st({s2});
  CHECK(regularized_loss(10.0, st, {1.0, 2}) == doctest::Approx(15.0).epsilon(1e-12));
  CHECK(regularized_loss(10.0, st, {0.0, 2}) == 10.0);
  CHECK(regularized_loss(10.0, WarpStack({SrRbfUnit::identity(1)}), {1.0, 2}) == 10.0);
}

namespace {
enum class Kind { Wls, Gsm };

void check_parameter_gradient(Kind kind, const std::string& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Coords xy = random_sites(5, rng);
  const RiskSpec risk = RiskSpec::max(20);
  const ExceedanceSet ex = small_events(xy, risk, seed);
  const WarpStack stack = random_constrained_stack(architecture_preset(arch), rng, 0.5);
  const VariogramParams psi{0.3, 1.1};
  const Regularizer reg{0.7, 1};

  const GsmEvents events = GsmEvents::prepare(ex.z, risk);
  const CepMatrix cep = empirical_cep(ex);
  auto loss = [&](const VariogramParams& p, const WarpStack& s, bool grad) {
    return kind == Kind::Gsm ? gsm_loss(p, s, xy, events, grad, reg) : wls_loss(p, s, xy, cep, grad, reg);
  };
  const LossResult an = loss(psi, stack, true);
  CHECK(an.value == doctest::Approx(loss(psi, stack, false).value).epsilon(1e-14));

  const std::vector<double> raw{psi.raw_phi(), psi.raw_kappa()};
  for (int k = 0; k < 2; ++k) {
    auto f = [&](double v) {
      std::vector<double> r = raw;
      r[k] = v;
      return loss(VariogramParams::from_raw(r[0], r[1]), stack, false).value;
    };
    const double want = fd(f, raw[k], 1e-4);
    CHECK(std::abs(an.grad_psi[k] - want) <= 1e-4 * std::max(1.0, std::abs(want)));
  }
  const std::vector<double> p = stack.params();
  REQUIRE(an.grad_warp.size() == p.size());
  for (size_t k = 0; k < p.size(); ++k) {
    auto f = [&](double v) {
      WarpStack s = stack;
      std::vector<double> q = p;
      q[k] = v;
      s.set_params(q);
      return loss(psi, s, false).value;
    };
    const double want = fd(f, p[k], 1e-4);
    CHECK(std::abs(an.grad_warp[k] - want) <= 1e-4 * std::max(1.0, std::abs(want)));
  }
}
}  // namespace

TEST_CASE("GSM parameter gradients match finite differences") {
  check_parameter_gradient(Kind::Gsm, "rbf", 1);
  check_parameter_gradient(Kind::Gsm, "1", 2);
  check_parameter_gradient(Kind::Gsm, "2", 3);
}

TEST_CASE("WLS parameter gradients match finite differences") {
  check_parameter_gradient(Kind::Wls, "rbf", 4);
  check_parameter_gradient(Kind::Wls, "3", 5);
  check_parameter_gradient(Kind::Wls, "1", 6);
}
