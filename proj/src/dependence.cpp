#include "warpex/dependence.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "warpex/error.hpp"

namespace warpex {

namespace {

double logistic(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

constexpr double kKappaSpan = kKappaMax - kKappaMin;

}  // namespace

VariogramParams VariogramParams::from_raw(double raw_phi, double raw_kappa) {
  return {softplus(raw_phi), kKappaMin + kKappaSpan * logistic(raw_kappa)};
}

double VariogramParams::raw_phi() const { return phi > 30.0 ? phi : std::log(std::expm1(phi)); }

double VariogramParams::raw_kappa() const {
  const double p = (kappa - kKappaMin) / kKappaSpan;
  if (!(p > 0.0 && p < 1.0))
    throw ValidationError("kappa = " + std::to_string(kappa) + " lies outside the optimiser range [0.05, 1.95]");
  return std::log(p / (1.0 - p));
}

double VariogramParams::dphi_draw() const { return -std::expm1(-phi); }

double VariogramParams::dkappa_draw() const {
  const double p = (kappa - kKappaMin) / kKappaSpan;
  return kKappaSpan * p * (1.0 - p);
}

void VariogramParams::validate() const {
  if (!(phi > 0.0) || !std::isfinite(phi)) throw ValidationError("phi must be positive and finite");
  if (!(kappa > 0.0 && kappa < 2.0)) throw ValidationError("kappa must lie in (0, 2)");
}

double semivariogram(double distance, const VariogramParams& psi) {
  if (distance <= 0.0) return 0.0;
  return std::pow(distance / psi.phi, psi.kappa);
}

double semivariogram(const Eigen::Vector2d& s1, const Eigen::Vector2d& s2, const VariogramParams& psi) {
  return semivariogram((s1 - s2).norm(), psi);
}

Eigen::MatrixXd semivariogram_matrix(const Coords& warped, const VariogramParams& psi) {
  const Eigen::Index n = warped.rows();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = semivariogram((warped.row(i) - warped.row(j)).norm(), psi);
      g(i, j) = v;
      g(j, i) = v;
    }
  return g;
}

double BrMatrix::log_det() const {
  const auto& l = llt.matrixLLT();
  return 2.0 * l.diagonal().array().log().sum();
}

BrMatrix br_matrix_from_gamma(const Eigen::MatrixXd& gamma) {
  const Eigen::Index d = gamma.rows();
  if (d < 2 || gamma.cols() != d) throw ValidationError("br_matrix: need a square semivariogram matrix with D >= 2");
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j + 1; i < d; ++i)
      if (!(gamma(i, j) > 0.0))
        throw NumericError("br_matrix: sites " + std::to_string(j + 1) + " and " + std::to_string(i + 1) +
                           " coincide in warped space");
  const Eigen::Index n = d - 1;
  BrMatrix br;
  br.sigma.resize(n, n);
  br.gamma_anchor = gamma.col(0).tail(n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) br.sigma(i, j) = gamma(i + 1, 0) + gamma(j + 1, 0) - gamma(i + 1, j + 1);

  br.llt.compute(br.sigma);
  if (br.llt.info() == Eigen::Success) return br;
  for (double jitter = 1e-10; jitter <= 1e-6 * (1.0 + 1e-9); jitter *= 10.0) {
    Eigen::MatrixXd s = br.sigma;
    s.diagonal().array() += jitter;
    br.llt.compute(s);
    if (br.llt.info() == Eigen::Success) {
      br.jitter = jitter;
      br.sigma = s;
      return br;
    }
  }
  throw NumericError("br_matrix: Cholesky failed after jitter 1e-6 (degenerate geometry or kappa near 2)");
}

BrMatrix br_matrix(const Coords& warped, const VariogramParams& psi) {
  return br_matrix_from_gamma(semivariogram_matrix(warped, psi));
}

BrMatrix br_matrix(const LocationSet& warped, const VariogramParams& psi) { return br_matrix(warped.coords, psi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double theoretical_cep(double gamma) {
  if (gamma < 0.0) throw ValidationError("theoretical_cep: gamma must be nonnegative");
  // 2 (1 - Phi(t)) = erfc(t / sqrt 2), evaluated without cancellation.
  return std::erfc(std::sqrt(gamma / 2.0) / std::numbers::sqrt2);
}

double theoretical_cep_derivative(double gamma) {
  if (gamma <= 0.0) return -std::numeric_limits<double>::infinity();
  const double t = std::sqrt(gamma / 2.0);
  return -normal_pdf(t) / (2.0 * t);
}

}  // namespace warpex
