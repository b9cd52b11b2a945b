#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "warpex/geometry.hpp"

namespace warpex {

inline constexpr double kKappaMin = 0.05;
inline constexpr double kKappaMax = 1.95;

/// Power variogram parameters. The optimiser works on raws: phi = softplus(raw_phi),
/// kappa = kKappaMin + (kKappaMax - kKappaMin) * logistic(raw_kappa).
struct VariogramParams {
  double phi = 1.0;
  double kappa = 1.0;

  static VariogramParams from_raw(double raw_phi, double raw_kappa);
  double raw_phi() const;
  double raw_kappa() const;
  double dphi_draw() const;
  double dkappa_draw() const;

  // Throws ValidationError unless phi > 0 and 0 < kappa < 2.
  void validate() const;
};

double semivariogram(double distance, const VariogramParams& psi);
double semivariogram(const Eigen::Vector2d& s1, const Eigen::Vector2d& s2, const VariogramParams& psi);

/// Pairwise semivariogram matrix of already-warped coordinates.
Eigen::MatrixXd semivariogram_matrix(const Coords& warped, const VariogramParams& psi);

/// Brown-Resnick covariance of log-increments relative to the anchor (index 0):
/// Sigma_ij = gamma_i0 + gamma_j0 - gamma_ij for i, j >= 1.
struct BrMatrix {
  Eigen::MatrixXd sigma;
  Eigen::VectorXd gamma_anchor;  // gamma_{i0}, i >= 1
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
  Eigen::Index anchor = 0;

  Eigen::Index dim() const { return sigma.rows(); }
  double log_det() const;
};

/// Builds Sigma from a semivariogram matrix. Cholesky is retried with diagonal jitter from
/// 1e-10 up to 1e-6; the jitter used is recorded. Throws NumericError beyond that.
BrMatrix br_matrix_from_gamma(const Eigen::MatrixXd& gamma);
BrMatrix br_matrix(const Coords& warped, const VariogramParams& psi);
BrMatrix br_matrix(const LocationSet& warped, const VariogramParams& psi);

double normal_cdf(double x);
double normal_pdf(double x);

/// Limiting conditional exceedance probability 2 (1 - Phi(sqrt(gamma / 2))).
double theoretical_cep(double gamma);
/// d theoretical_cep / d gamma; -infinity at gamma = 0.
double theoretical_cep_derivative(double gamma);

}  // namespace warpex
