#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace warpex {

struct GpdFit {
  double u = 0.0;  // threshold in data units; 0 when fitted to bare excesses
  double tau = 1.0;
  double xi = 0.0;
  Eigen::Index n_exceed = 0;
  double log_likelihood = 0.0;
  double ks_distance = 0.0;
  double ks_p = 1.0;
  bool converged = false;
};

struct KsResult {
  double distance = 0.0;
  double p_value = 1.0;
};

inline constexpr double kGpdXiZero = 1e-8;
inline constexpr Eigen::Index kMinGpdExcesses = 30;

double gpd_cdf(double y, double tau, double xi);
double gpd_quantile(double p, double tau, double xi);
double gpd_log_likelihood(const std::vector<double>& excesses, double tau, double xi);

/// Maximum likelihood GPD fit. The likelihood is profiled onto theta = xi / tau and maximised
/// in one dimension, starting from a grid that includes the moment estimate.
/// Throws ValidationError for fewer than 30 excesses or constant data, NumericError when the
/// maximum sits on the boundary of the admissible region.
GpdFit fit_gpd(const std::vector<double>& excesses);

/// Semiparametric marginal model for one site: empirical CDF with an (n + 1) denominator
/// below the threshold u and a GPD tail above it.
struct SiteMargin {
  std::vector<double> sorted;  // all observations, ascending
  double u = 0.0;
  GpdFit gpd;

  double cdf(double y) const;
  double pareto(double y) const { return 1.0 / (1.0 - cdf(y)); }
};

/// Fits the margin with u at the `quantile` empirical quantile (type 7).
SiteMargin fit_site_margin(const std::vector<double>& values, double quantile = 0.95);

std::vector<double> to_pareto_scale(const std::vector<double>& y, const SiteMargin& margin);

/// Asymptotic Kolmogorov survival function P(K > lambda).
double kolmogorov_sf(double lambda);
/// One-sample KS test against Uniform(0, 1).
KsResult ks_test(const std::vector<double>& u_values);
/// Two-sample KS test.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace warpex
