#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "warpex/dependence.hpp"
#include "warpex/geometry.hpp"
#include "warpex/risk.hpp"

namespace warpex {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Linear-interpolation (type 7) empirical quantile.
double quantile_type7(std::vector<double> values, double q);

/// Rescaled r-exceedances z_t = x_t / u. Row order follows the input; `rows` holds the
/// original row indices.
struct ExceedanceSet {
  Eigen::MatrixXd z;
  double u = 1.0;       // risk threshold
  double u_marg = 1.0;  // marginal threshold on the Pareto scale
  double q_risk = 0.0;
  double q_marg = 0.0;
  RiskSpec risk;
  std::vector<Eigen::Index> rows;

  Eigen::Index count() const { return z.rows(); }
  Eigen::Index dim() const { return z.cols(); }
  /// Rows of z picked by index (with repetition), used for bootstrap resampling.
  ExceedanceSet resample(const std::vector<Eigen::Index>& picks) const;
};

/// Exact risks of every row (the max functional uses the true maximum).
Eigen::VectorXd risks(const Eigen::MatrixXd& x, const RiskSpec& risk);

/// Keeps rows with r(x_t) >= u and divides them by u. No minimum counts are enforced.
ExceedanceSet select_exceedances(const Eigen::MatrixXd& x, const RiskSpec& risk, double u, double u_marg);

/// u and u' from type-7 quantiles of the risks and of all pooled marginal values.
/// Requires N >= 20 and at least 10 exceedances.
ExceedanceSet extract_exceedances(const Eigen::MatrixXd& x, const RiskSpec& risk, double q_risk, double q_marg);

enum class WeightScheme { OneOverTwoMinusPi, PiHat, Uniform };

WeightScheme weight_scheme_from_string(const std::string& s, const std::string& pointer = "/weight_scheme");
std::string to_string(WeightScheme w);
double pair_weight(WeightScheme scheme, double pi_hat);

/// Symmetric empirical CEP estimates. Pairs whose denominator is zero are flagged invalid.
struct CepMatrix {
  Eigen::MatrixXd pi;
  Eigen::MatrixXd weight;
  Eigen::MatrixXi n_joint;
  Eigen::VectorXi n_marg;  // qualifying marginal exceedances per site
  BoolMatrix valid;
  WeightScheme scheme = WeightScheme::OneOverTwoMinusPi;

  Eigen::Index dim() const { return pi.rows(); }
  Eigen::Index valid_pairs() const;
};

/// Core estimator on an event-by-site indicator matrix of qualifying marginal exceedances;
/// every row is assumed to be an r-exceedance.
CepMatrix cep_from_indicators(const BoolMatrix& ind, WeightScheme scheme = WeightScheme::OneOverTwoMinusPi);

CepMatrix empirical_cep(const Eigen::MatrixXd& x, const RiskSpec& risk, double u, double u_marg,
                        WeightScheme scheme = WeightScheme::OneOverTwoMinusPi);
/// Same estimator from already selected events: the indicator is z >= u' / u.
CepMatrix empirical_cep(const ExceedanceSet& events, WeightScheme scheme = WeightScheme::OneOverTwoMinusPi);

struct CepDistanceRow {
  Eigen::Index i = 0;
  Eigen::Index j = 0;
  double distance = 0.0;
  double pi_hat = 0.0;
  double pi_model = 0.0;
};

struct CepDistanceTable {
  std::vector<CepDistanceRow> rows;
  double mean_abs_diff = 0.0;
};

/// Valid pairs (i < j) with their distance in `coords`, and the mean |pi_hat - pi(d; psi)|.
CepDistanceTable cep_vs_distance(const CepMatrix& cep, const Coords& coords, const VariogramParams& psi);

}  // namespace warpex
