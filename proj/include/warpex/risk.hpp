#pragma once

#include <string>

#include <Eigen/Core>
#include <json.hpp>

namespace warpex {

enum class RiskKind { Site, Max, Sum, SumBeta };

/// 1-homogeneous risk functional. `max` is the smooth power mean with exponent p when
/// differentiated; thresholding uses the exact maximum (see evaluate_exact).
struct RiskSpec {
  RiskKind kind = RiskKind::Sum;
  Eigen::Index site_index = 0;  // zero-based, site functional only
  double p = 20.0;              // smooth-max exponent
  double beta = 1.0;            // sum_beta exponent

  static RiskSpec site(Eigen::Index index) { return {RiskKind::Site, index}; }
  static RiskSpec max(double p = 20.0) { return {RiskKind::Max, 0, p}; }
  static RiskSpec sum() { return {RiskKind::Sum}; }
  static RiskSpec sum_beta(double beta) { return {RiskKind::SumBeta, 0, 20.0, beta}; }

  std::string name() const;
  void validate(Eigen::Index dim) const;
};

RiskKind risk_kind_from_string(const std::string& s, const std::string& pointer = "/risk");
std::string to_string(RiskKind k);

/// Accepts {"risk": "max", "p": 20}, {"risk": "site", "site": 0}, {"risk": "sum_beta", "beta": 0.2}.
RiskSpec risk_from_json(const nlohmann::json& j, const std::string& pointer = "");
nlohmann::json risk_to_json(const RiskSpec& r);

/// Smooth value: the max kind returns (sum x_i^p)^(1/p).
double evaluate(const RiskSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x);
/// Value used to select exceedances: identical to evaluate except max returns the exact maximum.
double evaluate_exact(const RiskSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXd gradient(const RiskSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace warpex
