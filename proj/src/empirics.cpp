#include "warpex/empirics.hpp"

#include <algorithm>
#include <cmath>

#include "warpex/error.hpp"

namespace warpex {

double quantile_type7(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile: probability must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

ExceedanceSet ExceedanceSet::resample(const std::vector<Eigen::Index>& picks) const {
  ExceedanceSet out = *this;
  out.z.resize(static_cast<Eigen::Index>(picks.size()), z.cols());
  out.rows.clear();
  for (size_t k = 0; k < picks.size(); ++k) {
    out.z.row(static_cast<Eigen::Index>(k)) = z.row(picks[k]);
    out.rows.push_back(rows.empty() ? picks[k] : rows[static_cast<size_t>(picks[k])]);
  }
  return out;
}

Eigen::VectorXd risks(const Eigen::MatrixXd& x, const RiskSpec& risk) {
  risk.validate(x.cols());
  Eigen::VectorXd r(x.rows());
  for (Eigen::Index t = 0; t < x.rows(); ++t) r[t] = evaluate_exact(risk, x.row(t).transpose());
  return r;
}

ExceedanceSet select_exceedances(const Eigen::MatrixXd& x, const RiskSpec& risk, double u, double u_marg) {
  if (!(u > 0.0)) throw ValidationError("risk threshold u must be positive");
  const Eigen::VectorXd r = risks(x, risk);
  ExceedanceSet ex;
  ex.u = u;
  ex.u_marg = u_marg;
  ex.risk = risk;
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    if (r[t] >= u) ex.rows.push_back(t);
  ex.z.resize(static_cast<Eigen::Index>(ex.rows.size()), x.cols());
  for (size_t k = 0; k < ex.rows.size(); ++k) ex.z.row(static_cast<Eigen::Index>(k)) = x.row(ex.rows[k]) / u;
  return ex;
}

ExceedanceSet extract_exceedances(const Eigen::MatrixXd& x, const RiskSpec& risk, double q_risk, double q_marg) {
  if (x.rows() < 20) throw ValidationError("extract_exceedances: need N >= 20 replicates, got " + std::to_string(x.rows()));
  if ((x.array() <= 0.0).any() || !x.allFinite())
    throw ValidationError("extract_exceedances: data must be finite and positive (standard Pareto scale)");
  const Eigen::VectorXd r = risks(x, risk);
  const double u = quantile_type7(std::vector<double>(r.data(), r.data() + r.size()), q_risk);
  const double u_marg = quantile_type7(std::vector<double>(x.data(), x.data() + x.size()), q_marg);
  ExceedanceSet ex = select_exceedances(x, risk, u, u_marg);
  ex.q_risk = q_risk;
  ex.q_marg = q_marg;
  if (ex.count() < 10)
    throw ValidationError("extract_exceedances: only " + std::to_string(ex.count()) +
                          " r-exceedances; at least 10 are required");
  return ex;
}

WeightScheme weight_scheme_from_string(const std::string& s, const std::string& pointer) {
  if (s == "one_over_two_minus_pi") return WeightScheme::OneOverTwoMinusPi;
  if (s == "pi_hat") return WeightScheme::PiHat;
  if (s == "uniform") return WeightScheme::Uniform;
  throw ValidationError(pointer + ": unknown weight scheme '" + s + "'");
}

std::string to_string(WeightScheme w) {
  switch (w) {
    case WeightScheme::OneOverTwoMinusPi: return "one_over_two_minus_pi";
    case WeightScheme::PiHat: return "pi_hat";
    case WeightScheme::Uniform: return "uniform";
  }
  return "?";
}

double pair_weight(WeightScheme scheme, double pi_hat) {
  switch (scheme) {
    case WeightScheme::OneOverTwoMinusPi: return 1.0 / (2.0 - pi_hat);
    case WeightScheme::PiHat: return pi_hat;
    case WeightScheme::Uniform: return 1.0;
  }
  return 0.0;
}

Eigen::Index CepMatrix::valid_pairs() const {
  Eigen::Index n = 0;
  for (Eigen::Index j = 0; j < dim(); ++j)
    for (Eigen::Index i = j + 1; i < dim(); ++i) n += valid(i, j) ? 1 : 0;
  return n;
}

CepMatrix cep_from_indicators(const BoolMatrix& ind, WeightScheme scheme) {
  const Eigen::Index d = ind.cols();
  const Eigen::MatrixXd f = ind.cast<double>();
  const Eigen::MatrixXd joint = f.transpose() * f;  // exact: integer counts well below 2^53
  CepMatrix c;
  c.scheme = scheme;
  c.n_joint = joint.array().round().cast<int>();
  c.n_marg = c.n_joint.diagonal();
  c.pi = Eigen::MatrixXd::Zero(d, d);
  c.weight = Eigen::MatrixXd::Zero(d, d);
  c.valid = BoolMatrix::Constant(d, d, false);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) {
      const int denom2 = c.n_marg[i] + c.n_marg[j];
      if (denom2 == 0) continue;
      c.valid(i, j) = true;
      c.pi(i, j) = static_cast<double>(c.n_joint(i, j)) / (0.5 * static_cast<double>(denom2));
      c.weight(i, j) = pair_weight(scheme, c.pi(i, j));
    }
  return c;
}

CepMatrix empirical_cep(const Eigen::MatrixXd& x, const RiskSpec& risk, double u, double u_marg, WeightScheme scheme) {
  const Eigen::VectorXd r = risks(x, risk);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    if (r[t] >= u) keep.push_back(t);
  BoolMatrix ind(static_cast<Eigen::Index>(keep.size()), x.cols());
  for (size_t k = 0; k < keep.size(); ++k)
    ind.row(static_cast<Eigen::Index>(k)) = (x.row(keep[k]).array() >= u_marg);
  return cep_from_indicators(ind, scheme);
}

CepMatrix empirical_cep(const ExceedanceSet& events, WeightScheme scheme) {
  const BoolMatrix ind = (events.z.array() >= events.u_marg / events.u);
  return cep_from_indicators(ind, scheme);
}

CepDistanceTable cep_vs_distance(const CepMatrix& cep, const Coords& coords, const VariogramParams& psi) {
  if (coords.rows() != cep.dim()) throw ValidationError("cep_vs_distance: site count does not match the CEP matrix");
  CepDistanceTable t;
  double total = 0.0;
  for (Eigen::Index i = 0; i < cep.dim(); ++i)
    for (Eigen::Index j = i + 1; j < cep.dim(); ++j) {
      if (!cep.valid(i, j)) continue;
      const double d = (coords.row(i) - coords.row(j)).norm();
      const double model = theoretical_cep(semivariogram(d, psi));
      t.rows.push_back({i, j, d, cep.pi(i, j), model});
      total += std::abs(cep.pi(i, j) - model);
    }
  if (!t.rows.empty()) t.mean_abs_diff = total / static_cast<double>(t.rows.size());
  return t;
}

}  // namespace warpex
