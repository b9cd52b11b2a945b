#include "warpex/risk.hpp"

#include <cmath>

#include "warpex/error.hpp"

namespace warpex {

namespace {

void require_positive(const Eigen::Ref<const Eigen::VectorXd>& x, const char* what) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!(x[i] > 0.0) || !std::isfinite(x[i]))
      throw ValidationError(std::string(what) + " risk: component " + std::to_string(i + 1) +
                            " is not finite and positive");
}

// (sum x_i^q)^(1/q) with the largest component factored out.
double power_mean(const Eigen::Ref<const Eigen::VectorXd>& x, double q) {
  const double m = x.maxCoeff();
  return m * std::pow((x.array() / m).pow(q).sum(), 1.0 / q);
}

}  // namespace

std::string to_string(RiskKind k) {
  switch (k) {
    case RiskKind::Site: return "site";
    case RiskKind::Max: return "max";
    case RiskKind::Sum: return "sum";
    case RiskKind::SumBeta: return "sum_beta";
  }
  return "?";
}

std::string RiskSpec::name() const { return to_string(kind); }

RiskKind risk_kind_from_string(const std::string& s, const std::string& pointer) {
  if (s == "site") return RiskKind::Site;
  if (s == "max") return RiskKind::Max;
  if (s == "sum") return RiskKind::Sum;
  if (s == "sum_beta") return RiskKind::SumBeta;
  throw ValidationError(pointer + ": unknown risk functional '" + s + "' (expected site, max, sum or sum_beta)");
}

void RiskSpec::validate(Eigen::Index dim) const {
  if (kind == RiskKind::Site && (site_index < 0 || site_index >= dim))
    throw ValidationError("site risk: index " + std::to_string(site_index) + " outside [0, " +
                          std::to_string(dim) + ")");
  if (kind == RiskKind::Max && !(p >= 1.0)) throw ValidationError("max risk: p must be >= 1");
  if (kind == RiskKind::SumBeta && !(beta > 0.0)) throw ValidationError("sum_beta risk: beta must be positive");
}

RiskSpec risk_from_json(const nlohmann::json& j, const std::string& pointer) {
  RiskSpec r;
  if (j.is_string()) {
    r.kind = risk_kind_from_string(j.get<std::string>(), pointer);
    return r;
  }
  if (!j.is_object() || !j.contains("risk") || !j["risk"].is_string())
    throw ValidationError(pointer + "/risk: expected a risk functional name");
  r.kind = risk_kind_from_string(j["risk"].get<std::string>(), pointer + "/risk");
  if (j.contains("p")) {
    if (!j["p"].is_number()) throw ValidationError(pointer + "/p: expected a number");
    r.p = j["p"].get<double>();
    if (!(r.p >= 1.0)) throw ValidationError(pointer + "/p: must be >= 1");
  }
  if (j.contains("site")) {
    if (!j["site"].is_number_integer()) throw ValidationError(pointer + "/site: expected an integer index");
    r.site_index = j["site"].get<Eigen::Index>();
    if (r.site_index < 0) throw ValidationError(pointer + "/site: must be >= 0");
  }
  if (j.contains("beta")) {
    if (!j["beta"].is_number()) throw ValidationError(pointer + "/beta: expected a number");
    r.beta = j["beta"].get<double>();
    if (!(r.beta > 0.0)) throw ValidationError(pointer + "/beta: must be positive");
  }
  return r;
}

nlohmann::json risk_to_json(const RiskSpec& r) {
  nlohmann::json j{{"risk", r.name()}};
  if (r.kind == RiskKind::Site) j["site"] = r.site_index;
  if (r.kind == RiskKind::Max) j["p"] = r.p;
  if (r.kind == RiskKind::SumBeta) j["beta"] = r.beta;
  return j;
}

double evaluate(const RiskSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  switch (spec.kind) {
    case RiskKind::Site:
      if (spec.site_index < 0 || spec.site_index >= x.size()) spec.validate(x.size());
      return x[spec.site_index];
    case RiskKind::Sum: return x.sum();
    case RiskKind::Max: require_positive(x, "max"); return power_mean(x, spec.p);
    case RiskKind::SumBeta: require_positive(x, "sum_beta"); return power_mean(x, spec.beta);
  }
  return 0.0;
}

double evaluate_exact(const RiskSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (spec.kind == RiskKind::Max) {
    require_positive(x, "max");
    return x.maxCoeff();
  }
  return evaluate(spec, x);
}

Eigen::VectorXd gradient(const RiskSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  switch (spec.kind) {
    case RiskKind::Site: {
      spec.validate(x.size());
      Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
      g[spec.site_index] = 1.0;
      return g;
    }
    case RiskKind::Sum: return Eigen::VectorXd::Ones(x.size());
    case RiskKind::Max:
    case RiskKind::SumBeta: {
      const double q = spec.kind == RiskKind::Max ? spec.p : spec.beta;
      const double r = evaluate(spec, x);
      return (x.array() / r).pow(q - 1.0).matrix();
    }
  }
  return {};
}

}  // namespace warpex
