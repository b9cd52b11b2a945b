#include "warpex/simulate.hpp"

#include <cmath>
#include <vector>

#include "warpex/error.hpp"
#include "warpex/parallel.hpp"

namespace warpex {

IncrementSampler::IncrementSampler(const Coords& warped, const VariogramParams& psi)
    : gamma_(semivariogram_matrix(warped, psi)) {
  psi.validate();
  if (warped.rows() >= 2) br_ = br_matrix_from_gamma(gamma_);
}

Eigen::VectorXd IncrementSampler::increments(Eigen::Index anchor, std::mt19937_64& rng) const {
  const Eigen::Index d = size();
  if (anchor < 0 || anchor >= d) throw ValidationError("anchor index out of range");
  Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
  if (d < 2) return e;
  std::normal_distribution<double> normal;
  Eigen::VectorXd w(d - 1);
  for (Eigen::Index i = 0; i < d - 1; ++i) w[i] = normal(rng);
  e.tail(d - 1) = br_.llt.matrixL() * w;
  e.array() -= e[anchor];
  e[anchor] = 0.0;
  return e;
}

Eigen::VectorXd IncrementSampler::extremal_function(Eigen::Index anchor, std::mt19937_64& rng) const {
  Eigen::VectorXd y = (increments(anchor, rng) - gamma_.col(anchor)).array().exp();
  y[anchor] = 1.0;
  return y;
}

Eigen::VectorXd gaussian_increments(const Coords& warped, const VariogramParams& psi, Eigen::Index anchor,
                                    std::mt19937_64& rng) {
  return IncrementSampler(warped, psi).increments(anchor, rng);
}

Eigen::VectorXd extremal_function(const Coords& warped, const VariogramParams& psi, Eigen::Index anchor,
                                  std::mt19937_64& rng) {
  return IncrementSampler(warped, psi).extremal_function(anchor, rng);
}

void SimConfig::validate() const {
  if (n < 1) throw ValidationError("simulation: N must be >= 1");
  if (sites.rows() < 1) throw ValidationError("simulation: no sites");
  psi.validate();
  risk.validate(sites.rows());
  if (max_rejection_tries < 1) throw ValidationError("simulation: max_rejection_tries must be >= 1");
}

namespace {

double pareto(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return 1.0 / (1.0 - unif(rng));
}

std::mt19937_64 replicate_rng(std::uint64_t seed, Eigen::Index i) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(i)};
  return std::mt19937_64(seq);
}

Coords warped_sites(const SimConfig& cfg) {
  if (cfg.truth && !cfg.truth->empty()) return cfg.truth->apply(cfg.sites).warped;
  return cfg.sites;
}

Eigen::VectorXd sum_spectral(const IncrementSampler& s, std::mt19937_64& rng) {
  std::uniform_int_distribution<Eigen::Index> anchor(0, s.size() - 1);
  Eigen::VectorXd y = s.extremal_function(anchor(rng), rng);
  return y / y.sum();
}

// sup over the positive orthant of r(v) / sum(v).
double domination_constant(const RiskSpec& risk, Eigen::Index d) {
  if (risk.kind == RiskKind::SumBeta && risk.beta < 1.0) return std::pow(static_cast<double>(d), 1.0 / risk.beta - 1.0);
  return 1.0;
}

}  // namespace

SimResult simulate_site_pareto(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.risk.kind != RiskKind::Site) throw ValidationError("simulate_site_pareto: risk must be the site functional");
  SimResult res;
  res.warped = warped_sites(cfg);
  const IncrementSampler sampler(res.warped, cfg.psi);
  res.z.resize(cfg.n, res.warped.rows());
  parallel_for(static_cast<size_t>(cfg.n), [&](size_t i) {
    auto rng = replicate_rng(cfg.seed, static_cast<Eigen::Index>(i));
    const double u = pareto(rng);
    res.z.row(static_cast<Eigen::Index>(i)) = u * sampler.extremal_function(cfg.risk.site_index, rng).transpose();
  });
  res.proposals = cfg.n;
  return res;
}

SimResult simulate_sum_pareto(const SimConfig& cfg) {
  cfg.validate();
  SimResult res;
  res.warped = warped_sites(cfg);
  const IncrementSampler sampler(res.warped, cfg.psi);
  res.z.resize(cfg.n, res.warped.rows());
  parallel_for(static_cast<size_t>(cfg.n), [&](size_t i) {
    auto rng = replicate_rng(cfg.seed, static_cast<Eigen::Index>(i));
    const double u = pareto(rng);
    res.z.row(static_cast<Eigen::Index>(i)) = u * sum_spectral(sampler, rng).transpose();
  });
  res.proposals = cfg.n;
  return res;
}

SimResult simulate_rpareto_rejection(const SimConfig& cfg) {
  cfg.validate();
  SimResult res;
  res.warped = warped_sites(cfg);
  const IncrementSampler sampler(res.warped, cfg.psi);
  const double c = domination_constant(cfg.risk, res.warped.rows());
  res.z.resize(cfg.n, res.warped.rows());
  std::vector<long> tries(static_cast<size_t>(cfg.n), 0);
  parallel_for(static_cast<size_t>(cfg.n), [&](size_t i) {
    auto rng = replicate_rng(cfg.seed, static_cast<Eigen::Index>(i));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (long k = 1;; ++k) {
      const Eigen::VectorXd v = sum_spectral(sampler, rng);
      const double r = evaluate_exact(cfg.risk, v);
      if (unif(rng) * c <= r) {
        tries[i] = k;
        res.z.row(static_cast<Eigen::Index>(i)) = pareto(rng) * (v / r).transpose();
        return;
      }
      if (k >= cfg.max_rejection_tries)
        throw NumericError("rejection sampler: budget of " + std::to_string(cfg.max_rejection_tries) +
                           " proposals exhausted (acceptance rate below " +
                           std::to_string(1.0 / static_cast<double>(cfg.max_rejection_tries)) + ")");
    }
  });
  for (long t : tries) res.proposals += t;
  res.acceptance_rate = static_cast<double>(cfg.n) / static_cast<double>(res.proposals);
  return res;
}

SimResult simulate(const SimConfig& cfg) {
  switch (cfg.risk.kind) {
    case RiskKind::Site: return simulate_site_pareto(cfg);
    case RiskKind::Sum: return simulate_sum_pareto(cfg);
    default: return simulate_rpareto_rejection(cfg);
  }
}

}  // namespace warpex
