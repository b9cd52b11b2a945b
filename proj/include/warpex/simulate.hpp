#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include <Eigen/Core>

#include "warpex/dependence.hpp"
#include "warpex/risk.hpp"
#include "warpex/warp.hpp"

namespace warpex {

/// Draws Gaussian increments eps_i - eps_j of the log-Gaussian field on fixed (warped) sites.
/// One Cholesky factor of the covariance relative to site 0 serves every anchor.
class IncrementSampler {
 public:
  IncrementSampler(const Coords& warped, const VariogramParams& psi);

  Eigen::Index size() const { return gamma_.rows(); }
  const Eigen::MatrixXd& gamma() const { return gamma_; }
  double jitter() const { return br_.jitter; }

  /// Increments relative to `anchor`; the anchor component is exactly 0.
  Eigen::VectorXd increments(Eigen::Index anchor, std::mt19937_64& rng) const;
  /// exp(eps_i - eps_j - gamma_ij); equals 1 at the anchor.
  Eigen::VectorXd extremal_function(Eigen::Index anchor, std::mt19937_64& rng) const;

 private:
  Eigen::MatrixXd gamma_;
  BrMatrix br_;
};

Eigen::VectorXd gaussian_increments(const Coords& warped, const VariogramParams& psi, Eigen::Index anchor,
                                    std::mt19937_64& rng);
Eigen::VectorXd extremal_function(const Coords& warped, const VariogramParams& psi, Eigen::Index anchor,
                                  std::mt19937_64& rng);

struct SimConfig {
  Coords sites;
  VariogramParams psi;
  std::optional<WarpStack> truth;  // applied to the sites before simulating
  RiskSpec risk = RiskSpec::site(0);
  Eigen::Index n = 1;
  std::uint64_t seed = 0;
  long max_rejection_tries = 10'000'000;  // proposals per replicate

  void validate() const;
};

struct SimResult {
  Eigen::MatrixXd z;  // n x D
  Coords warped;
  long proposals = 0;
  double acceptance_rate = 1.0;
};

/// Z = U Y with Y anchored at the site functional's index.
SimResult simulate_site_pareto(const SimConfig& cfg);
/// Z = U Y_J / sum(Y_J) with J uniform over sites.
SimResult simulate_sum_pareto(const SimConfig& cfg);
/// Sum-spectral proposals accepted with probability r(V) / (C r_sum(V)), C = sup r / r_sum.
/// The max functional uses the exact maximum.
SimResult simulate_rpareto_rejection(const SimConfig& cfg);
/// Dispatches on cfg.risk: site and sum are sampled directly, the rest by rejection.
SimResult simulate(const SimConfig& cfg);

}  // namespace warpex
