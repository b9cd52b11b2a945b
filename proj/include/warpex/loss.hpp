#pragma once

#include <vector>

#include <Eigen/Core>

#include "warpex/dependence.hpp"
#include "warpex/empirics.hpp"
#include "warpex/risk.hpp"
#include "warpex/warp.hpp"

namespace warpex {

/// Ridge penalty alpha * sum w^2 over SR-RBF layers with resolution >= min_resolution.
struct Regularizer {
  double alpha = 1.0;
  int min_resolution = 2;
};

/// Loss value with gradients in the raw parametrisation: (raw_phi, raw_kappa) and the flat
/// warp parameter vector of the stack.
struct LossResult {
  double value = 0.0;    // includes the penalty
  double penalty = 0.0;
  Eigen::Vector2d grad_psi = Eigen::Vector2d::Zero();
  std::vector<double> grad_warp;
};

/// log of the Brown-Resnick r-Pareto intensity with anchor z_0.
double br_log_intensity(const Eigen::Ref<const Eigen::VectorXd>& z, const BrMatrix& br);

struct LogIntensityDerivatives {
  double value = 0.0;
  Eigen::VectorXd grad;       // d log lambda / d z_i
  Eigen::VectorXd hess_diag;  // d^2 log lambda / d z_i^2
};

LogIntensityDerivatives br_log_intensity_derivatives(const Eigen::Ref<const Eigen::VectorXd>& z, const BrMatrix& br);

/// Gradient-score contribution of one event with weights z_i (1 - exp(1 - r(z))).
/// Throws ValidationError when r(z) < 1.
double gsm_event_score(const Eigen::Ref<const Eigen::VectorXd>& z, const BrMatrix& br, const RiskSpec& risk);

/// Parameter-free parts of the gradient score for a batch of events, computed once per data set.
struct GsmEvents {
  Eigen::MatrixXd log_ratio;  // (D-1) x N: log(z_i / z_0)
  Eigen::MatrixXd c;          // D x N: 2 h (h + z_i exp(1 - r) dr/dz_i)
  Eigen::VectorXd h2;         // N: h^2
  Eigen::VectorXd log_z_terms;  // N: -2 log z_0 - sum_{i>=1} log z_i

  static GsmEvents prepare(const Eigen::MatrixXd& z, const RiskSpec& risk);
  Eigen::Index count() const { return h2.size(); }
  Eigen::Index dim() const { return c.rows(); }
};

/// Sum of event scores given a semivariogram matrix; optionally dL/dgamma (symmetric, zero diagonal).
double gsm_loss_from_gamma(const Eigen::MatrixXd& gamma, const GsmEvents& events, Eigen::MatrixXd* dgamma = nullptr);

/// Weighted least squares on limiting CEPs over valid pairs i < j; optionally dL/dgamma.
double wls_loss_from_gamma(const Eigen::MatrixXd& gamma, const CepMatrix& cep, Eigen::MatrixXd* dgamma = nullptr);

LossResult gsm_loss(const VariogramParams& psi, const WarpStack& stack, const Coords& sites, const GsmEvents& events,
                    bool with_gradient = false, const Regularizer& reg = {});
double gsm_loss(const VariogramParams& psi, const WarpStack& stack, const Coords& sites, const ExceedanceSet& events,
                const RiskSpec& risk);

/// Throws ValidationError when no pair is valid.
LossResult wls_loss(const VariogramParams& psi, const WarpStack& stack, const Coords& sites, const CepMatrix& cep,
                    bool with_gradient = false, const Regularizer& reg = {});

double regularized_loss(double base, const WarpStack& stack, const Regularizer& reg);

/// Chains dL/dgamma through the power variogram, the warped distances and the stack.
void chain_gamma_gradient(const Eigen::MatrixXd& dgamma, const Eigen::MatrixXd& gamma, const Coords& sites,
                          const Coords& warped, const VariogramParams& psi, const WarpStack& stack, LossResult& out);

}  // namespace warpex
