#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "warpex/dependence.hpp"
#include "warpex/empirics.hpp"
#include "warpex/loss.hpp"
#include "warpex/risk.hpp"
#include "warpex/warp.hpp"

namespace warpex {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
};

/// One bias-corrected Adam update of `theta` in place. Throws NumericError naming `block`
/// when the gradient is not finite.
void adam_step(std::vector<double>& theta, AdamState& state, const std::vector<double>& grad, double lr,
               const AdamHyper& hyper = {}, const std::string& block = "parameters");

enum class LossKind { Wls, Gsm };

LossKind loss_kind_from_string(const std::string& s, const std::string& pointer = "/loss");
std::string to_string(LossKind k);

struct FitConfig {
  LossKind loss = LossKind::Gsm;
  RiskSpec risk = RiskSpec::sum();  // functional inside the gradient-score weights
  WeightScheme weight_scheme = WeightScheme::OneOverTwoMinusPi;
  double lr_psi = 0.01;
  double lr_warp = 0.005;
  AdamHyper adam;
  int max_steps = 20000;
  int patience = 50;  // steps over which the relative loss change is measured
  double rel_tol = 1e-7;
  Regularizer reg;
  VariogramParams init_psi = VariogramParams::from_raw(0.0, 0.0);
  bool fit_psi = true;
  bool fit_warp = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Training data: sites plus either events (GSM) or an empirical CEP matrix (WLS).
struct FitData {
  Coords sites;
  std::optional<GsmEvents> events;
  std::optional<CepMatrix> cep;

  static FitData for_events(const Coords& sites, const ExceedanceSet& ex, const FitConfig& cfg);
};

struct TraceRow {
  int step = 0;
  Block block = Block::Psi;
  double loss = 0.0;
  double penalty = 0.0;
  double best = 0.0;
};

struct FitResult {
  VariogramParams psi;
  WarpStack stack;
  double loss = 0.0;
  std::vector<TraceRow> trace;
  bool converged = false;
  int steps = 0;
  int rejected_steps = 0;
};

LossResult evaluate_fit_loss(const FitData& data, const VariogramParams& psi, const WarpStack& stack,
                             const FitConfig& cfg, bool with_gradient);

/// Block-coordinate Adam over psi -> Theta -> W (empty blocks skipped). Returns the best state seen.
FitResult fit(const FitData& data, const WarpStack& init, const FitConfig& cfg);

/// Limiting model CEPs between all pairs of `sites` under the fitted model.
Eigen::MatrixXd fitted_cep(const VariogramParams& psi, const WarpStack& stack, const Coords& sites);

enum class BootstrapMode { FixedWarping, ReestimatedWarping };

BootstrapMode bootstrap_mode_from_string(const std::string& s, const std::string& pointer = "/mode");
std::string to_string(BootstrapMode m);

struct BootstrapConfig {
  int replicates = 30;
  BootstrapMode mode = BootstrapMode::FixedWarping;
  std::uint64_t seed = 0;
  bool same_resample = false;  // every replicate draws the same resample
  double max_failure_fraction = 0.2;
};

struct BootstrapResult {
  BootstrapMode mode = BootstrapMode::FixedWarping;
  std::vector<VariogramParams> psi;
  std::vector<Eigen::MatrixXd> cep;  // fitted CEPs of each successful replicate
  Eigen::Vector2d psi_sd = Eigen::Vector2d::Zero();
  Eigen::MatrixXd cep_sd;
  int failures = 0;
  std::vector<std::string> failure_messages;
};

/// Resamples events with replacement and refits, warm-starting from `baseline`. In fixed-warping
/// mode only psi is refitted. Throws NumericError when more than the allowed fraction fails.
BootstrapResult bootstrap(const ExceedanceSet& events, const Coords& sites, const FitResult& baseline,
                          const FitConfig& cfg, const BootstrapConfig& bcfg);

}  // namespace warpex
