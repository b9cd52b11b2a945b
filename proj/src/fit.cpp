#include "warpex/fit.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "warpex/error.hpp"
#include "warpex/parallel.hpp"

namespace warpex {

void adam_step(std::vector<double>& theta, AdamState& state, const std::vector<double>& grad, double lr,
               const AdamHyper& h, const std::string& block) {
  if (grad.size() != theta.size()) throw ValidationError("adam_step: gradient size mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in block " + block);
  if (state.m.size() != theta.size()) {
    state.m.assign(theta.size(), 0.0);
    state.v.assign(theta.size(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (size_t k = 0; k < theta.size(); ++k) {
    state.m[k] = h.beta1 * state.m[k] + (1.0 - h.beta1) * grad[k];
    state.v[k] = h.beta2 * state.v[k] + (1.0 - h.beta2) * grad[k] * grad[k];
    theta[k] -= lr * (state.m[k] / c1) / (std::sqrt(state.v[k] / c2) + h.eps);
  }
}

LossKind loss_kind_from_string(const std::string& s, const std::string& pointer) {
  if (s == "wls") return LossKind::Wls;
  if (s == "gsm") return LossKind::Gsm;
  throw ValidationError(pointer + ": unknown loss '" + s + "' (expected wls or gsm)");
}

std::string to_string(LossKind k) { return k == LossKind::Wls ? "wls" : "gsm"; }

void FitConfig::validate() const {
  if (!(lr_psi > 0.0) || !(lr_warp > 0.0)) throw ValidationError("learning rates must be positive");
  if (max_steps < 0) throw ValidationError("max_steps must be >= 0");
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (reg.alpha < 0.0) throw ValidationError("regulariser alpha must be nonnegative");
  init_psi.validate();
}

FitData FitData::for_events(const Coords& sites, const ExceedanceSet& ex, const FitConfig& cfg) {
  if (ex.dim() != sites.rows())
    throw ValidationError("events have " + std::to_string(ex.dim()) + " sites but " + std::to_string(sites.rows()) +
                          " coordinates were given");
  FitData d;
  d.sites = sites;
  if (cfg.loss == LossKind::Gsm) d.events = GsmEvents::prepare(ex.z, cfg.risk);
  else d.cep = empirical_cep(ex, cfg.weight_scheme);
  return d;
}

LossResult evaluate_fit_loss(const FitData& data, const VariogramParams& psi, const WarpStack& stack,
                             const FitConfig& cfg, bool with_gradient) {
  if (cfg.loss == LossKind::Gsm) {
    if (!data.events) throw ValidationError("GSM fit needs exceedance events");
    return gsm_loss(psi, stack, data.sites, *data.events, with_gradient, cfg.reg);
  }
  if (!data.cep) throw ValidationError("WLS fit needs an empirical CEP matrix");
  return wls_loss(psi, stack, data.sites, *data.cep, with_gradient, cfg.reg);
}

namespace {

struct BlockSlot {
  Block block;
  std::vector<size_t> index;  // into the warp parameter vector (unused for psi)
  AdamState adam;
  double lr_scale = 1.0;
};

}  // namespace

FitResult fit(const FitData& data, const WarpStack& init, const FitConfig& cfg) {
  cfg.validate();
  VariogramParams psi = cfg.init_psi;
  WarpStack stack = init;

  std::vector<BlockSlot> slots;
  if (cfg.fit_psi) slots.push_back({Block::Psi, {}, {}});
  if (cfg.fit_warp) {
    const std::vector<Block> blocks = stack.blocks();
    for (Block b : {Block::Theta, Block::Weights}) {
      BlockSlot s{b, {}, {}};
      for (size_t k = 0; k < blocks.size(); ++k)
        if (blocks[k] == b) s.index.push_back(k);
      if (!s.index.empty()) slots.push_back(std::move(s));
    }
  }

  FitResult res;
  LossResult cur = evaluate_fit_loss(data, psi, stack, cfg, !slots.empty());
  res.psi = psi;
  res.stack = stack;
  res.loss = cur.value;
  std::vector<double> history{cur.value};

  for (int step = 0; step < cfg.max_steps && !slots.empty(); ++step) {
    BlockSlot& slot = slots[static_cast<size_t>(step) % slots.size()];
    const VariogramParams psi_prev = psi;
    const std::vector<double> warp_prev = stack.params();
    if (slot.block == Block::Psi) {
      std::vector<double> theta{psi.raw_phi(), psi.raw_kappa()};
      adam_step(theta, slot.adam, {cur.grad_psi[0], cur.grad_psi[1]}, cfg.lr_psi * slot.lr_scale, cfg.adam, "psi");
      psi = VariogramParams::from_raw(theta[0], theta[1]);
    } else {
      std::vector<double> theta, grad;
      for (size_t k : slot.index) theta.push_back(warp_prev[k]), grad.push_back(cur.grad_warp[k]);
      adam_step(theta, slot.adam, grad, cfg.lr_warp * slot.lr_scale, cfg.adam, to_string(slot.block));
      std::vector<double> all = warp_prev;
      for (size_t k = 0; k < slot.index.size(); ++k) all[slot.index[k]] = theta[k];
      stack.set_params(all);
    }

    LossResult next;
    try {
      next = evaluate_fit_loss(data, psi, stack, cfg, true);
      if (!std::isfinite(next.value) || !next.grad_psi.allFinite() ||
          std::any_of(next.grad_warp.begin(), next.grad_warp.end(), [](double g) { return !std::isfinite(g); }))
        throw NumericError("non-finite loss or gradient");
    } catch (const NumericError&) {
      // Reject the proposal: restore the block and damp its step size.
      psi = psi_prev;
      stack.set_params(warp_prev);
      slot.lr_scale *= 0.5;
      ++res.rejected_steps;
      if (slot.lr_scale < 1e-6)
        throw NumericError("fit diverged at step " + std::to_string(step + 1) + " in block " + to_string(slot.block));
      continue;
    }
    cur = std::move(next);
    res.steps = step + 1;
    if (cur.value < res.loss) {
      res.loss = cur.value;
      res.psi = psi;
      res.stack = stack;
    }
    res.trace.push_back({step + 1, slot.block, cur.value, cur.penalty, res.loss});
    history.push_back(cur.value);
    if (history.size() > static_cast<size_t>(cfg.patience)) {
      const double old = history[history.size() - 1 - static_cast<size_t>(cfg.patience)];
      if (std::abs(cur.value - old) <= cfg.rel_tol * std::max(std::abs(old), 1e-12)) {
        res.converged = true;
        break;
      }
    }
  }
  return res;
}

Eigen::MatrixXd fitted_cep(const VariogramParams& psi, const WarpStack& stack, const Coords& sites) {
  const Coords warped = stack.empty() ? sites : stack.apply(sites).warped;
  Eigen::MatrixXd g = semivariogram_matrix(warped, psi);
  return g.unaryExpr([](double v) { return theoretical_cep(v); });
}

BootstrapMode bootstrap_mode_from_string(const std::string& s, const std::string& pointer) {
  if (s == "fixed_warping") return BootstrapMode::FixedWarping;
  if (s == "reestimated_warping") return BootstrapMode::ReestimatedWarping;
  throw ValidationError(pointer + ": unknown bootstrap mode '" + s + "'");
}

std::string to_string(BootstrapMode m) {
  return m == BootstrapMode::FixedWarping ? "fixed_warping" : "reestimated_warping";
}

BootstrapResult bootstrap(const ExceedanceSet& events, const Coords& sites, const FitResult& baseline,
                          const FitConfig& cfg, const BootstrapConfig& bcfg) {
  if (bcfg.replicates < 2) throw ValidationError("bootstrap: at least 2 replicates are required");
  if (events.count() == 0) throw ValidationError("bootstrap: no events to resample");
  const auto nrep = static_cast<size_t>(bcfg.replicates);
  std::vector<std::optional<std::pair<VariogramParams, Eigen::MatrixXd>>> out(nrep);
  std::vector<std::string> errors(nrep);

  FitConfig rcfg = cfg;
  rcfg.init_psi = baseline.psi;
  rcfg.fit_warp = bcfg.mode == BootstrapMode::ReestimatedWarping;

  parallel_for(nrep, [&](size_t b) {
    std::seed_seq seq{bcfg.seed, static_cast<std::uint64_t>(bcfg.same_resample ? 0 : b)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<Eigen::Index> pick(0, events.count() - 1);
    std::vector<Eigen::Index> rows(static_cast<size_t>(events.count()));
    for (auto& r : rows) r = pick(rng);
    try {
      const ExceedanceSet re = events.resample(rows);
      const FitResult f = fit(FitData::for_events(sites, re, rcfg), baseline.stack, rcfg);
      out[b] = std::make_pair(f.psi, fitted_cep(f.psi, f.stack, sites));
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  });

  BootstrapResult res;
  res.mode = bcfg.mode;
  for (size_t b = 0; b < nrep; ++b) {
    if (out[b]) {
      res.psi.push_back(out[b]->first);
      res.cep.push_back(std::move(out[b]->second));
    } else {
      ++res.failures;
      res.failure_messages.push_back("replicate " + std::to_string(b + 1) + ": " + errors[b]);
    }
  }
  if (res.failures > bcfg.max_failure_fraction * static_cast<double>(nrep) || res.psi.size() < 2)
    throw NumericError("bootstrap: " + std::to_string(res.failures) + " of " + std::to_string(nrep) +
                       " replicate fits failed");

  const double m = static_cast<double>(res.psi.size());
  Eigen::Vector2d mean = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
  for (const auto& p : res.psi) mean += Eigen::Vector2d(p.phi, p.kappa) / m;
  for (const auto& p : res.psi) sq += (Eigen::Vector2d(p.phi, p.kappa) - mean).array().square().matrix();
  res.psi_sd = (sq / (m - 1.0)).cwiseSqrt();

  const Eigen::Index d = sites.rows();
  Eigen::MatrixXd cmean = Eigen::MatrixXd::Zero(d, d), csq = Eigen::MatrixXd::Zero(d, d);
  for (const auto& c : res.cep) cmean += c / m;
  for (const auto& c : res.cep) csq += (c - cmean).array().square().matrix();
  res.cep_sd = (csq / (m - 1.0)).cwiseSqrt();
  return res;
}

}  // namespace warpex
