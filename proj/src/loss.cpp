#include "warpex/loss.hpp"

#include <cmath>
#include <numbers>

#include "warpex/error.hpp"

namespace warpex {

namespace {

constexpr double kRiskTolerance = 1e-9;

Eigen::VectorXd z_tilde(const Eigen::Ref<const Eigen::VectorXd>& z, const BrMatrix& br) {
  const Eigen::Index n = br.dim();
  if (z.size() != n + 1) throw ValidationError("event dimension does not match the Brown-Resnick matrix");
  if ((z.array() <= 0.0).any()) throw ValidationError("intensity: z must be positive");
  return (z.tail(n).array() / z[0]).log().matrix() + br.gamma_anchor;
}

}  // namespace

double br_log_intensity(const Eigen::Ref<const Eigen::VectorXd>& z, const BrMatrix& br) {
  const Eigen::VectorXd zt = z_tilde(z, br);
  const Eigen::VectorXd a = br.llt.solve(zt);
  const double n = static_cast<double>(br.dim());
  return -0.5 * br.log_det() - 2.0 * std::log(z[0]) - z.tail(br.dim()).array().log().sum() -
         0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * zt.dot(a);
}

LogIntensityDerivatives br_log_intensity_derivatives(const Eigen::Ref<const Eigen::VectorXd>& z, const BrMatrix& br) {
  const Eigen::Index n = br.dim();
  const Eigen::VectorXd zt = z_tilde(z, br);
  const Eigen::VectorXd a = br.llt.solve(zt);
  const Eigen::MatrixXd q = br.llt.solve(Eigen::MatrixXd::Identity(n, n));
  const double s = a.sum();
  const double t = q.sum();
  LogIntensityDerivatives d;
  d.value = br_log_intensity(z, br);
  d.grad.resize(n + 1);
  d.hess_diag.resize(n + 1);
  d.grad[0] = (-2.0 + s) / z[0];
  d.hess_diag[0] = (2.0 - s - t) / (z[0] * z[0]);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zi = z[i + 1];
    d.grad[i + 1] = (-1.0 - a[i]) / zi;
    d.hess_diag[i + 1] = (1.0 + a[i] - q(i, i)) / (zi * zi);
  }
  return d;
}

GsmEvents GsmEvents::prepare(const Eigen::MatrixXd& z, const RiskSpec& risk) {
  const Eigen::Index nev = z.rows();
  const Eigen::Index d = z.cols();
  if (d < 2) throw ValidationError("gradient score needs at least two sites");
  risk.validate(d);
  GsmEvents ev;
  ev.log_ratio.resize(d - 1, nev);
  ev.c.resize(d, nev);
  ev.h2.resize(nev);
  ev.log_z_terms.resize(nev);
  for (Eigen::Index t = 0; t < nev; ++t) {
    const Eigen::VectorXd zt = z.row(t).transpose();
    if ((zt.array() <= 0.0).any() || !zt.allFinite())
      throw ValidationError("event " + std::to_string(t + 1) + " has non-positive components");
    const double r = evaluate(risk, zt);
    if (r < 1.0 - kRiskTolerance)
      throw ValidationError("event " + std::to_string(t + 1) + " has r(z) = " + std::to_string(r) + " < 1");
    const double e = std::exp(1.0 - r);
    const double h = 1.0 - e;
    const Eigen::VectorXd dr = gradient(risk, zt);
    ev.c.col(t) = 2.0 * h * (h + zt.array() * e * dr.array());
    ev.h2[t] = h * h;
    ev.log_ratio.col(t) = (zt.tail(d - 1).array() / zt[0]).log();
    ev.log_z_terms[t] = -2.0 * std::log(zt[0]) - zt.tail(d - 1).array().log().sum();
  }
  return ev;
}

double gsm_event_score(const Eigen::Ref<const Eigen::VectorXd>& z, const BrMatrix& br, const RiskSpec& risk) {
  const GsmEvents ev = GsmEvents::prepare(z.transpose(), risk);
  const Eigen::Index n = br.dim();
  if (ev.dim() != n + 1) throw ValidationError("event dimension does not match the Brown-Resnick matrix");
  const Eigen::VectorXd zt = ev.log_ratio.col(0) + br.gamma_anchor;
  const Eigen::VectorXd a = br.llt.solve(zt);
  const Eigen::MatrixXd q = br.llt.solve(Eigen::MatrixXd::Identity(n, n));
  const double h2 = ev.h2[0];
  const Eigen::VectorXd c = ev.c.col(0);
  const double s = a.sum();
  double score = c[0] * (-2.0 + s) + h2 * (2.0 - s - q.sum() + 0.5 * (s - 2.0) * (s - 2.0));
  for (Eigen::Index i = 0; i < n; ++i)
    score += c[i + 1] * (-1.0 - a[i]) + h2 * (1.0 + a[i] - q(i, i) + 0.5 * (1.0 + a[i]) * (1.0 + a[i]));
  return score;
}

double gsm_loss_from_gamma(const Eigen::MatrixXd& gamma, const GsmEvents& ev, Eigen::MatrixXd* dgamma) {
  const Eigen::Index d = gamma.rows();
  if (ev.dim() != d) throw ValidationError("gsm_loss: event dimension does not match the site count");
  if (dgamma) dgamma->setZero(d, d);
  if (ev.count() == 0) return 0.0;
  const BrMatrix br = br_matrix_from_gamma(gamma);
  const Eigen::Index n = d - 1;
  const Eigen::MatrixXd q = br.llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd zt = ev.log_ratio.colwise() + br.gamma_anchor;  // n x N
  const Eigen::MatrixXd a = q * zt;
  const Eigen::RowVectorXd s = a.colwise().sum();
  const double tsum = q.sum();
  const double qtrace = q.trace();
  const auto c0 = ev.c.row(0).array();
  const auto cr = ev.c.bottomRows(n).array();
  const Eigen::ArrayXd h2 = ev.h2.array();

  const Eigen::ArrayXXd ap1 = a.array() + 1.0;
  const Eigen::ArrayXd sm2 = s.transpose().array() - 2.0;
  // Per-event scores; the q_i terms sum to the trace of Q.
  const Eigen::ArrayXd per_event =
      (-(cr * ap1).colwise().sum().transpose()) + h2 * ((ap1 + 0.5 * ap1.square()).colwise().sum().transpose() - qtrace) +
      c0.transpose() * sm2 + h2 * (-sm2 - tsum + 0.5 * sm2.square());
  const double total = per_event.sum();
  if (!std::isfinite(total)) throw NumericError("gsm_loss: non-finite value");
  if (!dgamma) return total;

  // u_it = d score_t / d a_it.
  Eigen::ArrayXXd u = -cr + (a.array() + 2.0).rowwise() * h2.transpose();
  u.rowwise() += (c0 + h2.transpose() * (s.array() - 3.0));
  const double h2sum = h2.sum();
  Eigen::MatrixXd gq = u.matrix() * zt.transpose();
  gq.diagonal().array() -= h2sum;
  gq.array() -= h2sum;
  const Eigen::MatrixXd m = -q * gq * q;  // dL / dSigma
  const Eigen::VectorXd direct = q * u.matrix().rowwise().sum();

  Eigen::MatrixXd& g = *dgamma;
  const Eigen::VectorXd anchor = m.rowwise().sum() + m.colwise().sum().transpose() + direct;
  for (Eigen::Index k = 0; k < n; ++k) {
    g(k + 1, 0) = g(0, k + 1) = anchor[k];
    for (Eigen::Index l = k + 1; l < n; ++l) g(k + 1, l + 1) = g(l + 1, k + 1) = -(m(k, l) + m(l, k));
  }
  return total;
}

double wls_loss_from_gamma(const Eigen::MatrixXd& gamma, const CepMatrix& cep, Eigen::MatrixXd* dgamma) {
  const Eigen::Index d = gamma.rows();
  if (cep.dim() != d) throw ValidationError("wls_loss: CEP matrix dimension does not match the site count");
  if (dgamma) dgamma->setZero(d, d);
  double total = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j + 1; i < d; ++i) {
      if (!cep.valid(i, j)) continue;
      ++used;
      const double resid = theoretical_cep(gamma(i, j)) - cep.pi(i, j);
      total += cep.weight(i, j) * resid * resid;
      if (dgamma) {
        const double g = 2.0 * cep.weight(i, j) * resid * theoretical_cep_derivative(gamma(i, j));
        (*dgamma)(i, j) = (*dgamma)(j, i) = g;
      }
    }
  if (used == 0) throw ValidationError("wls_loss: every CEP pair is missing");
  return total;
}

void chain_gamma_gradient(const Eigen::MatrixXd& dgamma, const Eigen::MatrixXd& gamma, const Coords& sites,
                          const Coords& warped, const VariogramParams& psi, const WarpStack& stack, LossResult& out) {
  const Eigen::Index d = gamma.rows();
  double gphi = 0.0, gkappa = 0.0;
  Coords gw = Coords::Zero(d, 2);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j + 1; i < d; ++i) {
      const double g = dgamma(i, j);
      if (g == 0.0) continue;
      const double gm = gamma(i, j);
      const Eigen::RowVector2d diff = warped.row(i) - warped.row(j);
      const double dist = diff.norm();
      gphi += g * (-psi.kappa * gm / psi.phi);
      gkappa += g * gm * std::log(dist / psi.phi);
      const Eigen::RowVector2d gd = g * psi.kappa * gm / (dist * dist) * diff;
      gw.row(i) += gd;
      gw.row(j) -= gd;
    }
  out.grad_psi = Eigen::Vector2d(gphi * psi.dphi_draw(), gkappa * psi.dkappa_draw());
  std::vector<double> gwarp = stack.empty() ? std::vector<double>{} : stack.backward(sites, gw);
  if (out.grad_warp.size() == gwarp.size()) {
    for (size_t k = 0; k < gwarp.size(); ++k) out.grad_warp[k] += gwarp[k];
  } else {
    out.grad_warp = std::move(gwarp);
  }
}

namespace {

template <class Core>
LossResult evaluate_loss(const VariogramParams& psi, const WarpStack& stack, const Coords& sites, bool with_gradient,
                         const Regularizer& reg, Core core) {
  const Coords warped = stack.empty() ? sites : stack.apply(sites).warped;
  const Eigen::MatrixXd gamma = semivariogram_matrix(warped, psi);
  LossResult out;
  Eigen::MatrixXd dgamma;
  out.value = core(gamma, with_gradient ? &dgamma : nullptr);
  std::vector<double> pen_grad;
  out.penalty = reg.alpha * stack.srrbf_weight_penalty(reg.min_resolution, with_gradient ? &pen_grad : nullptr);
  out.value += out.penalty;
  if (with_gradient) {
    out.grad_warp.assign(stack.param_count(), 0.0);
    for (size_t k = 0; k < pen_grad.size(); ++k) out.grad_warp[k] = reg.alpha * pen_grad[k];
    chain_gamma_gradient(dgamma, gamma, sites, warped, psi, stack, out);
  }
  if (!std::isfinite(out.value)) throw NumericError("loss evaluated to a non-finite value");
  return out;
}

}  // namespace

LossResult gsm_loss(const VariogramParams& psi, const WarpStack& stack, const Coords& sites, const GsmEvents& events,
                    bool with_gradient, const Regularizer& reg) {
  return evaluate_loss(psi, stack, sites, with_gradient, reg, [&](const Eigen::MatrixXd& g, Eigen::MatrixXd* dg) {
    return gsm_loss_from_gamma(g, events, dg);
  });
}

double gsm_loss(const VariogramParams& psi, const WarpStack& stack, const Coords& sites, const ExceedanceSet& events,
                const RiskSpec& risk) {
  if (events.count() == 0) return 0.0;
  return gsm_loss(psi, stack, sites, GsmEvents::prepare(events.z, risk), false, Regularizer{0.0}).value;
}

LossResult wls_loss(const VariogramParams& psi, const WarpStack& stack, const Coords& sites, const CepMatrix& cep,
                    bool with_gradient, const Regularizer& reg) {
  return evaluate_loss(psi, stack, sites, with_gradient, reg, [&](const Eigen::MatrixXd& g, Eigen::MatrixXd* dg) {
    return wls_loss_from_gamma(g, cep, dg);
  });
}

double regularized_loss(double base, const WarpStack& stack, const Regularizer& reg) {
  if (reg.alpha < 0.0) throw ValidationError("regulariser alpha must be nonnegative");
  if (reg.alpha == 0.0) return base;
  return base + reg.alpha * stack.srrbf_weight_penalty(reg.min_resolution);
}

}  // namespace warpex
