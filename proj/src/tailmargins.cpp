#include "warpex/tailmargins.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/tools/minima.hpp>

#include "warpex/empirics.hpp"
#include "warpex/error.hpp"

namespace warpex {

double gpd_cdf(double y, double tau, double xi) {
  if (!(tau > 0.0)) throw ValidationError("gpd_cdf: tau must be positive");
  if (y <= 0.0) return 0.0;
  if (std::abs(xi) < kGpdXiZero) return -std::expm1(-y / tau);
  const double t = 1.0 + xi * y / tau;
  if (t <= 0.0) return 1.0;
  return -std::expm1(-std::log1p(xi * y / tau) / xi);
}

double gpd_quantile(double p, double tau, double xi) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("gpd_quantile: p must lie in [0, 1)");
  const double l = -std::log1p(-p);  // -log(1 - p)
  if (std::abs(xi) < kGpdXiZero) return tau * l;
  return tau * std::expm1(xi * l) / xi;
}

double gpd_log_likelihood(const std::vector<double>& y, double tau, double xi) {
  const double n = static_cast<double>(y.size());
  double s = 0.0;
  for (double v : y) {
    if (std::abs(xi) < kGpdXiZero) {
      s += v / tau;
    } else {
      const double t = xi * v / tau;
      if (t <= -1.0) return -std::numeric_limits<double>::infinity();
      s += (1.0 + 1.0 / xi) * std::log1p(t);
    }
  }
  return -n * std::log(tau) - s;
}

namespace {

// Profile log-likelihood in theta = xi / tau; xi(theta) = mean log(1 + theta y).
struct Profile {
  const std::vector<double>& y;
  double mean;

  double k(double theta) const {
    double s = 0.0;
    for (double v : y) s += std::log1p(theta * v);
    return s / static_cast<double>(y.size());
  }
  double operator()(double theta) const {
    const double n = static_cast<double>(y.size());
    if (std::abs(theta) * mean < 1e-10) return -n * std::log(mean) - n;
    const double kk = k(theta);
    if (!std::isfinite(kk) || kk < -1.0) return -std::numeric_limits<double>::infinity();
    return -n * std::log(kk / theta) - n * kk - n;
  }
};

}  // namespace

GpdFit fit_gpd(const std::vector<double>& excesses) {
  if (static_cast<Eigen::Index>(excesses.size()) < kMinGpdExcesses)
    throw ValidationError("fit_gpd: need at least 30 excesses, got " + std::to_string(excesses.size()));
  for (double v : excesses)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("fit_gpd: excesses must be finite and nonnegative");
  const auto [lo_it, hi_it] = std::minmax_element(excesses.begin(), excesses.end());
  if (*hi_it - *lo_it <= 0.0) throw ValidationError("fit_gpd: all excesses are equal");
  const double ymax = *hi_it;
  const double n = static_cast<double>(excesses.size());
  const double mean = std::accumulate(excesses.begin(), excesses.end(), 0.0) / n;
  double var = 0.0;
  for (double v : excesses) var += (v - mean) * (v - mean);
  var /= n - 1.0;

  const Profile prof{excesses, mean};
  // Grid in x = theta * ymax over (-1, 1e4), plus the method-of-moments start.
  std::vector<double> grid;
  for (int i = 1; i < 200; ++i) grid.push_back(-1.0 + std::pow(10.0, -6.0 + 6.0 * i / 200.0));
  for (int i = 0; i <= 200; ++i) grid.push_back(std::pow(10.0, -6.0 + 10.0 * i / 200.0));
  const double xi0 = 0.5 * (1.0 - mean * mean / var);
  const double tau0 = 0.5 * mean * (mean * mean / var + 1.0);
  if (tau0 > 0.0 && xi0 / tau0 * ymax > -1.0) grid.push_back(xi0 / tau0 * ymax);
  std::sort(grid.begin(), grid.end());

  size_t best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < grid.size(); ++i) {
    const double v = prof(grid[i] / ymax);
    if (v > best_val) best_val = v, best = i;
  }
  if (!std::isfinite(best_val) || best == grid.size() - 1)
    throw NumericError("fit_gpd: profile likelihood has no interior maximum");
  const double lo = best == 0 ? -1.0 + 1e-9 : grid[best - 1];
  const double hi = grid[best + 1];

  std::uintmax_t iters = 200;
  const auto res = boost::math::tools::brent_find_minima([&](double x) { return -prof(x / ymax); }, lo, hi,
                                                         std::numeric_limits<double>::digits / 2, iters);
  const double theta = res.first / ymax;
  GpdFit fit;
  fit.n_exceed = static_cast<Eigen::Index>(excesses.size());
  fit.converged = iters < 200;
  if (std::abs(theta) * mean < 1e-10) {
    fit.xi = 0.0;
    fit.tau = mean;
  } else {
    fit.xi = prof.k(theta);
    fit.tau = fit.xi / theta;
  }
  if (!fit.converged || !(fit.tau > 0.0))
    throw NumericError("fit_gpd: optimiser did not converge (theta = " + std::to_string(theta) + ")");
  fit.log_likelihood = gpd_log_likelihood(excesses, fit.tau, fit.xi);

  std::vector<double> pit(excesses.size());
  std::transform(excesses.begin(), excesses.end(), pit.begin(), [&](double v) { return gpd_cdf(v, fit.tau, fit.xi); });
  const KsResult ks = ks_test(pit);
  fit.ks_distance = ks.distance;
  fit.ks_p = ks.p_value;
  return fit;
}

double SiteMargin::cdf(double y) const {
  const double denom = static_cast<double>(sorted.size()) + 1.0;
  if (y <= u) return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), y) - sorted.begin()) / denom;
  const double fu = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), u) - sorted.begin()) / denom;
  return fu + (1.0 - fu) * gpd_cdf(y - u, gpd.tau, gpd.xi);
}

SiteMargin fit_site_margin(const std::vector<double>& values, double quantile) {
  SiteMargin m;
  m.sorted = values;
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError("fit_site_margin: non-finite observation");
  std::sort(m.sorted.begin(), m.sorted.end());
  m.u = quantile_type7(m.sorted, quantile);
  std::vector<double> excess;
  for (double v : m.sorted)
    if (v > m.u) excess.push_back(v - m.u);
  m.gpd = fit_gpd(excess);
  m.gpd.u = m.u;
  return m;
}

std::vector<double> to_pareto_scale(const std::vector<double>& y, const SiteMargin& margin) {
  std::vector<double> x(y.size());
  std::transform(y.begin(), y.end(), x.begin(), [&](double v) { return margin.pareto(v); });
  return x;
}

double kolmogorov_sf(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

double ks_p_value(double d, double n_eff) {
  const double s = std::sqrt(n_eff);
  return kolmogorov_sf((s + 0.12 + 0.11 / s) * d);
}

}  // namespace

KsResult ks_test(const std::vector<double>& u_values) {
  if (u_values.empty()) throw ValidationError("ks_test: empty sample");
  std::vector<double> u = u_values;
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    const double f = std::clamp(u[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return {d, ks_p_value(d, n)};
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return {d, ks_p_value(d, na * nb / (na + nb))};
}

}  // namespace warpex
