#include "warpex/warp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "warpex/error.hpp"

namespace warpex {

using nlohmann::json;

namespace {

constexpr double kAwKnotSpan = 0.4;
constexpr double kAwSteepness = 10.0;
constexpr double kAwSmallWeight = 1e-3;
constexpr double kMtPoleEps = 1e-10;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double weight_span() { return (rbf_weight_upper() - kRbfWeightMargin) - (kRbfWeightLower + kRbfWeightMargin); }

// One layer of the composition; SR-RBF units contribute one layer per RBF.
struct LayerRef {
  size_t unit;
  int sub;
  size_t offset;
};

size_t unit_param_count(const WarpUnit& u) {
  return std::visit(
      [](const auto& x) -> size_t {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, AwUnit>) return x.raw_weights.size();
        else if constexpr (std::is_same_v<T, RbfUnit>) return 4;
        else if constexpr (std::is_same_v<T, SrRbfUnit>) return x.layers.size();
        else return 8;
      },
      u);
}

const RbfUnit* rbf_layer(const WarpUnit& u, int sub) {
  if (const auto* r = std::get_if<RbfUnit>(&u)) return r;
  if (const auto* s = std::get_if<SrRbfUnit>(&u)) return &s->layers[static_cast<size_t>(sub)];
  return nullptr;
}

void forward_layer(const WarpUnit& u, int sub, const Coords& in, Coords& out) {
  out = in;
  if (const auto* aw = std::get_if<AwUnit>(&u)) {
    for (Eigen::Index i = 0; i < in.rows(); ++i) out(i, aw->axis) = aw->map(in(i, aw->axis));
    return;
  }
  if (const auto* mt = std::get_if<MtUnit>(&u)) {
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      const std::complex<double> z(in(i, 0), in(i, 1));
      const std::complex<double> den = mt->a[2] * z + mt->a[3];
      if (std::abs(den) < kMtPoleEps)
        throw NumericError("Moebius unit: site " + std::to_string(i + 1) + " lies on the pole");
      const std::complex<double> w = (mt->a[0] * z + mt->a[1]) / den;
      out(i, 0) = w.real();
      out(i, 1) = w.imag();
    }
    return;
  }
  const RbfUnit& r = *rbf_layer(u, sub);
  const double b = r.rate();
  const double w = r.weight();
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    const double vx = in(i, 0) - r.center.x();
    const double vy = in(i, 1) - r.center.y();
    const double e = w * std::exp(-b * (vx * vx + vy * vy));
    out(i, 0) = in(i, 0) + e * vx;
    out(i, 1) = in(i, 1) + e * vy;
  }
}

// Pulls grad_out back through one layer; accumulates parameter gradients into `gp`
// (already offset to the owning unit's parameter block).
void backward_layer(const WarpUnit& u, int sub, const Coords& in, const Coords& grad_out, Coords& grad_in,
                    std::span<double> gp) {
  grad_in = grad_out;
  if (const auto* aw = std::get_if<AwUnit>(&u)) {
    const int k = aw->axis;
    const std::vector<double> w = aw->weights();
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      const double s = in(i, k);
      const double g = grad_out(i, k);
      grad_in(i, k) = g * aw->slope(s);
      gp[0] += g * w[0] * s;
      for (size_t j = 0; j < aw->knots.size(); ++j)
        gp[j + 1] += g * w[j + 1] * sigmoid(aw->steepness[j] * (s - aw->knots[j]));
    }
    return;
  }
  if (const auto* mt = std::get_if<MtUnit>(&u)) {
    const std::complex<double> I(0.0, 1.0);
    const std::complex<double> det = mt->determinant();
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      const std::complex<double> z(in(i, 0), in(i, 1));
      const std::complex<double> den = mt->a[2] * z + mt->a[3];
      const std::complex<double> w = (mt->a[0] * z + mt->a[1]) / den;
      const std::complex<double> gc(grad_out(i, 0), grad_out(i, 1));
      const std::complex<double> gcc = std::conj(gc);
      const std::complex<double> fz = det / (den * den);
      grad_in(i, 0) = (gcc * fz).real();
      grad_in(i, 1) = (gcc * I * fz).real();
      const std::array<std::complex<double>, 4> fa{z / den, 1.0 / den, -z * w / den, -w / den};
      for (size_t k = 0; k < 4; ++k) {
        gp[2 * k] += (gcc * fa[k]).real();
        gp[2 * k + 1] += (gcc * I * fa[k]).real();
      }
    }
    return;
  }
  const RbfUnit& r = *rbf_layer(u, sub);
  const bool single = std::holds_alternative<RbfUnit>(u);
  const double b = r.rate();
  const double w = r.weight();
  const double dw = r.weight_derivative();
  double gcx = 0.0, gcy = 0.0, gb = 0.0, gw = 0.0;
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    const double vx = in(i, 0) - r.center.x();
    const double vy = in(i, 1) - r.center.y();
    const double r2 = vx * vx + vy * vy;
    const double e = std::exp(-b * r2);
    const double gx = grad_out(i, 0);
    const double gy = grad_out(i, 1);
    const double vg = vx * gx + vy * gy;
    // J = I + w e (I - 2 b v v^T), symmetric.
    const double jx = w * e * (gx - 2.0 * b * vx * vg);
    const double jy = w * e * (gy - 2.0 * b * vy * vg);
    grad_in(i, 0) = gx + jx;
    grad_in(i, 1) = gy + jy;
    gcx -= jx;
    gcy -= jy;
    gb -= w * e * r2 * vg;
    gw += e * vg;
  }
  if (single) {
    gp[0] += gcx;
    gp[1] += gcy;
    gp[2] += gb * b;
    gp[3] += gw * dw;
  } else {
    gp[static_cast<size_t>(sub)] += gw * dw;
  }
}

struct RescaleTape {
  AffineRecord record;
  std::array<Eigen::Index, 2> argmin{0, 0};
  std::array<Eigen::Index, 2> argmax{0, 0};
};

RescaleTape make_rescale(const Coords& xy) {
  RescaleTape t;
  t.record = unit_square_record(xy);
  for (int k = 0; k < 2; ++k) {
    xy.col(k).minCoeff(&t.argmin[k]);
    xy.col(k).maxCoeff(&t.argmax[k]);
  }
  return t;
}

// Gradient of y = (x - lo) / (hi - lo) - 0.5 with lo, hi the column extremes of x.
void backward_rescale(const RescaleTape& t, const Coords& x, const Coords& grad_out, Coords& grad_in) {
  grad_in.resize(x.rows(), 2);
  for (int k = 0; k < 2; ++k) {
    const double range = 1.0 / t.record.scale[k];
    const double lo = x(t.argmin[k], k);
    double g_lo = 0.0, g_hi = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double g = grad_out(i, k);
      const double rel = (x(i, k) - lo) / (range * range);
      grad_in(i, k) = g / range;
      g_lo += g * (rel - 1.0 / range);
      g_hi -= g * rel;
    }
    grad_in(t.argmin[k], k) += g_lo;
    grad_in(t.argmax[k], k) += g_hi;
  }
}

std::vector<LayerRef> layer_refs(const std::vector<WarpUnit>& units) {
  std::vector<LayerRef> refs;
  size_t offset = 0;
  for (size_t u = 0; u < units.size(); ++u) {
    if (const auto* s = std::get_if<SrRbfUnit>(&units[u])) {
      for (size_t l = 0; l < s->layers.size(); ++l) refs.push_back({u, static_cast<int>(l), offset});
    } else {
      refs.push_back({u, 0, offset});
    }
    offset += unit_param_count(units[u]);
  }
  return refs;
}

bool rescales_after(RescalePolicy policy, size_t layer, size_t n_layers) {
  return policy == RescalePolicy::AfterEachUnit || layer + 1 == n_layers;
}

}  // namespace

std::string to_string(Block b) {
  switch (b) {
    case Block::Psi: return "psi";
    case Block::Theta: return "theta";
    case Block::Weights: return "weights";
    case Block::Fixed: return "fixed";
  }
  return "?";
}

std::string to_string(RescalePolicy p) {
  return p == RescalePolicy::AfterEachUnit ? "after_each_unit" : "final_only";
}

RescalePolicy rescale_policy_from_string(const std::string& s) {
  if (s == "after_each_unit") return RescalePolicy::AfterEachUnit;
  if (s == "final_only") return RescalePolicy::FinalOnly;
  throw ValidationError("unknown rescale policy '" + s + "'");
}

// ---- AW ---------------------------------------------------------------------

AwUnit AwUnit::identity(int axis, int m) {
  if (axis != 0 && axis != 1) throw ValidationError("AW unit: axis must be 1 or 2");
  if (m < 1) throw ValidationError("AW unit: basis count must be >= 1");
  AwUnit u;
  u.axis = axis;
  const int nk = m - 1;
  for (int j = 0; j < nk; ++j) {
    u.knots.push_back(nk == 1 ? 0.0 : -kAwKnotSpan + 2.0 * kAwKnotSpan * j / (nk - 1));
    u.steepness.push_back(kAwSteepness);
  }
  u.raw_weights.assign(static_cast<size_t>(m), std::log(kAwSmallWeight));
  u.raw_weights[0] = 0.0;
  return u;
}

std::vector<double> AwUnit::weights() const {
  std::vector<double> w(raw_weights.size());
  std::transform(raw_weights.begin(), raw_weights.end(), w.begin(), [](double r) { return std::exp(r); });
  return w;
}

double AwUnit::map(double s) const {
  double v = std::exp(raw_weights[0]) * s;
  for (size_t j = 0; j < knots.size(); ++j)
    v += std::exp(raw_weights[j + 1]) * sigmoid(steepness[j] * (s - knots[j]));
  return v;
}

double AwUnit::slope(double s) const {
  double v = std::exp(raw_weights[0]);
  for (size_t j = 0; j < knots.size(); ++j) {
    const double sg = sigmoid(steepness[j] * (s - knots[j]));
    v += std::exp(raw_weights[j + 1]) * steepness[j] * sg * (1.0 - sg);
  }
  return v;
}

// ---- RBF --------------------------------------------------------------------

double rbf_weight_upper() { return std::exp(1.5) / 2.0; }

double rbf_weight_from_raw(double raw) { return kRbfWeightLower + kRbfWeightMargin + weight_span() * sigmoid(raw); }

double rbf_raw_from_weight(double w) {
  const double p = (w - kRbfWeightLower - kRbfWeightMargin) / weight_span();
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("RBF weight outside the injectivity interval");
  return std::log(p / (1.0 - p));
}

RbfUnit RbfUnit::identity(const Eigen::Vector2d& center, double rate) { return with_weight(center, rate, 0.0); }

RbfUnit RbfUnit::with_weight(const Eigen::Vector2d& center, double rate, double weight) {
  if (!(rate > 0.0)) throw ValidationError("RBF unit: rate must be positive");
  RbfUnit u;
  u.center = center;
  u.raw_rate = std::log(rate);
  u.raw_weight = rbf_raw_from_weight(weight);
  return u;
}

RbfUnit RbfUnit::unconstrained_weight(const Eigen::Vector2d& center, double rate, double weight) {
  RbfUnit u = identity(center, rate);
  u.unconstrained = true;
  u.raw_weight = weight;
  return u;
}

double RbfUnit::rate() const { return std::exp(raw_rate); }

double RbfUnit::weight() const { return unconstrained ? raw_weight : rbf_weight_from_raw(raw_weight); }

double RbfUnit::weight_derivative() const {
  if (unconstrained) return 1.0;
  const double s = sigmoid(raw_weight);
  return weight_span() * s * (1.0 - s);
}

Eigen::Vector2d RbfUnit::map(const Eigen::Vector2d& s) const {
  const Eigen::Vector2d v = s - center;
  return s + weight() * v * std::exp(-rate() * v.squaredNorm());
}

double SrRbfUnit::layer_rate(int resolution) {
  const double g = std::pow(3.0, resolution) - 1.0;
  return 2.0 * g * g;
}

SrRbfUnit SrRbfUnit::identity(int resolution) {
  if (resolution < 1) throw ValidationError("SR-RBF unit: resolution must be >= 1");
  SrRbfUnit u;
  u.resolution = resolution;
  const int side = static_cast<int>(std::lround(std::pow(3.0, resolution)));
  const double rate = layer_rate(resolution);
  for (int iy = 0; iy < side; ++iy)
    for (int ix = 0; ix < side; ++ix) {
      const Eigen::Vector2d c(-0.5 + static_cast<double>(ix) / (side - 1), -0.5 + static_cast<double>(iy) / (side - 1));
      u.layers.push_back(RbfUnit::identity(c, rate));
    }
  return u;
}

std::complex<double> MtUnit::map(std::complex<double> z) const { return (a[0] * z + a[1]) / (a[2] * z + a[3]); }

std::string unit_type_name(const WarpUnit& u) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, AwUnit>) return "aw";
        else if constexpr (std::is_same_v<T, RbfUnit>) return "rbf";
        else if constexpr (std::is_same_v<T, SrRbfUnit>) return "srrbf";
        else return "mt";
      },
      u);
}

// ---- stack ------------------------------------------------------------------

WarpStack::WarpStack(std::vector<WarpUnit> units, RescalePolicy policy)
    : units_(std::move(units)), frozen_(units_.size(), false), policy_(policy) {
  for (const auto& u : units_)
    if (const auto* mt = std::get_if<MtUnit>(&u); mt && std::abs(mt->determinant()) == 0.0)
      throw ValidationError("Moebius unit: a1 a4 - a2 a3 must be non-zero");
}

void WarpStack::freeze_all(bool value) { std::fill(frozen_.begin(), frozen_.end(), value); }

int WarpStack::depth() const { return static_cast<int>(layer_refs(units_).size()); }

size_t WarpStack::param_count() const {
  size_t n = 0;
  for (const auto& u : units_) n += unit_param_count(u);
  return n;
}

std::vector<double> WarpStack::params() const {
  std::vector<double> p;
  p.reserve(param_count());
  for (const auto& u : units_) {
    if (const auto* aw = std::get_if<AwUnit>(&u)) {
      p.insert(p.end(), aw->raw_weights.begin(), aw->raw_weights.end());
    } else if (const auto* r = std::get_if<RbfUnit>(&u)) {
      p.insert(p.end(), {r->center.x(), r->center.y(), r->raw_rate, r->raw_weight});
    } else if (const auto* s = std::get_if<SrRbfUnit>(&u)) {
      for (const auto& l : s->layers) p.push_back(l.raw_weight);
    } else {
      for (const auto& c : std::get<MtUnit>(u).a) p.insert(p.end(), {c.real(), c.imag()});
    }
  }
  return p;
}

void WarpStack::set_params(std::span<const double> values) {
  if (values.size() != param_count()) throw ValidationError("WarpStack::set_params: size mismatch");
  size_t k = 0;
  for (auto& u : units_) {
    if (auto* aw = std::get_if<AwUnit>(&u)) {
      for (auto& w : aw->raw_weights) w = values[k++];
    } else if (auto* r = std::get_if<RbfUnit>(&u)) {
      r->center = Eigen::Vector2d(values[k], values[k + 1]);
      r->raw_rate = values[k + 2];
      r->raw_weight = values[k + 3];
      k += 4;
    } else if (auto* s = std::get_if<SrRbfUnit>(&u)) {
      for (auto& l : s->layers) l.raw_weight = values[k++];
    } else {
      for (auto& c : std::get<MtUnit>(u).a) {
        c = {values[k], values[k + 1]};
        k += 2;
      }
    }
  }
}

std::vector<Block> WarpStack::blocks() const {
  std::vector<Block> b;
  for (size_t i = 0; i < units_.size(); ++i) {
    const auto& u = units_[i];
    const size_t n = unit_param_count(u);
    if (frozen_[i]) {
      b.insert(b.end(), n, Block::Fixed);
    } else if (std::holds_alternative<RbfUnit>(u)) {
      b.insert(b.end(), {Block::Theta, Block::Theta, Block::Theta, Block::Weights});
    } else if (std::holds_alternative<MtUnit>(u)) {
      b.insert(b.end(), n, Block::Theta);
    } else {
      b.insert(b.end(), n, Block::Weights);
    }
  }
  return b;
}

WarpResult WarpStack::apply(const Coords& xy) const {
  const auto refs = layer_refs(units_);
  WarpResult res;
  res.warped = xy;
  Coords tmp;
  for (size_t l = 0; l < refs.size(); ++l) {
    forward_layer(units_[refs[l].unit], refs[l].sub, res.warped, tmp);
    if (rescales_after(policy_, l, refs.size())) {
      res.records.push_back(unit_square_record(tmp));
      res.warped = res.records.back().apply(tmp);
    } else {
      res.warped.swap(tmp);
    }
  }
  return res;
}

Coords WarpStack::apply(const Coords& xy, const std::vector<AffineRecord>& records) const {
  const auto refs = layer_refs(units_);
  Coords cur = xy, tmp;
  size_t r = 0;
  for (size_t l = 0; l < refs.size(); ++l) {
    forward_layer(units_[refs[l].unit], refs[l].sub, cur, tmp);
    if (rescales_after(policy_, l, refs.size())) {
      if (r >= records.size()) throw ValidationError("WarpStack::apply: too few rescale records");
      cur = records[r++].apply(tmp);
    } else {
      cur.swap(tmp);
    }
  }
  if (r != records.size()) throw ValidationError("WarpStack::apply: rescale record count mismatch");
  return cur;
}

std::vector<double> WarpStack::backward(const Coords& xy, const Coords& grad_warped, Coords* grad_input) const {
  const auto refs = layer_refs(units_);
  // Tape: input of every layer, pre-rescale output and rescale bookkeeping.
  std::vector<Coords> inputs(refs.size());
  std::vector<Coords> raw_out(refs.size());
  std::vector<RescaleTape> tapes(refs.size());
  Coords cur = xy;
  for (size_t l = 0; l < refs.size(); ++l) {
    inputs[l] = cur;
    forward_layer(units_[refs[l].unit], refs[l].sub, cur, raw_out[l]);
    if (rescales_after(policy_, l, refs.size())) {
      tapes[l] = make_rescale(raw_out[l]);
      cur = tapes[l].record.apply(raw_out[l]);
    } else {
      cur = raw_out[l];
    }
  }

  std::vector<double> grad(param_count(), 0.0);
  Coords g = grad_warped, tmp;
  for (size_t l = refs.size(); l-- > 0;) {
    if (rescales_after(policy_, l, refs.size())) {
      backward_rescale(tapes[l], raw_out[l], g, tmp);
      g.swap(tmp);
    }
    const auto& u = units_[refs[l].unit];
    std::span<double> gp(grad.data() + refs[l].offset, unit_param_count(u));
    backward_layer(u, refs[l].sub, inputs[l], g, tmp, gp);
    g.swap(tmp);
  }
  if (grad_input) *grad_input = g;
  return grad;
}

double WarpStack::srrbf_weight_penalty(int min_resolution, std::vector<double>* grad) const {
  if (grad) grad->assign(param_count(), 0.0);
  double total = 0.0;
  size_t offset = 0;
  for (const auto& u : units_) {
    if (const auto* s = std::get_if<SrRbfUnit>(&u); s && s->resolution >= min_resolution) {
      for (size_t l = 0; l < s->layers.size(); ++l) {
        const double w = s->layers[l].weight();
        total += w * w;
        if (grad) (*grad)[offset + l] = 2.0 * w * s->layers[l].weight_derivative();
      }
    }
    offset += unit_param_count(u);
  }
  return total;
}

// ---- architectures ----------------------------------------------------------

std::vector<UnitSpec> architecture_preset(const std::string& name) {
  std::string key = name;
  for (const std::string prefix : {"table1-", "architecture", "arch"})
    if (key.rfind(prefix, 0) == 0) key = key.substr(prefix.size());
  const UnitSpec aw1{"aw", 1}, aw2{"aw", 2};
  UnitSpec sr1{"srrbf"}, sr2{"srrbf"}, mt{"mt"};
  sr1.resolution = 1;
  sr2.resolution = 2;
  if (key == "0" || key == "stationary") return {};
  if (key == "1") return {aw1, aw2, sr1, mt};
  if (key == "2") return {aw1, aw2, sr1, sr2, mt};
  if (key == "3") return {aw1, aw2, sr1};
  if (key == "4") return {aw1, aw2, sr1, sr2};
  if (key == "rbf") return {UnitSpec{"rbf"}};
  throw ValidationError("unknown architecture preset '" + name + "'");
}

std::vector<UnitSpec> architecture_from_json(const json& j, const std::string& pointer) {
  if (j.is_string()) return architecture_preset(j.get<std::string>());
  if (!j.is_array()) throw ValidationError(pointer + ": architecture must be a preset name or an array of units");
  std::vector<UnitSpec> out;
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string at = pointer + "/" + std::to_string(i);
    const json& e = j[i];
    if (!e.is_object() || !e.contains("type") || !e["type"].is_string())
      throw ValidationError(at + "/type: missing unit type");
    UnitSpec s;
    s.type = e["type"].get<std::string>();
    if (s.type != "aw" && s.type != "rbf" && s.type != "srrbf" && s.type != "mt")
      throw ValidationError(at + "/type: unknown unit type '" + s.type + "'");
    if (e.contains("axis")) {
      s.axis = e["axis"].get<int>();
      if (s.axis != 1 && s.axis != 2) throw ValidationError(at + "/axis: must be 1 or 2");
    }
    if (e.contains("resolution")) {
      s.resolution = e["resolution"].get<int>();
      if (s.resolution < 1 || s.resolution > 2) throw ValidationError(at + "/resolution: must be 1 or 2");
    }
    if (e.contains("m")) {
      s.m = e["m"].get<int>();
      if (s.m < 1) throw ValidationError(at + "/m: must be >= 1");
    }
    if (e.contains("center")) {
      const auto c = e["center"].get<std::vector<double>>();
      if (c.size() != 2) throw ValidationError(at + "/center: expected two coordinates");
      s.center = Eigen::Vector2d(c[0], c[1]);
    }
    if (e.contains("rate")) {
      s.rate = e["rate"].get<double>();
      if (!(s.rate > 0.0)) throw ValidationError(at + "/rate: must be positive");
    }
    out.push_back(s);
  }
  return out;
}

json architecture_to_json(const std::vector<UnitSpec>& spec) {
  json arr = json::array();
  for (const auto& s : spec) {
    json e{{"type", s.type}};
    if (s.type == "aw") e["axis"] = s.axis, e["m"] = s.m;
    if (s.type == "srrbf") e["resolution"] = s.resolution;
    if (s.type == "rbf") e["center"] = {s.center.x(), s.center.y()}, e["rate"] = s.rate;
    arr.push_back(e);
  }
  return arr;
}

WarpStack build_identity_stack(const std::vector<UnitSpec>& spec, std::mt19937_64& rng, double mt_noise,
                               RescalePolicy policy) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<WarpUnit> units;
  for (const auto& s : spec) {
    if (s.type == "aw") {
      units.emplace_back(AwUnit::identity(s.axis - 1, s.m));
    } else if (s.type == "rbf") {
      units.emplace_back(RbfUnit::identity(s.center, s.rate));
    } else if (s.type == "srrbf") {
      units.emplace_back(SrRbfUnit::identity(s.resolution));
    } else {
      MtUnit mt;
      for (auto& c : mt.a) c += std::complex<double>(mt_noise * noise(rng), mt_noise * noise(rng));
      units.emplace_back(mt);
    }
  }
  return WarpStack(std::move(units), policy);
}

WarpStack random_constrained_stack(const std::vector<UnitSpec>& spec, std::mt19937_64& rng, double spread,
                                   RescalePolicy policy) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<WarpUnit> units;
  for (const auto& s : spec) {
    if (s.type == "aw") {
      AwUnit u = AwUnit::identity(s.axis - 1, s.m);
      for (auto& r : u.raw_weights) r = spread * normal(rng);
      units.emplace_back(u);
    } else if (s.type == "rbf") {
      RbfUnit u = RbfUnit::identity(Eigen::Vector2d(0.8 * unif(rng) - 0.4, 0.8 * unif(rng) - 0.4),
                                    2.0 + 18.0 * unif(rng));
      u.raw_weight = 1.5 * spread * normal(rng);
      units.emplace_back(u);
    } else if (s.type == "srrbf") {
      SrRbfUnit u = SrRbfUnit::identity(s.resolution);
      for (auto& l : u.layers) l.raw_weight = 1.5 * spread * normal(rng);
      units.emplace_back(u);
    } else {
      // Keep the pole well away from the unit square so images stay bounded.
      MtUnit mt;
      for (int attempt = 0;; ++attempt) {
        mt = MtUnit{};
        for (auto& c : mt.a) c += std::complex<double>(0.15 * spread * normal(rng), 0.15 * spread * normal(rng));
        const bool pole_far = std::abs(mt.a[2]) < 1e-12 || std::abs(mt.a[3] / mt.a[2]) > 1.5;
        if ((pole_far && std::abs(mt.determinant()) > 0.1) || attempt > 1000) break;
      }
      units.emplace_back(mt);
    }
  }
  return WarpStack(std::move(units), policy);
}

// ---- JSON -------------------------------------------------------------------

json stack_to_json(const WarpStack& stack) {
  json units = json::array();
  for (size_t i = 0; i < stack.units().size(); ++i) {
    const auto& u = stack.units()[i];
    json e{{"type", unit_type_name(u)}, {"frozen", stack.frozen(i)}};
    if (const auto* aw = std::get_if<AwUnit>(&u)) {
      e["axis"] = aw->axis + 1;
      e["knots"] = aw->knots;
      e["steepness"] = aw->steepness;
      e["raw_weights"] = aw->raw_weights;
    } else if (const auto* r = std::get_if<RbfUnit>(&u)) {
      e["center"] = {r->center.x(), r->center.y()};
      e["raw_rate"] = r->raw_rate;
      e["raw_weight"] = r->raw_weight;
      if (r->unconstrained) e["unconstrained"] = true;
      e["rate"] = r->rate();
      e["weight"] = r->weight();
    } else if (const auto* s = std::get_if<SrRbfUnit>(&u)) {
      e["resolution"] = s->resolution;
      std::vector<double> raw;
      for (const auto& l : s->layers) raw.push_back(l.raw_weight);
      e["raw_weights"] = raw;
    } else {
      json a = json::array();
      for (const auto& c : std::get<MtUnit>(u).a) a.push_back({c.real(), c.imag()});
      e["a"] = a;
    }
    units.push_back(e);
  }
  return json{{"policy", to_string(stack.policy())}, {"units", units}};
}

WarpStack stack_from_json(const json& j, const std::string& pointer) {
  if (!j.is_object() || !j.contains("units")) throw ValidationError(pointer + "/units: missing");
  const RescalePolicy policy = rescale_policy_from_string(j.value("policy", std::string("after_each_unit")));
  std::vector<WarpUnit> units;
  std::vector<bool> frozen;
  const json& arr = j["units"];
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string at = pointer + "/units/" + std::to_string(i);
    const json& e = arr[i];
    const std::string type = e.value("type", std::string());
    frozen.push_back(e.value("frozen", false));
    if (type == "aw") {
      AwUnit u;
      u.axis = e.at("axis").get<int>() - 1;
      if (u.axis != 0 && u.axis != 1) throw ValidationError(at + "/axis: must be 1 or 2");
      u.knots = e.at("knots").get<std::vector<double>>();
      u.steepness = e.at("steepness").get<std::vector<double>>();
      u.raw_weights = e.at("raw_weights").get<std::vector<double>>();
      if (u.knots.size() != u.steepness.size() || u.raw_weights.size() != u.knots.size() + 1)
        throw ValidationError(at + ": inconsistent AW basis sizes");
      units.emplace_back(u);
    } else if (type == "rbf") {
      RbfUnit u;
      const auto c = e.at("center").get<std::vector<double>>();
      u.center = Eigen::Vector2d(c.at(0), c.at(1));
      u.raw_rate = e.at("raw_rate").get<double>();
      u.raw_weight = e.at("raw_weight").get<double>();
      u.unconstrained = e.value("unconstrained", false);
      units.emplace_back(u);
    } else if (type == "srrbf") {
      SrRbfUnit u = SrRbfUnit::identity(e.at("resolution").get<int>());
      const auto raw = e.at("raw_weights").get<std::vector<double>>();
      if (raw.size() != u.layers.size()) throw ValidationError(at + "/raw_weights: wrong layer count");
      for (size_t l = 0; l < raw.size(); ++l) u.layers[l].raw_weight = raw[l];
      units.emplace_back(u);
    } else if (type == "mt") {
      MtUnit u;
      const json& a = e.at("a");
      if (a.size() != 4) throw ValidationError(at + "/a: expected four complex coefficients");
      for (size_t k = 0; k < 4; ++k) u.a[k] = {a[k].at(0).get<double>(), a[k].at(1).get<double>()};
      units.emplace_back(u);
    } else {
      throw ValidationError(at + "/type: unknown unit type '" + type + "'");
    }
  }
  WarpStack s(std::move(units), policy);
  for (size_t i = 0; i < frozen.size(); ++i) s.set_frozen(i, frozen[i]);
  return s;
}

// ---- injectivity ------------------------------------------------------------

double min_pairwise_distance(const Coords& xy) {
  const Eigen::Index n = xy.rows();
  if (n < 2) return std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return xy(a, 0) < xy(b, 0); });
  double best = std::numeric_limits<double>::infinity();
  std::set<std::pair<double, Eigen::Index>> active;
  size_t left = 0;
  for (size_t k = 0; k < order.size(); ++k) {
    const Eigen::Index i = order[k];
    while (left < k && xy(i, 0) - xy(order[left], 0) > best) {
      active.erase({xy(order[left], 1), order[left]});
      ++left;
    }
    const double y = xy(i, 1);
    for (auto it = active.lower_bound({y - best, Eigen::Index{-1}}); it != active.end() && it->first <= y + best; ++it)
      best = std::min(best, (xy.row(i) - xy.row(it->second)).norm());
    active.insert({y, i});
  }
  return best;
}

InjectivityReport injectivity_check(const WarpStack& stack, const LocationSet& grid, double tol) {
  const WarpResult base = stack.apply(grid.coords);
  InjectivityReport rep;
  rep.min_distance = min_pairwise_distance(base.warped);

  constexpr double h = 1e-5;
  std::array<Coords, 2> plus, minus;
  for (int k = 0; k < 2; ++k) {
    Coords p = grid.coords, m = grid.coords;
    p.col(k).array() += h;
    m.col(k).array() -= h;
    plus[k] = stack.apply(p, base.records);
    minus[k] = stack.apply(m, base.records);
  }
  rep.min_jacobian = std::numeric_limits<double>::infinity();
  rep.max_jacobian = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const Eigen::RowVector2d dx = (plus[0].row(i) - minus[0].row(i)) / (2.0 * h);
    const Eigen::RowVector2d dy = (plus[1].row(i) - minus[1].row(i)) / (2.0 * h);
    const double det = dx(0) * dy(1) - dx(1) * dy(0);
    rep.min_jacobian = std::min(rep.min_jacobian, det);
    rep.max_jacobian = std::max(rep.max_jacobian, det);
    if (det > 0.0) ++rep.positive_jacobians;
    else if (det < 0.0) ++rep.negative_jacobians;
    else ++rep.zero_jacobians;
  }
  rep.fold = rep.min_distance <= tol || rep.zero_jacobians > 0 ||
             (rep.positive_jacobians > 0 && rep.negative_jacobians > 0);
  return rep;
}

}  // namespace warpex
