#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "warpex/geometry.hpp"

namespace warpex {

/// Optimisation block a scalar parameter belongs to. The optimiser updates one block per step.
enum class Block : std::uint8_t { Psi, Theta, Weights, Fixed };

enum class RescalePolicy : std::uint8_t { AfterEachUnit, FinalOnly };

std::string to_string(Block b);
std::string to_string(RescalePolicy p);
RescalePolicy rescale_policy_from_string(const std::string& s);

/// Axial warping of one coordinate: f_k(s) = w_1 s_k + sum_j w_j sigmoid(steep_j (s_k - knot_j)).
/// Knots and steepness are fixed; effective weights are exp(raw) so the map is strictly increasing.
struct AwUnit {
  int axis = 0;
  std::vector<double> knots;
  std::vector<double> steepness;
  std::vector<double> raw_weights;  // size = 1 + knots.size()

  /// Near-identity unit with m bases: linear weight 1, sigmoid weights ~1e-3.
  static AwUnit identity(int axis, int m = 6);

  int basis_count() const { return static_cast<int>(raw_weights.size()); }
  std::vector<double> weights() const;
  double map(double s) const;
  double slope(double s) const;
};

/// Bounds for the RBF weight that keep s + w (s - c) exp(-b |s - c|^2) injective.
inline constexpr double kRbfWeightLower = -1.0;
double rbf_weight_upper();  // exp(3/2) / 2
inline constexpr double kRbfWeightMargin = 1e-3;

/// Logistic map of an unconstrained real onto (-1 + margin, exp(3/2)/2 - margin).
double rbf_weight_from_raw(double raw);
double rbf_raw_from_weight(double w);

struct RbfUnit {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double raw_rate = 0.0;    // b = exp(raw_rate)
  double raw_weight = 0.0;  // mapped through rbf_weight_from_raw

  // When set, raw_weight is used as the effective weight with no bounds. Only for
  // building deliberately folding maps; never produced by the optimiser.
  bool unconstrained = false;

  static RbfUnit identity(const Eigen::Vector2d& center, double rate);
  /// Constrained unit with the given effective weight (must lie inside the open interval).
  static RbfUnit with_weight(const Eigen::Vector2d& center, double rate, double weight);
  static RbfUnit unconstrained_weight(const Eigen::Vector2d& center, double rate, double weight);

  double rate() const;
  double weight() const;
  double weight_derivative() const;  // d weight / d raw_weight
  Eigen::Vector2d map(const Eigen::Vector2d& s) const;
};

/// Composition of 3^{2l} RBF layers with centroids fixed on the 3^l x 3^l grid and
/// shared rate 2 (3^l - 1)^2. Only the per-layer weights are trainable.
struct SrRbfUnit {
  int resolution = 1;
  std::vector<RbfUnit> layers;

  static SrRbfUnit identity(int resolution);
  static double layer_rate(int resolution);
};

/// Moebius transformation z -> (a1 z + a2) / (a3 z + a4) acting on z = x + iy.
struct MtUnit {
  std::array<std::complex<double>, 4> a{1.0, 0.0, 0.0, 1.0};

  static MtUnit identity() { return MtUnit{}; }
  std::complex<double> determinant() const { return a[0] * a[3] - a[1] * a[2]; }
  std::complex<double> map(std::complex<double> z) const;
};

using WarpUnit = std::variant<AwUnit, RbfUnit, SrRbfUnit, MtUnit>;

std::string unit_type_name(const WarpUnit& u);

/// Images of the input sites together with the rescale record after every layer that
/// rescales. Holdout sites are mapped with these records, never with freshly computed ones.
struct WarpResult {
  Coords warped;
  std::vector<AffineRecord> records;
};

struct InjectivityReport {
  double min_distance = 0.0;
  Eigen::Index positive_jacobians = 0;
  Eigen::Index negative_jacobians = 0;
  Eigen::Index zero_jacobians = 0;
  double min_jacobian = 0.0;
  double max_jacobian = 0.0;
  bool fold = false;
};

class WarpStack {
 public:
  WarpStack() = default;
  explicit WarpStack(std::vector<WarpUnit> units, RescalePolicy policy = RescalePolicy::AfterEachUnit);

  const std::vector<WarpUnit>& units() const { return units_; }
  std::vector<WarpUnit>& units() { return units_; }
  RescalePolicy policy() const { return policy_; }
  void set_policy(RescalePolicy p) { policy_ = p; }

  bool frozen(size_t unit) const { return frozen_.at(unit); }
  void set_frozen(size_t unit, bool value) { frozen_.at(unit) = value; }
  void freeze_all(bool value);

  bool empty() const { return units_.empty(); }
  /// Number of layers n in f = f_n o ... o f_1; an SR-RBF(l) unit counts 3^{2l} layers.
  int depth() const;

  size_t param_count() const;
  std::vector<double> params() const;
  void set_params(std::span<const double> values);
  std::vector<Block> blocks() const;

  WarpResult apply(const Coords& xy) const;
  Coords apply(const Coords& xy, const std::vector<AffineRecord>& records) const;

  /// Value of the loss gradient with respect to the flat parameter vector, given the gradient
  /// with respect to the warped coordinates produced by apply(xy). Rescaling is differentiated
  /// through its min/max dependence on the sites.
  std::vector<double> backward(const Coords& xy, const Coords& grad_warped, Coords* grad_input = nullptr) const;

  /// Sum of squared effective layer weights over SR-RBF units with resolution >= min_resolution.
  double srrbf_weight_penalty(int min_resolution, std::vector<double>* grad = nullptr) const;

 private:
  std::vector<WarpUnit> units_;
  std::vector<bool> frozen_;
  RescalePolicy policy_ = RescalePolicy::AfterEachUnit;
};

/// Component of an architecture description: {type, axis?, resolution?, m?}.
struct UnitSpec {
  std::string type;
  int axis = 1;        // 1 or 2
  int resolution = 1;  // SR-RBF only
  int m = 6;           // AW only
  Eigen::Vector2d center = Eigen::Vector2d::Zero();  // single RBF only
  double rate = 2.0;                                // single RBF only
};

std::vector<UnitSpec> architecture_preset(const std::string& name);
std::vector<UnitSpec> architecture_from_json(const nlohmann::json& j, const std::string& pointer = "");
nlohmann::json architecture_to_json(const std::vector<UnitSpec>& spec);

/// Near-identity stack for a given architecture. MT units receive N(0, mt_noise) perturbations.
WarpStack build_identity_stack(const std::vector<UnitSpec>& spec, std::mt19937_64& rng, double mt_noise = 1e-3,
                               RescalePolicy policy = RescalePolicy::AfterEachUnit);

/// Random stack whose parameters all satisfy the unit constraints. `spread` scales the
/// dispersion of the unconstrained draws.
WarpStack random_constrained_stack(const std::vector<UnitSpec>& spec, std::mt19937_64& rng, double spread = 1.0,
                                   RescalePolicy policy = RescalePolicy::AfterEachUnit);

nlohmann::json stack_to_json(const WarpStack& stack);
WarpStack stack_from_json(const nlohmann::json& j, const std::string& pointer = "");

/// Checks injectivity numerically on `grid`: closest image pair and the sign pattern of
/// finite-difference Jacobian determinants. A fold is reported when the minimum image
/// distance is <= tol or determinants of both signs occur.
InjectivityReport injectivity_check(const WarpStack& stack, const LocationSet& grid, double tol = 0.0);

/// Smallest pairwise Euclidean distance, by a sweep over x-sorted points.
double min_pairwise_distance(const Coords& xy);

}  // namespace warpex
