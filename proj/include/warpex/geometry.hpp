#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace warpex {

using Coords = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Per-dimension affine map x -> (x - shift) * scale. Scales are strictly positive.
struct AffineRecord {
  std::array<double, 2> shift{0.0, 0.0};
  std::array<double, 2> scale{1.0, 1.0};

  Coords apply(const Coords& xy) const;
  Coords invert(const Coords& xy) const;
  bool is_identity(double tol = 0.0) const;
};

/// Ordered 2-D site collection. Labels are optional; when present there is one per row.
struct LocationSet {
  Coords coords;
  std::vector<std::string> labels;

  LocationSet() = default;
  explicit LocationSet(Coords xy, std::vector<std::string> ids = {});

  Eigen::Index size() const { return coords.rows(); }
  std::string label(Eigen::Index i) const;
  LocationSet subset(const std::vector<Eigen::Index>& rows) const;
  // Throws ValidationError unless D >= 2 and every coordinate is finite.
  void validate() const;
};

/// Min-max record mapping each axis of `xy` onto [-0.5, 0.5].
/// Throws ValidationError naming the axis when a dimension is degenerate.
AffineRecord unit_square_record(const Coords& xy);

std::pair<LocationSet, AffineRecord> rescale_unit_square(const LocationSet& sites);

Eigen::MatrixXd pairwise_distances(const LocationSet& sites);
Eigen::MatrixXd pairwise_distances(const Coords& xy);

/// Regular nx-by-ny lattice spanning [-0.5, 0.5]^2, row-major in y then x.
LocationSet unit_grid(int nx, int ny);

}  // namespace warpex
