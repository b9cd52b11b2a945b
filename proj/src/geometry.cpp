#include "warpex/geometry.hpp"

#include <cmath>

#include "warpex/error.hpp"

namespace warpex {

Coords AffineRecord::apply(const Coords& xy) const {
  Coords out(xy.rows(), 2);
  for (int k = 0; k < 2; ++k) out.col(k) = (xy.col(k).array() - shift[k]) * scale[k];
  return out;
}

Coords AffineRecord::invert(const Coords& xy) const {
  Coords out(xy.rows(), 2);
  for (int k = 0; k < 2; ++k) out.col(k) = xy.col(k).array() / scale[k] + shift[k];
  return out;
}

bool AffineRecord::is_identity(double tol) const {
  for (int k = 0; k < 2; ++k)
    if (std::abs(shift[k]) > tol || std::abs(scale[k] - 1.0) > tol) return false;
  return true;
}

LocationSet::LocationSet(Coords xy, std::vector<std::string> ids)
    : coords(std::move(xy)), labels(std::move(ids)) {
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != coords.rows())
    throw ValidationError("LocationSet: label count does not match coordinate rows");
}

std::string LocationSet::label(Eigen::Index i) const {
  if (labels.empty()) return std::to_string(i + 1);
  return labels[static_cast<size_t>(i)];
}

LocationSet LocationSet::subset(const std::vector<Eigen::Index>& rows) const {
  Coords xy(static_cast<Eigen::Index>(rows.size()), 2);
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) {
    xy.row(static_cast<Eigen::Index>(r)) = coords.row(rows[r]);
    ids.push_back(label(rows[r]));
  }
  return LocationSet(std::move(xy), std::move(ids));
}

void LocationSet::validate() const {
  if (coords.rows() < 2) throw ValidationError("LocationSet: at least two sites are required");
  if (!coords.allFinite()) throw ValidationError("LocationSet: non-finite coordinate");
}

AffineRecord unit_square_record(const Coords& xy) {
  if (xy.rows() < 2) throw ValidationError("rescale: at least two sites are required");
  AffineRecord rec;
  for (int k = 0; k < 2; ++k) {
    const double lo = xy.col(k).minCoeff();
    const double hi = xy.col(k).maxCoeff();
    const double range = hi - lo;
    if (!(range > 0.0) || !std::isfinite(range))
      throw ValidationError(std::string("rescale: degenerate ") + (k == 0 ? "x" : "y") +
                            " axis (all coordinates equal)");
    rec.shift[k] = lo + 0.5 * range;
    rec.scale[k] = 1.0 / range;
  }
  return rec;
}

std::pair<LocationSet, AffineRecord> rescale_unit_square(const LocationSet& sites) {
  sites.validate();
  AffineRecord rec = unit_square_record(sites.coords);
  return {LocationSet(rec.apply(sites.coords), sites.labels), rec};
}

Eigen::MatrixXd pairwise_distances(const Coords& xy) {
  const Eigen::Index n = xy.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = (xy.row(i) - xy.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

Eigen::MatrixXd pairwise_distances(const LocationSet& sites) { return pairwise_distances(sites.coords); }

LocationSet unit_grid(int nx, int ny) {
  if (nx < 2 || ny < 2) throw ValidationError("unit_grid: need at least 2 points per axis");
  Coords xy(static_cast<Eigen::Index>(nx) * ny, 2);
  Eigen::Index r = 0;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix, ++r) {
      xy(r, 0) = -0.5 + static_cast<double>(ix) / (nx - 1);
      xy(r, 1) = -0.5 + static_cast<double>(iy) / (ny - 1);
    }
  return LocationSet(std::move(xy));
}

}  // namespace warpex
