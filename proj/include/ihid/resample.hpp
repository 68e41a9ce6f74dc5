#pragma once

#include <Eigen/Core>

#include "ihid/geo.hpp"

namespace ihid {

// Affine map of (lat, lon) onto [-1, 1]^2: x from lon, y from lat.
// With clamp=false, points outside the box raise std::invalid_argument.
Vec2 normalize_point(const GeoPoint& p, const BoundingBox& bbox, bool clamp = false);
GeoPoint denormalize_point(const Vec2& xy, const BoundingBox& bbox);

Polyline normalize_points(const std::vector<GeoPoint>& pts, const BoundingBox& bbox,
                          bool clamp = false);

// Resamples a polyline to exactly n points at uniform arc-length spacing.
// Output points lie on the input polyline; endpoints are preserved exactly.
// Zero total length raises std::invalid_argument.
Polyline resample_arclength(const Polyline& pts, int n);

// n x 2 matrix view of a polyline (row = point).
Eigen::MatrixXd polyline_to_matrix(const Polyline& pts);
Polyline matrix_to_polyline(const Eigen::MatrixXd& m);

}  // namespace ihid
