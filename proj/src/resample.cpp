#include "ihid/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ihid {

Vec2 normalize_point(const GeoPoint& p, const BoundingBox& bbox, bool clamp) {
  if (!bbox.valid()) throw std::invalid_argument("normalize: degenerate bounding box");
  double lat = p.lat, lon = p.lon;
  if (clamp) {
    lat = std::clamp(lat, bbox.lat_min, bbox.lat_max);
    lon = std::clamp(lon, bbox.lon_min, bbox.lon_max);
  } else if (!bbox.contains(p)) {
    throw std::invalid_argument("normalize: point outside bounding box");
  }
  const double x = 2.0 * (lon - bbox.lon_min) / (bbox.lon_max - bbox.lon_min) - 1.0;
  const double y = 2.0 * (lat - bbox.lat_min) / (bbox.lat_max - bbox.lat_min) - 1.0;
  return Vec2(x, y);
}

GeoPoint denormalize_point(const Vec2& xy, const BoundingBox& bbox) {
  if (!bbox.valid()) throw std::invalid_argument("denormalize: degenerate bounding box");
  GeoPoint p;
  p.lon = bbox.lon_min + (xy.x() + 1.0) * 0.5 * (bbox.lon_max - bbox.lon_min);
  p.lat = bbox.lat_min + (xy.y() + 1.0) * 0.5 * (bbox.lat_max - bbox.lat_min);
  return p;
}

Polyline normalize_points(const std::vector<GeoPoint>& pts, const BoundingBox& bbox, bool clamp) {
  Polyline out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(normalize_point(p, bbox, clamp));
  return out;
}

Polyline resample_arclength(const Polyline& pts, int n) {
  if (pts.size() < 2) throw std::invalid_argument("resample: need at least 2 points");
  if (n < 2) throw std::invalid_argument("resample: need n >= 2");

  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i)
    cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  const double total = cum.back();
  if (total <= 0.0) throw std::invalid_argument("resample: zero total length");

  Polyline out;
  out.reserve(n);
  out.push_back(pts.front());
  std::size_t seg = 0;
  for (int k = 1; k < n - 1; ++k) {
    const double target = total * k / (n - 1);
    while (seg + 2 < pts.size() && cum[seg + 1] < target) ++seg;
    const double seg_len = cum[seg + 1] - cum[seg];
    const double f = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
    out.push_back(pts[seg] + f * (pts[seg + 1] - pts[seg]));
  }
  out.push_back(pts.back());
  return out;
}

Eigen::MatrixXd polyline_to_matrix(const Polyline& pts) {
  Eigen::MatrixXd m(pts.size(), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m(i, 0) = pts[i].x();
    m(i, 1) = pts[i].y();
  }
  return m;
}

Polyline matrix_to_polyline(const Eigen::MatrixXd& m) {
  Polyline out;
  out.reserve(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m(i, 0), m(i, 1));
  return out;
}

}  // namespace ihid
