#include "ihid/geo.hpp"

#include <cmath>
#include <stdexcept>

namespace ihid {

std::string label_to_string(Label l) {
  switch (l) {
    case Label::normal: return "normal";
    case Label::big_detour: return "big_detour";
    case Label::small_detour: return "small_detour";
    case Label::route_switch: return "route_switch";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

Label label_from_string(const std::string& s) {
  if (s == "normal") return Label::normal;
  if (s == "big_detour") return Label::big_detour;
  if (s == "small_detour") return Label::small_detour;
  if (s == "route_switch") return Label::route_switch;
  if (s == "unknown" || s.empty()) return Label::unknown;
  throw std::invalid_argument("unknown trajectory label: " + s);
}

BoundingBox compute_bbox(const std::vector<Trajectory>& trajs, double pad_fraction) {
  if (trajs.empty()) throw std::invalid_argument("compute_bbox: no trajectories");
  BoundingBox b;
  b.lat_min = b.lon_min = std::numeric_limits<double>::infinity();
  b.lat_max = b.lon_max = -std::numeric_limits<double>::infinity();
  for (const auto& t : trajs) {
    for (const auto& p : t.points) {
      b.lat_min = std::min(b.lat_min, p.lat);
      b.lat_max = std::max(b.lat_max, p.lat);
      b.lon_min = std::min(b.lon_min, p.lon);
      b.lon_max = std::max(b.lon_max, p.lon);
    }
  }
  if (pad_fraction > 0.0) {
    const double dlat = (b.lat_max - b.lat_min) * pad_fraction;
    const double dlon = (b.lon_max - b.lon_min) * pad_fraction;
    b.lat_min -= dlat;
    b.lat_max += dlat;
    b.lon_min -= dlon;
    b.lon_max += dlon;
  }
  if (!b.valid()) throw std::invalid_argument("compute_bbox: degenerate extent");
  return b;
}

double planar_distance_deg(const GeoPoint& a, const GeoPoint& b) {
  const double mean_lat = 0.5 * (a.lat + b.lat) * M_PI / 180.0;
  const double dlat = a.lat - b.lat;
  const double dlon = (a.lon - b.lon) * std::cos(mean_lat);
  return std::sqrt(dlat * dlat + dlon * dlon);
}

double trajectory_length_deg(const Trajectory& t) {
  double len = 0.0;
  for (std::size_t i = 1; i < t.points.size(); ++i)
    len += planar_distance_deg(t.points[i - 1], t.points[i]);
  return len;
}

double polyline_length(const Polyline& pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
  return len;
}

}  // namespace ihid
