#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace ihid {

enum class Label { normal, big_detour, small_detour, route_switch, unknown };

std::string label_to_string(Label l);
Label label_from_string(const std::string& s);

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]
  std::optional<double> t;  // epoch seconds

  bool same_position(const GeoPoint& o) const { return lat == o.lat && lon == o.lon; }
};

struct Trajectory {
  std::string id;
  std::vector<GeoPoint> points;  // length >= 2, no consecutive duplicates
  Label label = Label::unknown;
};

struct BoundingBox {
  double lat_min = 0.0, lat_max = 0.0;
  double lon_min = 0.0, lon_max = 0.0;

  bool valid() const { return lat_min < lat_max && lon_min < lon_max; }
  bool contains(const GeoPoint& p) const {
    return p.lat >= lat_min && p.lat <= lat_max && p.lon >= lon_min && p.lon <= lon_max;
  }
};

// Bounding box of all points, optionally padded by a relative margin per axis.
BoundingBox compute_bbox(const std::vector<Trajectory>& trajs, double pad_fraction = 0.0);

// Planar equirectangular distance in degrees: lon deltas are scaled by
// cos(mean latitude). Adequate at city/strait scale.
double planar_distance_deg(const GeoPoint& a, const GeoPoint& b);

// Arc length of a trajectory in planar degree units.
double trajectory_length_deg(const Trajectory& t);

using Vec2 = Eigen::Vector2d;
using Polyline = std::vector<Vec2>;

double polyline_length(const Polyline& pts);

}  // namespace ihid
