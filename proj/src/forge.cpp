#include "ihid/forge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ihid/resample.hpp"

namespace ihid {

namespace {

// Local equirectangular frame: x = (lon - lon0) * cos(lat0), y = lat - lat0.
// Euclidean distances in this frame agree with planar_distance_deg up to the
// curvature of cos across the extent, negligible at city/strait scale.
struct PlanarFrame {
  double lat0 = 0.0, lon0 = 0.0, k = 1.0;

  Vec2 to_plane(const GeoPoint& p) const { return Vec2((p.lon - lon0) * k, p.lat - lat0); }
  GeoPoint to_geo(const Vec2& v) const {
    GeoPoint p;
    p.lon = v.x() / k + lon0;
    p.lat = v.y() + lat0;
    return p;
  }
};

PlanarFrame frame_of(std::initializer_list<const Trajectory*> trajs) {
  double lat_sum = 0.0, lon_sum = 0.0;
  std::size_t n = 0;
  for (const auto* t : trajs) {
    for (const auto& p : t->points) {
      lat_sum += p.lat;
      lon_sum += p.lon;
      ++n;
    }
  }
  PlanarFrame f;
  f.lat0 = lat_sum / n;
  f.lon0 = lon_sum / n;
  f.k = std::cos(f.lat0 * M_PI / 180.0);
  return f;
}

std::vector<double> cumulative_lengths(const Polyline& pts) {
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i)
    cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  return cum;
}

// Index of the segment containing arc position s, plus the fraction along it.
std::pair<std::size_t, double> locate(const std::vector<double>& cum, double s) {
  std::size_t i = 0;
  while (i + 2 < cum.size() && cum[i + 1] < s) ++i;
  const double seg = cum[i + 1] - cum[i];
  const double f = seg > 0.0 ? std::clamp((s - cum[i]) / seg, 0.0, 1.0) : 0.0;
  return {i, f};
}

Vec2 point_at(const Polyline& pts, const std::vector<double>& cum, double s) {
  const auto [i, f] = locate(cum, s);
  return pts[i] + f * (pts[i + 1] - pts[i]);
}

bool fully_timestamped(const Trajectory& t) {
  return std::all_of(t.points.begin(), t.points.end(),
                     [](const GeoPoint& p) { return p.t.has_value(); });
}

double time_at(const Trajectory& t, const std::vector<double>& cum, double s) {
  const auto [i, f] = locate(cum, s);
  return *t.points[i].t + f * (*t.points[i + 1].t - *t.points[i].t);
}

// Resamples the 3-point wedge to n points (n >= 3) with the apex guaranteed
// to be a sample, so the polyline's arc length stays exactly |ab| + extra.
Polyline resample_wedge(const Polyline& wedge, int n) {
  const int k1 = (n + 2) / 2;  // points on a->apex; the apex is shared
  const int k2 = n + 1 - k1;
  Polyline first = resample_arclength({wedge[0], wedge[1]}, k1);
  Polyline second = resample_arclength({wedge[1], wedge[2]}, k2);
  first.insert(first.end(), second.begin() + 1, second.end());
  return first;
}

struct SpliceResult {
  std::vector<GeoPoint> points;
};

// Core of both detour forges: removes the arc (u, u + w) and splices in a
// wedge through the interpolated arc endpoints. The wedge's extra length is
// d plus the slack between the removed arc and its chord, so the trajectory
// grows by exactly d. Requires at least 3 interior points to host the wedge.
std::optional<SpliceResult> splice_detour(const Trajectory& traj, const PlanarFrame& frame,
                                          const Polyline& pts, const std::vector<double>& cum,
                                          double u, double w, double d, int side) {
  const Vec2 a = point_at(pts, cum, u);
  const Vec2 b = point_at(pts, cum, u + w);
  const double chord = (a - b).norm();
  if (chord <= 0.0) return std::nullopt;

  std::size_t i0 = 0;
  while (i0 < pts.size() && cum[i0] <= u) ++i0;
  std::size_t i1 = pts.size();
  while (i1 > 0 && cum[i1 - 1] >= u + w) --i1;
  if (i1 <= i0) return std::nullopt;
  const int m = static_cast<int>(i1 - i0);  // interior points being replaced
  if (m < 3) return std::nullopt;

  const Polyline wedge = resample_wedge(detour_polyline(a, b, d + (w - chord), side), m);

  const bool timed = fully_timestamped(traj);
  const double ta = timed ? time_at(traj, cum, u) : 0.0;
  const double tb = timed ? time_at(traj, cum, u + w) : 0.0;
  const std::vector<double> wedge_cum = cumulative_lengths(wedge);

  SpliceResult out;
  out.points.reserve(pts.size());
  auto push = [&](const GeoPoint& p) {
    if (!out.points.empty() && out.points.back().same_position(p)) return;
    out.points.push_back(p);
  };
  for (std::size_t i = 0; i < i0; ++i) push(traj.points[i]);
  for (std::size_t j = 0; j < wedge.size(); ++j) {
    GeoPoint p = frame.to_geo(wedge[j]);
    if (timed) p.t = ta + (tb - ta) * (wedge_cum[j] / wedge_cum.back());
    push(p);
  }
  for (std::size_t i = i1; i < pts.size(); ++i) push(traj.points[i]);
  return out;
}

double median_spacing(const std::vector<double>& cumA, const std::vector<double>& cumB) {
  std::vector<double> gaps;
  gaps.reserve(cumA.size() + cumB.size());
  for (std::size_t i = 1; i < cumA.size(); ++i) gaps.push_back(cumA[i] - cumA[i - 1]);
  for (std::size_t i = 1; i < cumB.size(); ++i) gaps.push_back(cumB[i] - cumB[i - 1]);
  std::sort(gaps.begin(), gaps.end());
  return gaps[gaps.size() / 2];
}

}  // namespace

Polyline detour_polyline(const Vec2& a, const Vec2& b, double extra, int side) {
  if (extra <= 0.0) throw std::invalid_argument("detour_polyline: extra must be > 0");
  const Vec2 ab = b - a;
  const double len = ab.norm();
  if (len <= 0.0) throw std::invalid_argument("detour_polyline: endpoints coincide");
  const double h = std::sqrt(extra * extra + 2.0 * extra * len) * 0.5;
  const Vec2 unit = ab / len;
  const Vec2 perp(-unit.y(), unit.x());
  const Vec2 apex = a + 0.5 * ab + (side >= 0 ? 1.0 : -1.0) * h * perp;
  return {a, apex, b};
}

Trajectory make_big_detour(const Trajectory& traj, double d, double omega, Rng& rng) {
  if (d <= 0.0) throw std::invalid_argument("make_big_detour: d must be > 0");
  if (omega <= 0.0 || omega >= 1.0)
    throw std::invalid_argument("make_big_detour: omega must be in (0,1)");

  const PlanarFrame frame = frame_of({&traj});
  Polyline pts;
  pts.reserve(traj.points.size());
  for (const auto& p : traj.points) pts.push_back(frame.to_plane(p));
  const auto cum = cumulative_lengths(pts);
  const double total = cum.back();
  if (total <= 0.0) throw std::invalid_argument("make_big_detour: zero-length trajectory");

  const double w = omega * total;
  std::uniform_real_distribution<double> start(0.0, total - w);
  std::uniform_int_distribution<int> coin(0, 1);
  const double u = start(rng);
  const int side = coin(rng) ? 1 : -1;

  const auto spliced = splice_detour(traj, frame, pts, cum, u, w, d, side);
  if (!spliced)
    throw std::invalid_argument("make_big_detour: trajectory too short to host the segment");

  Trajectory out;
  out.id = traj.id + "_bd";
  out.label = Label::big_detour;
  out.points = spliced->points;
  return out;
}

std::optional<Trajectory> make_small_detour(const Trajectory& traj, const Segmentation& seg,
                                            const SubgoalGraph& graph, const BoundingBox& bbox,
                                            int leg_len, double d, double omega_star, Rng& rng) {
  if (d <= 0.0) throw std::invalid_argument("make_small_detour: d must be > 0");
  if (omega_star <= 0.0 || omega_star >= 1.0)
    throw std::invalid_argument("make_small_detour: omega_star must be in (0,1)");
  if (seg.legs.empty()) throw std::invalid_argument("make_small_detour: segmentation has no legs");

  const PlanarFrame frame = frame_of({&traj});
  Polyline pts;
  pts.reserve(traj.points.size());
  for (const auto& p : traj.points) pts.push_back(frame.to_plane(p));
  const auto cum = cumulative_lengths(pts);

  std::uniform_int_distribution<std::size_t> pick(0, seg.legs.size() - 1);
  const std::size_t li = pick(rng);
  const auto [begin, end] = seg.leg_ranges[li];
  const double leg_start = cum[begin];
  const double leg_total = cum[end] - cum[begin];
  const double w = omega_star * leg_total;
  if (w <= 0.0 || w >= leg_total) return std::nullopt;

  std::uniform_real_distribution<double> start(0.0, leg_total - w);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double u = leg_start + start(rng);
    const int side = coin(rng) ? 1 : -1;
    const auto spliced = splice_detour(traj, frame, pts, cum, u, w, d, side);
    if (!spliced) continue;

    Trajectory out;
    out.id = traj.id + "_sd";
    out.label = Label::small_detour;
    out.points = spliced->points;
    const auto recheck = segment_by_graph(out, graph, bbox, leg_len);
    if (recheck && recheck->subgoal_seq == seg.subgoal_seq) return out;
  }
  return std::nullopt;
}

std::optional<Trajectory> make_route_switch(const Trajectory& a, const Trajectory& b,
                                            double sigma, Rng& rng) {
  (void)rng;  // splice points are deterministic arc midpoints
  if (sigma <= 0.0) throw std::invalid_argument("make_route_switch: sigma must be > 0");

  const PlanarFrame frame = frame_of({&a, &b});
  Polyline ptsA, ptsB;
  for (const auto& p : a.points) ptsA.push_back(frame.to_plane(p));
  for (const auto& p : b.points) ptsB.push_back(frame.to_plane(p));
  const auto cumA = cumulative_lengths(ptsA);
  const auto cumB = cumulative_lengths(ptsB);
  const double midA = cumA.back() * 0.5;
  const double midB = cumB.back() * 0.5;
  const Vec2 pa = point_at(ptsA, cumA, midA);
  const Vec2 pb = point_at(ptsB, cumB, midB);
  const double gap = (pa - pb).norm();
  if (gap < sigma) return std::nullopt;

  const double spacing = median_spacing(cumA, cumB);
  const int bridge_n =
      std::max(2, static_cast<int>(std::lround(gap / std::max(spacing, 1e-12))) + 1);
  const Polyline bridge = resample_arclength({pa, pb}, bridge_n);

  const bool timed = fully_timestamped(a) && fully_timestamped(b);
  const double ta = timed ? time_at(a, cumA, midA) : 0.0;
  double dtA = 1.0;
  if (timed && a.points.size() > 1)
    dtA = std::max(1.0, (*a.points.back().t - *a.points.front().t) /
                            static_cast<double>(a.points.size() - 1));

  Trajectory out;
  out.id = a.id + "_rs_" + b.id;
  out.label = Label::route_switch;
  auto push = [&](const GeoPoint& p) {
    if (!out.points.empty() && out.points.back().same_position(p)) return;
    out.points.push_back(p);
  };
  for (std::size_t i = 0; i < ptsA.size() && cumA[i] < midA; ++i) push(a.points[i]);
  double t_cursor = ta;
  for (std::size_t j = 0; j < bridge.size(); ++j) {
    GeoPoint p = frame.to_geo(bridge[j]);
    if (timed) {
      t_cursor = ta + static_cast<double>(j) * dtA;
      p.t = t_cursor;
    }
    push(p);
  }
  const double tb = timed ? time_at(b, cumB, midB) : 0.0;
  for (std::size_t i = 0; i < ptsB.size(); ++i) {
    if (cumB[i] <= midB) continue;
    GeoPoint p = b.points[i];
    if (timed) p.t = t_cursor + (*b.points[i].t - tb);
    push(p);
  }
  return out;
}

}  // namespace ihid
