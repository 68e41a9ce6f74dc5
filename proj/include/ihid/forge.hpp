#pragma once

#include <optional>

#include "ihid/common.hpp"
#include "ihid/geo.hpp"
#include "ihid/segment.hpp"

namespace ihid {

struct ForgeParams {
  double d = 0.04;          // extra path length, native coordinate units
  double omega = 0.6;       // replaced arc proportion for big detours, in (0,1)
  double omega_star = 0.6;  // replaced leg proportion for small detours, in (0,1)
  double sigma = 0.03;      // minimum split-point separation for route switches
};

// Isoceles two-segment wedge a -> apex -> b whose arc length is |ab| + extra.
// The apex sits at the midpoint of ab offset perpendicularly by
// h = sqrt(extra^2 + 2*extra*|ab|)/2 on the given side (+1 left of a->b, -1
// right). extra <= 0 or a == b raise std::invalid_argument.
Polyline detour_polyline(const Vec2& a, const Vec2& b, double extra, int side);

// Replaces a uniformly placed contiguous segment of arc-length proportion
// `omega` with a wedge detour adding `d` to the total path length (the wedge's
// extra length absorbs any slack between the removed arc and its chord, so the
// total grows by exactly d). Point count and the two trajectory endpoints are
// preserved; timestamps are re-interpolated along the replacement when the
// source is fully timestamped. Draws (start position, offset side) from rng.
Trajectory make_big_detour(const Trajectory& traj, double d, double omega, Rng& rng);

// Replaces proportion `omega_star` of one uniformly chosen leg (placed
// strictly inside the leg) with a wedge detour adding `d`. The forged
// trajectory must keep the original subgoal sequence; placement and offset
// side are redrawn up to 10 times if segmentation disagrees, after which
// nullopt is returned so the caller can pick another trajectory.
std::optional<Trajectory> make_small_detour(const Trajectory& traj, const Segmentation& seg,
                                            const SubgoalGraph& graph, const BoundingBox& bbox,
                                            int leg_len, double d, double omega_star, Rng& rng);

// Splits both trajectories at their arc-length midpoints and, when the split
// points are at least sigma apart, joins A's first half to B's second half
// with a straight bridge sampled at the trajectories' median point spacing.
// Split points closer than sigma yield nullopt.
std::optional<Trajectory> make_route_switch(const Trajectory& a, const Trajectory& b,
                                            double sigma, Rng& rng);

}  // namespace ihid
