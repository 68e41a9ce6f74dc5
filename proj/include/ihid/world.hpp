#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ihid/common.hpp"
#include "ihid/geo.hpp"
#include "ihid/graph.hpp"

namespace ihid {

// Synthetic goal-directed worlds: a small node layout plus weighted routes,
// from which corridor-noised trajectories are sampled. Stands in for real
// GPS corpora in experiments and tests.

struct WorldNode {
  int id = 0;
  double lon = 0.0, lat = 0.0;  // degrees
  NodeKind kind = NodeKind::destination;
};

struct WorldRoute {
  std::vector<int> nodes;    // path over declared node ids, length >= 2
  double weight = 1.0;       // sampling weight, > 0
  double noise_amp = 0.008;  // corridor noise amplitude, degrees
};

struct WorldSpec {
  std::vector<WorldNode> nodes;  // ids dense from 0
  std::vector<WorldRoute> routes;
  int points_per_leg_min = 24;
  int points_per_leg_max = 40;
  int count = 200;            // trajectories to generate
  double node_radius = 0.07;  // ground-truth node region radius, normalized units
  double bbox_pad = 0.05;     // padding fraction for the normalization frame
  std::uint64_t seed = 0;
  std::string id_prefix = "w";
};

struct SynthWorld {
  SubgoalGraph graph;  // ground truth; centers normalized against bbox
  BoundingBox bbox;
  std::vector<Trajectory> trajs;      // labeled normal
  std::vector<std::size_t> route_of;  // index into spec.routes per trajectory
};

// One pass over `route`: points-per-leg drawn from the spec's range, each leg
// jittered perpendicular to its straight line by a smooth sum of sine
// half-waves that vanishes at the leg endpoints (amp 0 → exactly on-route).
// Timestamps start at t0 and advance one second per point.
Trajectory synth_route_trajectory(const WorldSpec& spec, const std::vector<int>& route,
                                  double noise_amp, const std::string& id, double t0, Rng& rng);

// Samples spec.count trajectories (routes by weight) and returns them with
// the ground-truth graph: declared nodes normalized against the padded
// bounding box of the generated data plus every declared node (off-route
// nodes can lie outside the sampled corridors), edges counted from the
// sampled routes. Deterministic given spec.seed.
SynthWorld synth_world(const WorldSpec& spec);

// Four nodes: a start, a fork turning point, and two destinations; routes
// fork -> upper and fork -> lower. The smallest world where both graph
// recovery and transition scoring are non-trivial.
WorldSpec y_world_spec();

// Nine nodes, two expert routes of unequal length sharing the start node,
// plus two off-route nodes. Exercises route switching: splicing the short
// route's prefix onto the long route's tail crosses a never-observed
// transition.
WorldSpec two_route_world_spec();

// Default experiment substrate: seven nodes, three routes sharing corridors
// pairwise, sized so forged detours and switches are geometrically plausible.
WorldSpec default_world_spec();

}  // namespace ihid
