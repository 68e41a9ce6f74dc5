#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "ihid/geo.hpp"
#include "ihid/graph.hpp"

namespace ihid {

struct Segmentation {
  std::vector<int> subgoal_seq;                   // node ids, no immediate repeats
  std::vector<std::size_t> hit_indices;           // first point index inside each node region
  std::vector<std::pair<std::size_t, std::size_t>> leg_ranges;  // inclusive point index spans
  std::vector<Eigen::MatrixXd> legs;              // L x 2, normalized + resampled
  std::vector<std::vector<GeoPoint>> raw_legs;    // raw point slices per leg
};

// Decomposes a trajectory against the node regions of `graph`. A hit is the
// first point entering a region; consecutive duplicate hits collapse. Legs are
// the point slices between consecutive hits; points before the first hit and
// after the last are attached to the first/last leg. Returns nullopt when
// fewer than 2 distinct hits exist (not decomposable).
std::optional<Segmentation> segment_by_graph(const Trajectory& traj, const SubgoalGraph& graph,
                                             const BoundingBox& bbox, int leg_len);

}  // namespace ihid
