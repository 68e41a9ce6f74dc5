#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ihid/geo.hpp"

namespace ihid {

enum class NodeKind { destination, turning_point };

struct GraphParams {
  int f_min = 2;            // turning-point candidates with frequency <= f_min are dropped
  double d_min = 0.15;      // minimum center separation, normalized units
  double radius = 0.07;     // node region radius, normalized units
  double theta_turn = 30.0; // heading-change threshold, degrees
  int window = 5;           // heading window, points
  double bandwidth = 0.1;   // mean-shift bandwidth, normalized units
};

struct SubgoalNode {
  int id = 0;
  Vec2 center{0.0, 0.0};  // normalized coords
  double radius = 0.0;
  NodeKind kind = NodeKind::destination;
};

struct SubgoalGraph {
  std::vector<SubgoalNode> nodes;                 // sorted by id, ids dense from 0
  std::map<std::pair<int, int>, int> edges;        // (from, to) -> traversal count
  GraphParams params;
  BoundingBox bbox;  // normalization frame the centers live in; saved alongside

  bool has_node(int id) const { return id >= 0 && id < static_cast<int>(nodes.size()); }
  const SubgoalNode& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
  int edge_count(int from, int to) const {
    auto it = edges.find({from, to});
    return it == edges.end() ? 0 : it->second;
  }
};

struct ClusterMode {
  Vec2 center{0.0, 0.0};
  int count = 0;  // members converging to this mode
};

// Flat-kernel mean shift: each point iterates to the mean of neighbours within
// `bandwidth` until the shift drops below 1e-6; converged modes closer than
// bandwidth/2 are merged (count-weighted).
std::vector<ClusterMode> cluster_destinations(const std::vector<Vec2>& endpoints,
                                              double bandwidth);

struct TurnCandidate {
  Vec2 center{0.0, 0.0};            // mean of contributing marked points
  std::pair<long, long> bin{0, 0};  // spatial bin key
  int frequency = 0;
};

// Windowed heading-change detector over normalized polylines. A point is
// marked when the mean headings of the w segments before and after differ by
// more than theta_turn degrees. Marked points are binned at `bin_size`
// resolution; candidates are returned sorted by frequency desc, then bin key.
std::vector<TurnCandidate> detect_turning_points(const std::vector<Polyline>& trajs,
                                                 double theta_turn, int window,
                                                 double bin_size);

struct HitSequence {
  std::vector<int> ids;             // consecutive duplicates collapsed
  std::vector<std::size_t> indices; // first point index inside each region
};

// First-entry walk of a normalized polyline over the node regions. A point
// inside several regions counts toward the nearest center (lower id on ties).
HitSequence subgoal_hits(const Polyline& pts, const SubgoalGraph& graph);

// Node rules: trajectory endpoints are clustered into destination nodes
// (always kept); turning-point candidates with frequency > f_min are added
// greedily in frequency order, skipping any within d_min of an existing node.
// Edges are the consecutive subgoal pairs observed when segmenting the
// training set against the node set.
SubgoalGraph build_graph(const std::vector<Trajectory>& trajs, const BoundingBox& bbox,
                         const GraphParams& params);

// Nearest node id if the center distance is <= 2 * node radius, else nullopt.
// Ties break toward the lower id.
std::optional<int> nearest_node(const SubgoalGraph& graph, const Vec2& p);

void save_graph_json(const SubgoalGraph& graph, const std::string& path);
SubgoalGraph load_graph_json(const std::string& path);

}  // namespace ihid
