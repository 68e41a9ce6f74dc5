#include "ihid/segment.hpp"

#include <stdexcept>

#include "ihid/resample.hpp"

namespace ihid {

std::optional<Segmentation> segment_by_graph(const Trajectory& traj, const SubgoalGraph& graph,
                                             const BoundingBox& bbox, int leg_len) {
  if (graph.nodes.empty()) throw std::invalid_argument("segment_by_graph: empty graph");
  if (leg_len < 2) throw std::invalid_argument("segment_by_graph: leg_len must be >= 2");

  const Polyline pts = normalize_points(traj.points, bbox, /*clamp=*/true);

  Segmentation seg;
  const HitSequence hits = subgoal_hits(pts, graph);
  seg.subgoal_seq = hits.ids;
  seg.hit_indices = hits.indices;
  if (seg.subgoal_seq.size() < 2) return std::nullopt;

  const std::size_t k = seg.subgoal_seq.size();
  for (std::size_t li = 0; li + 1 < k; ++li) {
    std::size_t begin = seg.hit_indices[li];
    std::size_t end = seg.hit_indices[li + 1];
    if (li == 0) begin = 0;
    if (li + 2 == k) end = pts.size() - 1;
    seg.leg_ranges.emplace_back(begin, end);

    std::vector<GeoPoint> raw(traj.points.begin() + begin, traj.points.begin() + end + 1);
    Polyline leg(pts.begin() + begin, pts.begin() + end + 1);
    if (leg.size() < 2 || polyline_length(leg) <= 0.0) {
      // Degenerate slice (coincident hit points); pad with the hit position so
      // the leg count stays consistent with the subgoal sequence.
      leg = {pts[seg.hit_indices[li]], pts[seg.hit_indices[li + 1]]};
      if (polyline_length(leg) <= 0.0) leg[1].x() += 1e-12;
    }
    seg.legs.push_back(polyline_to_matrix(resample_arclength(leg, leg_len)));
    seg.raw_legs.push_back(std::move(raw));
  }
  return seg;
}

}  // namespace ihid
