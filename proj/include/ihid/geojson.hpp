#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "ihid/detector.hpp"
#include "ihid/geo.hpp"
#include "ihid/graph.hpp"

namespace ihid {

// FeatureCollection for visual inspection: each trajectory a LineString in
// lon/lat order with properties {id, label, verdict, stage} (verdict and
// stage come from the report matching the trajectory id, null when absent),
// and each graph node a Point with its denormalized center plus id, kind and
// radius properties. Pass graph with the bbox it was normalized against.
nlohmann::json to_geojson(const std::vector<Trajectory>& trajs,
                          const std::vector<TrajectoryReport>& reports,
                          const SubgoalGraph* graph = nullptr,
                          const BoundingBox* bbox = nullptr);

void export_geojson(const std::string& path, const std::vector<Trajectory>& trajs,
                    const std::vector<TrajectoryReport>& reports = {},
                    const SubgoalGraph* graph = nullptr, const BoundingBox* bbox = nullptr);

}  // namespace ihid
