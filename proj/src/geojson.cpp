#include "ihid/geojson.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include "ihid/resample.hpp"

namespace ihid {

using nlohmann::json;

json to_geojson(const std::vector<Trajectory>& trajs,
                const std::vector<TrajectoryReport>& reports, const SubgoalGraph* graph,
                const BoundingBox* bbox) {
  std::map<std::string, const TrajectoryReport*> by_id;
  for (const auto& r : reports) by_id[r.traj_id] = &r;

  json features = json::array();
  for (const auto& t : trajs) {
    json coords = json::array();
    for (const auto& p : t.points) coords.push_back(json::array({p.lon, p.lat}));

    json props{{"id", t.id}, {"label", label_to_string(t.label)}};
    const auto it = by_id.find(t.id);
    if (it != by_id.end()) {
      const TrajectoryReport& r = *it->second;
      props["verdict"] = r.is_anomaly ? "anomalous" : "normal";
      std::string stage = "normal";
      for (const auto& v : r.legs)
        if (v.is_anomaly) {
          stage = to_string(v.stage);
          break;
        }
      props["stage"] = stage;
    } else {
      props["verdict"] = nullptr;
      props["stage"] = nullptr;
    }
    features.push_back(json{{"type", "Feature"},
                            {"geometry", json{{"type", "LineString"}, {"coordinates", coords}}},
                            {"properties", props}});
  }

  if (graph) {
    if (!bbox) throw std::invalid_argument("to_geojson: graph given without its bbox");
    for (const auto& n : graph->nodes) {
      const GeoPoint c = denormalize_point(n.center, *bbox);
      features.push_back(json{
          {"type", "Feature"},
          {"geometry", json{{"type", "Point"}, {"coordinates", json::array({c.lon, c.lat})}}},
          {"properties",
           json{{"node_id", n.id},
                {"kind", n.kind == NodeKind::destination ? "destination" : "turning_point"},
                {"radius", n.radius}}}});
    }
  }
  return json{{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

void export_geojson(const std::string& path, const std::vector<Trajectory>& trajs,
                    const std::vector<TrajectoryReport>& reports, const SubgoalGraph* graph,
                    const BoundingBox* bbox) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_geojson(trajs, reports, graph, bbox).dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace ihid
