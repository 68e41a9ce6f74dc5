#include "ihid/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "ihid/common.hpp"
#include "ihid/resample.hpp"

namespace ihid {

std::vector<ClusterMode> cluster_destinations(const std::vector<Vec2>& endpoints,
                                              double bandwidth) {
  if (endpoints.empty()) throw std::invalid_argument("cluster_destinations: no endpoints");
  if (bandwidth <= 0.0) throw std::invalid_argument("cluster_destinations: bandwidth <= 0");

  constexpr double kShiftTol = 1e-6;
  constexpr int kMaxIter = 500;

  std::vector<Vec2> modes(endpoints.size());
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    Vec2 x = endpoints[i];
    for (int it = 0; it < kMaxIter; ++it) {
      Vec2 sum(0.0, 0.0);
      int n = 0;
      for (const auto& p : endpoints) {
        if ((p - x).norm() <= bandwidth) {
          sum += p;
          ++n;
        }
      }
      const Vec2 next = n > 0 ? Vec2(sum / n) : x;
      const double shift = (next - x).norm();
      x = next;
      if (shift < kShiftTol) break;
    }
    modes[i] = x;
  }

  std::vector<ClusterMode> out;
  for (const auto& m : modes) {
    bool merged = false;
    for (auto& c : out) {
      if ((m - c.center).norm() < bandwidth * 0.5) {
        c.center = (c.center * c.count + m) / (c.count + 1);
        ++c.count;
        merged = true;
        break;
      }
    }
    if (!merged) out.push_back({m, 1});
  }
  return out;
}

namespace {

double wrap_angle_deg(double a) {
  while (a > 180.0) a -= 360.0;
  while (a < -180.0) a += 360.0;
  return a;
}

// Circular mean of segment headings over [first, last) segment indices.
std::optional<double> mean_heading_deg(const Polyline& pts, std::size_t first, std::size_t last) {
  double sx = 0.0, sy = 0.0;
  int n = 0;
  for (std::size_t j = first; j < last; ++j) {
    const Vec2 d = pts[j + 1] - pts[j];
    const double len = d.norm();
    if (len <= 0.0) continue;
    sx += d.x() / len;
    sy += d.y() / len;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return std::atan2(sy, sx) * 180.0 / M_PI;
}

}  // namespace

std::vector<TurnCandidate> detect_turning_points(const std::vector<Polyline>& trajs,
                                                 double theta_turn, int window,
                                                 double bin_size) {
  if (theta_turn <= 0.0 || theta_turn >= 180.0)
    throw std::invalid_argument("detect_turning_points: theta_turn must be in (0, 180)");
  if (window < 1) throw std::invalid_argument("detect_turning_points: window must be >= 1");
  if (bin_size <= 0.0) throw std::invalid_argument("detect_turning_points: bin_size <= 0");

  struct Bin {
    Vec2 sum{0.0, 0.0};
    int count = 0;
  };
  std::map<std::pair<long, long>, Bin> bins;

  const std::size_t w = static_cast<std::size_t>(window);
  for (const auto& pts : trajs) {
    if (pts.size() < 2 * w + 1) continue;
    for (std::size_t i = w; i + w < pts.size(); ++i) {
      const auto before = mean_heading_deg(pts, i - w, i);
      const auto after = mean_heading_deg(pts, i, i + w);
      if (!before || !after) continue;
      const double change = std::abs(wrap_angle_deg(*after - *before));
      if (change <= theta_turn) continue;
      const std::pair<long, long> key{static_cast<long>(std::floor(pts[i].x() / bin_size)),
                                      static_cast<long>(std::floor(pts[i].y() / bin_size))};
      auto& b = bins[key];
      b.sum += pts[i];
      ++b.count;
    }
  }

  std::vector<TurnCandidate> out;
  out.reserve(bins.size());
  for (const auto& [key, b] : bins)
    out.push_back({Vec2(b.sum / b.count), key, b.count});
  std::sort(out.begin(), out.end(), [](const TurnCandidate& a, const TurnCandidate& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return a.bin < b.bin;
  });
  return out;
}

HitSequence subgoal_hits(const Polyline& pts, const SubgoalGraph& graph) {
  HitSequence hs;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& n : graph.nodes) {
      const double d = (pts[i] - n.center).norm();
      if (d <= n.radius && d < best_dist) {
        best = n.id;
        best_dist = d;
      }
    }
    if (best < 0) continue;
    if (!hs.ids.empty() && hs.ids.back() == best) continue;
    hs.ids.push_back(best);
    hs.indices.push_back(i);
  }
  return hs;
}

SubgoalGraph build_graph(const std::vector<Trajectory>& trajs, const BoundingBox& bbox,
                         const GraphParams& params) {
  if (trajs.empty()) throw std::invalid_argument("build_graph: empty training set");

  std::vector<Polyline> normalized;
  normalized.reserve(trajs.size());
  std::vector<Vec2> endpoints;
  endpoints.reserve(trajs.size() * 2);
  for (const auto& t : trajs) {
    normalized.push_back(normalize_points(t.points, bbox, /*clamp=*/true));
    endpoints.push_back(normalized.back().front());
    endpoints.push_back(normalized.back().back());
  }

  auto modes = cluster_destinations(endpoints, params.bandwidth);
  if (modes.empty()) throw std::runtime_error("build_graph: no destinations found");
  std::sort(modes.begin(), modes.end(), [](const ClusterMode& a, const ClusterMode& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.center.x() != b.center.x()) return a.center.x() < b.center.x();
    return a.center.y() < b.center.y();
  });

  SubgoalGraph graph;
  graph.params = params;
  graph.bbox = bbox;
  auto too_close = [&](const Vec2& c) {
    for (const auto& n : graph.nodes)
      if ((c - n.center).norm() <= params.d_min) return true;
    return false;
  };
  // Destination modes closer than d_min fold into the earlier (larger) one so
  // pairwise separation holds for the final node set.
  for (const auto& m : modes) {
    if (too_close(m.center)) continue;
    graph.nodes.push_back({static_cast<int>(graph.nodes.size()), m.center, params.radius,
                           NodeKind::destination});
  }

  const auto candidates =
      detect_turning_points(normalized, params.theta_turn, params.window, params.d_min * 0.5);
  for (const auto& c : candidates) {
    if (c.frequency <= params.f_min) continue;
    if (too_close(c.center)) continue;
    graph.nodes.push_back({static_cast<int>(graph.nodes.size()), c.center, params.radius,
                           NodeKind::turning_point});
  }

  for (const auto& pts : normalized) {
    const auto hits = subgoal_hits(pts, graph);
    for (std::size_t i = 1; i < hits.ids.size(); ++i)
      ++graph.edges[{hits.ids[i - 1], hits.ids[i]}];
  }
  return graph;
}

std::optional<int> nearest_node(const SubgoalGraph& graph, const Vec2& p) {
  if (graph.nodes.empty()) throw std::invalid_argument("nearest_node: empty graph");
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& n : graph.nodes) {
    const double d = (p - n.center).norm();
    if (d < best_dist) {
      best = n.id;
      best_dist = d;
    }
  }
  if (best < 0 || best_dist > 2.0 * graph.node(best).radius) return std::nullopt;
  return best;
}

void save_graph_json(const SubgoalGraph& graph, const std::string& path) {
  nlohmann::json j;
  j["params"] = {{"f_min", graph.params.f_min},       {"d_min", graph.params.d_min},
                 {"radius", graph.params.radius},     {"theta_turn", graph.params.theta_turn},
                 {"window", graph.params.window},     {"bandwidth", graph.params.bandwidth}};
  j["bbox"] = {{"lat_min", graph.bbox.lat_min},
               {"lat_max", graph.bbox.lat_max},
               {"lon_min", graph.bbox.lon_min},
               {"lon_max", graph.bbox.lon_max}};
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : graph.nodes)
    j["nodes"].push_back({{"id", n.id},
                          {"x", n.center.x()},
                          {"y", n.center.y()},
                          {"radius", n.radius},
                          {"kind", n.kind == NodeKind::destination ? "destination"
                                                                   : "turning_point"}});
  j["edges"] = nlohmann::json::array();
  for (const auto& [key, count] : graph.edges)
    j["edges"].push_back({{"from", key.first}, {"to", key.second}, {"count", count}});

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write graph file: " + path);
  out << j.dump(2) << '\n';
}

SubgoalGraph load_graph_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad graph json: ") + e.what());
  }

  SubgoalGraph graph;
  const auto& p = j.at("params");
  graph.params.f_min = p.at("f_min").get<int>();
  graph.params.d_min = p.at("d_min").get<double>();
  graph.params.radius = p.at("radius").get<double>();
  graph.params.theta_turn = p.at("theta_turn").get<double>();
  graph.params.window = p.at("window").get<int>();
  graph.params.bandwidth = p.at("bandwidth").get<double>();
  const auto& bb = j.at("bbox");
  graph.bbox.lat_min = bb.at("lat_min").get<double>();
  graph.bbox.lat_max = bb.at("lat_max").get<double>();
  graph.bbox.lon_min = bb.at("lon_min").get<double>();
  graph.bbox.lon_max = bb.at("lon_max").get<double>();

  for (const auto& n : j.at("nodes")) {
    SubgoalNode node;
    node.id = n.at("id").get<int>();
    node.center = Vec2(n.at("x").get<double>(), n.at("y").get<double>());
    node.radius = n.at("radius").get<double>();
    node.kind = n.at("kind").get<std::string>() == "destination" ? NodeKind::destination
                                                                 : NodeKind::turning_point;
    graph.nodes.push_back(node);
  }
  std::sort(graph.nodes.begin(), graph.nodes.end(),
            [](const SubgoalNode& a, const SubgoalNode& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < graph.nodes.size(); ++i)
    if (graph.nodes[i].id != static_cast<int>(i))
      throw ParseError("graph node ids must be dense from 0");

  for (const auto& e : j.at("edges")) {
    const int from = e.at("from").get<int>();
    const int to = e.at("to").get<int>();
    if (!graph.has_node(from) || !graph.has_node(to))
      throw ParseError("graph edge references unknown node");
    graph.edges[{from, to}] = e.at("count").get<int>();
  }
  return graph;
}

}  // namespace ihid
