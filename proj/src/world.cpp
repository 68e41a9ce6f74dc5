#include "ihid/world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ihid/resample.hpp"

namespace ihid {

namespace {

void validate_spec(const WorldSpec& spec) {
  if (spec.nodes.empty()) throw std::invalid_argument("world: no nodes");
  for (std::size_t i = 0; i < spec.nodes.size(); ++i)
    if (spec.nodes[i].id != static_cast<int>(i))
      throw std::invalid_argument("world: node ids must be dense from 0");
  if (spec.routes.empty()) throw std::invalid_argument("world: no routes");
  for (const auto& r : spec.routes) {
    if (r.nodes.size() < 2) throw std::invalid_argument("world: route needs >= 2 nodes");
    if (r.weight <= 0.0) throw std::invalid_argument("world: route weight must be positive");
    if (r.noise_amp < 0.0) throw std::invalid_argument("world: negative noise amplitude");
    for (int id : r.nodes)
      if (id < 0 || id >= static_cast<int>(spec.nodes.size()))
        throw std::invalid_argument("world: route references unknown node " + std::to_string(id));
  }
  if (spec.points_per_leg_min < 2 || spec.points_per_leg_max < spec.points_per_leg_min)
    throw std::invalid_argument("world: bad points-per-leg range");
}

}  // namespace

Trajectory synth_route_trajectory(const WorldSpec& spec, const std::vector<int>& route,
                                  double noise_amp, const std::string& id, double t0, Rng& rng) {
  if (route.size() < 2) throw std::invalid_argument("world: route needs >= 2 nodes");
  std::uniform_int_distribution<int> n_dist(spec.points_per_leg_min, spec.points_per_leg_max);
  std::uniform_real_distribution<double> w_dist(-1.0, 1.0);

  Trajectory traj;
  traj.id = id;
  traj.label = Label::normal;
  double t = t0;
  const auto& n0 = spec.nodes.at(static_cast<std::size_t>(route.front()));
  traj.points.push_back({n0.lat, n0.lon, t});

  for (std::size_t leg = 0; leg + 1 < route.size(); ++leg) {
    const auto& a = spec.nodes.at(static_cast<std::size_t>(route[leg]));
    const auto& b = spec.nodes.at(static_cast<std::size_t>(route[leg + 1]));
    const double dx = b.lon - a.lon, dy = b.lat - a.lat;
    const double len = std::hypot(dx, dy);
    if (len == 0.0) throw std::invalid_argument("world: coincident route nodes");
    const double px = -dy / len, py = dx / len;  // unit perpendicular

    const int n = n_dist(rng);
    const double w1 = w_dist(rng), w2 = w_dist(rng), w3 = w_dist(rng);
    constexpr double pi = 3.14159265358979323846;
    for (int j = 1; j <= n; ++j) {
      const double u = static_cast<double>(j) / n;
      const double off = noise_amp * (w1 * std::sin(pi * u) + w2 * std::sin(2 * pi * u) / 2 +
                                      w3 * std::sin(3 * pi * u) / 3);
      t += 1.0;
      traj.points.push_back({a.lat + u * dy + off * py, a.lon + u * dx + off * px, t});
    }
  }
  return traj;
}

SynthWorld synth_world(const WorldSpec& spec) {
  validate_spec(spec);
  if (spec.count < 1) throw std::invalid_argument("world: count must be >= 1");

  std::vector<double> weights;
  weights.reserve(spec.routes.size());
  for (const auto& r : spec.routes) weights.push_back(r.weight);
  std::discrete_distribution<std::size_t> route_dist(weights.begin(), weights.end());

  SynthWorld world;
  Rng rng(derive_seed(spec.seed, fnv1a64("synth_world")));
  for (int i = 0; i < spec.count; ++i) {
    const std::size_t r = route_dist(rng);
    world.route_of.push_back(r);
    world.trajs.push_back(synth_route_trajectory(spec, spec.routes[r].nodes,
                                                 spec.routes[r].noise_amp,
                                                 spec.id_prefix + std::to_string(i),
                                                 1e6 * i, rng));
  }

  // the normalization frame must cover every declared node, not just the
  // sampled corridors: off-route nodes can sit outside the data extent
  world.bbox = compute_bbox(world.trajs, 0.0);
  for (const auto& n : spec.nodes) {
    world.bbox.lat_min = std::min(world.bbox.lat_min, n.lat);
    world.bbox.lat_max = std::max(world.bbox.lat_max, n.lat);
    world.bbox.lon_min = std::min(world.bbox.lon_min, n.lon);
    world.bbox.lon_max = std::max(world.bbox.lon_max, n.lon);
  }
  if (spec.bbox_pad > 0.0) {
    const double dlat = (world.bbox.lat_max - world.bbox.lat_min) * spec.bbox_pad;
    const double dlon = (world.bbox.lon_max - world.bbox.lon_min) * spec.bbox_pad;
    world.bbox.lat_min -= dlat;
    world.bbox.lat_max += dlat;
    world.bbox.lon_min -= dlon;
    world.bbox.lon_max += dlon;
  }
  for (const auto& n : spec.nodes) {
    SubgoalNode gn;
    gn.id = n.id;
    gn.center = normalize_point({n.lat, n.lon, std::nullopt}, world.bbox);
    gn.radius = spec.node_radius;
    gn.kind = n.kind;
    world.graph.nodes.push_back(gn);
  }
  world.graph.params.radius = spec.node_radius;
  world.graph.bbox = world.bbox;
  for (std::size_t i = 0; i < world.trajs.size(); ++i) {
    const auto& path = spec.routes[world.route_of[i]].nodes;
    for (std::size_t k = 0; k + 1 < path.size(); ++k)
      world.graph.edges[{path[k], path[k + 1]}] += 1;
  }
  return world;
}

WorldSpec y_world_spec() {
  WorldSpec s;
  s.nodes = {{0, 0.10, 0.50, NodeKind::destination},
             {1, 0.50, 0.50, NodeKind::turning_point},
             {2, 0.90, 0.80, NodeKind::destination},
             {3, 0.90, 0.20, NodeKind::destination}};
  s.routes = {{{0, 1, 2}, 1.0, 0.006}, {{0, 1, 3}, 1.0, 0.006}};
  s.count = 60;
  return s;
}

WorldSpec two_route_world_spec() {
  WorldSpec s;
  // Long southern route 6-5-4-1-0 and short northern route 6-7-8 share node
  // 6; nodes 2 and 3 belong to neither route.
  s.nodes = {{0, 0.88, 0.30, NodeKind::destination},
             {1, 0.64, 0.36, NodeKind::turning_point},
             {2, 0.30, 0.10, NodeKind::turning_point},
             {3, 0.70, 0.10, NodeKind::turning_point},
             {4, 0.46, 0.34, NodeKind::turning_point},
             {5, 0.28, 0.38, NodeKind::turning_point},
             {6, 0.10, 0.50, NodeKind::destination},
             {7, 0.34, 0.68, NodeKind::turning_point},
             {8, 0.88, 0.72, NodeKind::destination}};
  s.routes = {{{6, 5, 4, 1, 0}, 1.0, 0.006}, {{6, 7, 8}, 1.0, 0.006}};
  s.count = 120;
  return s;
}

WorldSpec default_world_spec() {
  WorldSpec s;
  s.nodes = {{0, 0.08, 0.12, NodeKind::destination},
             {1, 0.45, 0.20, NodeKind::turning_point},
             {2, 0.92, 0.14, NodeKind::destination},
             {3, 0.12, 0.52, NodeKind::turning_point},
             {4, 0.50, 0.62, NodeKind::turning_point},
             {5, 0.90, 0.58, NodeKind::destination},
             {6, 0.46, 0.95, NodeKind::destination}};
  s.routes = {{{0, 1, 2}, 1.0, 0.006},
              {{0, 3, 4, 5}, 1.0, 0.006},
              {{2, 4, 6}, 1.0, 0.006}};
  s.count = 300;
  return s;
}

}  // namespace ihid
