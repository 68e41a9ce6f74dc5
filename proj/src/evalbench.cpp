#include "ihid/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ihid/segment.hpp"

namespace ihid {

using nlohmann::json;

Metrics metrics(const ConfusionCounts& c) {
  Metrics m;
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / (c.tp + c.fn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0)
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  if (c.tn + c.fp > 0) m.specificity = static_cast<double>(c.tn) / (c.tn + c.fp);
  return m;
}

ConfusionCounts count_confusion(const std::vector<TrajectoryReport>& reports,
                                std::optional<Label> type) {
  ConfusionCounts c;
  for (const auto& r : reports) {
    const bool truth_anomalous = r.label != Label::normal && r.label != Label::unknown;
    if (type && truth_anomalous && r.label != *type) continue;  // other anomaly types excluded
    if (truth_anomalous)
      (r.is_anomaly ? c.tp : c.fn) += 1;
    else
      (r.is_anomaly ? c.fp : c.tn) += 1;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

std::string kind_to_string(NodeKind k) {
  return k == NodeKind::destination ? "destination" : "turning_point";
}

NodeKind kind_from_string(const std::string& s) {
  if (s == "destination") return NodeKind::destination;
  if (s == "turning_point") return NodeKind::turning_point;
  throw ParseError("unknown node kind \"" + s + "\"");
}

json sanitized_report(const TrajectoryReport& r) {
  json j = report_to_json(r);
  j.erase("wall_time_s");  // experiment reports carry one top-level timing key
  return j;
}

}  // namespace

void to_json(json& j, const GraphParams& p) {
  j = json{{"f_min", p.f_min},         {"d_min", p.d_min},   {"radius", p.radius},
           {"theta_turn", p.theta_turn}, {"window", p.window}, {"bandwidth", p.bandwidth}};
}

void from_json(const json& j, GraphParams& p) {
  check_json_keys(j, {"f_min", "d_min", "radius", "theta_turn", "window", "bandwidth"},
                  "graph config");
  get_if(j, "f_min", p.f_min);
  get_if(j, "d_min", p.d_min);
  get_if(j, "radius", p.radius);
  get_if(j, "theta_turn", p.theta_turn);
  get_if(j, "window", p.window);
  get_if(j, "bandwidth", p.bandwidth);
}

void to_json(json& j, const ForgeParams& p) {
  j = json{{"d", p.d}, {"omega", p.omega}, {"omega_star", p.omega_star}, {"sigma", p.sigma}};
}

void from_json(const json& j, ForgeParams& p) {
  check_json_keys(j, {"d", "omega", "omega_star", "sigma"}, "forge config");
  get_if(j, "d", p.d);
  get_if(j, "omega", p.omega);
  get_if(j, "omega_star", p.omega_star);
  get_if(j, "sigma", p.sigma);
}

void to_json(json& j, const Thresholds& t) {
  j = json{{"gamma_q", t.gamma_q}, {"beta_e", t.beta_e}};
}

void from_json(const json& j, Thresholds& t) {
  check_json_keys(j, {"gamma_q", "beta_e"}, "thresholds config");
  get_if(j, "gamma_q", t.gamma_q);
  get_if(j, "beta_e", t.beta_e);
}

void to_json(json& j, const WorldNode& n) {
  j = json{{"id", n.id}, {"lon", n.lon}, {"lat", n.lat}, {"kind", kind_to_string(n.kind)}};
}

void from_json(const json& j, WorldNode& n) {
  check_json_keys(j, {"id", "lon", "lat", "kind"}, "world node");
  n.id = j.at("id").get<int>();
  n.lon = j.at("lon").get<double>();
  n.lat = j.at("lat").get<double>();
  if (j.contains("kind")) n.kind = kind_from_string(j.at("kind").get<std::string>());
}

void to_json(json& j, const WorldRoute& r) {
  j = json{{"nodes", r.nodes}, {"weight", r.weight}, {"noise_amp", r.noise_amp}};
}

void from_json(const json& j, WorldRoute& r) {
  check_json_keys(j, {"nodes", "weight", "noise_amp"}, "world route");
  r.nodes = j.at("nodes").get<std::vector<int>>();
  get_if(j, "weight", r.weight);
  get_if(j, "noise_amp", r.noise_amp);
}

void to_json(json& j, const WorldSpec& s) {
  j = json{{"nodes", s.nodes},
           {"routes", s.routes},
           {"points_per_leg_min", s.points_per_leg_min},
           {"points_per_leg_max", s.points_per_leg_max},
           {"count", s.count},
           {"node_radius", s.node_radius},
           {"bbox_pad", s.bbox_pad},
           {"seed", s.seed},
           {"id_prefix", s.id_prefix}};
}

void from_json(const json& j, WorldSpec& s) {
  check_json_keys(j,
                  {"nodes", "routes", "points_per_leg_min", "points_per_leg_max", "count",
                   "node_radius", "bbox_pad", "seed", "id_prefix"},
                  "world config");
  if (j.contains("nodes")) s.nodes = j.at("nodes").get<std::vector<WorldNode>>();
  if (j.contains("routes")) s.routes = j.at("routes").get<std::vector<WorldRoute>>();
  get_if(j, "points_per_leg_min", s.points_per_leg_min);
  get_if(j, "points_per_leg_max", s.points_per_leg_max);
  get_if(j, "count", s.count);
  get_if(j, "node_radius", s.node_radius);
  get_if(j, "bbox_pad", s.bbox_pad);
  get_if(j, "seed", s.seed);
  get_if(j, "id_prefix", s.id_prefix);
}

void to_json(json& j, const RunnerConfig& r) {
  j = json{{"test_count", r.test_count}, {"anomaly_fraction", r.anomaly_fraction},
           {"repeats", r.repeats},       {"samples", r.samples},
           {"workers", r.workers},       {"graph_source", r.graph_source},
           {"seed", r.seed}};
}

void from_json(const json& j, RunnerConfig& r) {
  check_json_keys(
      j, {"test_count", "anomaly_fraction", "repeats", "samples", "workers", "graph_source",
          "seed"},
      "runner config");
  get_if(j, "test_count", r.test_count);
  get_if(j, "anomaly_fraction", r.anomaly_fraction);
  get_if(j, "repeats", r.repeats);
  get_if(j, "samples", r.samples);
  get_if(j, "workers", r.workers);
  get_if(j, "graph_source", r.graph_source);
  get_if(j, "seed", r.seed);
  if (r.graph_source != "ground_truth" && r.graph_source != "built")
    throw ParseError("runner config: graph_source must be \"ground_truth\" or \"built\"");
}

void to_json(json& j, const Metrics& m) {
  j = json{{"precision", m.precision ? json(*m.precision) : json()},
           {"recall", m.recall ? json(*m.recall) : json()},
           {"f1", m.f1 ? json(*m.f1) : json()},
           {"specificity", m.specificity ? json(*m.specificity) : json()}};
}

void to_json(json& j, const ConfusionCounts& c) {
  j = json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"world", c.world},         {"graph", c.graph},
           {"forge", c.forge},         {"iql", c.iql},
           {"diffusion", c.diffusion}, {"thresholds", c.thresholds},
           {"runner", c.runner}};
}

void from_json(const json& j, ExperimentConfig& c) {
  check_json_keys(j, {"world", "graph", "forge", "iql", "diffusion", "thresholds", "runner"},
                  "experiment config");
  get_if(j, "world", c.world);
  get_if(j, "graph", c.graph);
  get_if(j, "forge", c.forge);
  get_if(j, "iql", c.iql);
  get_if(j, "diffusion", c.diffusion);
  get_if(j, "thresholds", c.thresholds);
  get_if(j, "runner", c.runner);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  ExperimentConfig cfg;
  from_json(j, cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Training and test-set assembly

TrainingData extract_training_data(const std::vector<Trajectory>& trajs,
                                   const SubgoalGraph& graph, const BoundingBox& bbox,
                                   int leg_len) {
  TrainingData data;
  for (const auto& traj : trajs) {
    const auto seg = segment_by_graph(traj, graph, bbox, leg_len);
    bool usable = seg.has_value();
    if (usable)
      for (std::size_t i = 0; i + 1 < seg->subgoal_seq.size(); ++i)
        if (graph.edge_count(seg->subgoal_seq[i], seg->subgoal_seq[i + 1]) < 1) {
          usable = false;  // grazed an off-route region; not expert-consistent
          break;
        }
    if (!usable) {
      ++data.dropped;
      continue;
    }
    data.seqs.push_back(seg->subgoal_seq);
    for (std::size_t i = 0; i + 1 < seg->subgoal_seq.size(); ++i)
      data.legs.push_back({seg->legs[i], graph.node(seg->subgoal_seq[i]).center,
                           graph.node(seg->subgoal_seq[i + 1]).center});
  }
  return data;
}

TrainedModels train_models(const ExperimentConfig& cfg) {
  const std::uint64_t S = cfg.runner.seed;
  WorldSpec spec = cfg.world;
  spec.seed = derive_seed(S, fnv1a64("train_world"));
  SynthWorld world = synth_world(spec);

  TrainedModels out;
  out.bbox = world.bbox;
  out.graph = cfg.runner.graph_source == "built"
                  ? build_graph(world.trajs, world.bbox, cfg.graph)
                  : world.graph;

  TrainingData data = extract_training_data(world.trajs, out.graph, out.bbox, cfg.diffusion.L);
  out.dropped_training = data.dropped;
  if (data.seqs.empty())
    throw std::runtime_error("train_models: no usable training trajectories");

  IqlConfig iql_cfg = cfg.iql;
  iql_cfg.seed = derive_seed(S, fnv1a64("train_high"));
  out.q = train_iql(data.seqs, out.graph, iql_cfg).q;

  DiffusionConfig diff_cfg = cfg.diffusion;
  diff_cfg.seed = derive_seed(S, fnv1a64("train_low"));
  out.dm = train_diffusion(data.legs, diff_cfg).model;
  return out;
}

std::vector<Trajectory> make_test_set(const WorldSpec& world_spec, const SubgoalGraph& graph,
                                      const BoundingBox& bbox, int leg_len,
                                      const ForgeParams& forge, int count,
                                      double anomaly_fraction, std::uint64_t seed,
                                      const std::string& id_prefix) {
  if (count < 1) throw std::invalid_argument("make_test_set: count must be >= 1");
  if (anomaly_fraction < 0.0 || anomaly_fraction > 1.0)
    throw std::invalid_argument("make_test_set: anomaly_fraction in [0,1]");

  WorldSpec spec = world_spec;
  spec.count = count;
  spec.seed = derive_seed(seed, fnv1a64("test_world"));
  spec.id_prefix = id_prefix;
  SynthWorld tw = synth_world(spec);
  std::vector<Trajectory>& set = tw.trajs;

  Rng rng(derive_seed(seed, fnv1a64("forge")));
  const long n_anom = std::lround(count * anomaly_fraction);
  long quota_big = n_anom / 3 + (n_anom % 3 > 0 ? 1 : 0);
  long quota_small = n_anom / 3 + (n_anom % 3 > 1 ? 1 : 0);
  long quota_switch = n_anom / 3;

  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> forged(set.size(), 0);

  for (std::size_t oi = 0; oi < order.size() && quota_big + quota_small + quota_switch > 0;
       ++oi) {
    const std::size_t i = order[oi];
    const Trajectory& src = set[i];
    if (quota_big > 0) {
      try {
        Trajectory f = make_big_detour(src, forge.d, forge.omega, rng);
        set[i] = std::move(f);
        forged[i] = 1;
        --quota_big;
      } catch (const std::exception&) {
        // source too short for the window; leave it normal and move on
      }
      continue;
    }
    if (quota_small > 0) {
      const auto seg = segment_by_graph(src, graph, bbox, leg_len);
      if (!seg) continue;
      auto f = make_small_detour(src, *seg, graph, bbox, leg_len, forge.d, forge.omega_star,
                                 rng);
      if (f) {
        set[i] = std::move(*f);
        forged[i] = 1;
        --quota_small;
      }
      continue;
    }
    // Route switch: pair with an unforged partner, preferring another route.
    std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
    for (int attempt = 0; attempt < 20; ++attempt) {
      const std::size_t b = pick(rng);
      if (b == i || forged[b]) continue;
      if (attempt < 10 && tw.route_of[b] == tw.route_of[i]) continue;
      auto f = make_route_switch(src, set[b], forge.sigma, rng);
      if (f) {
        set[i] = std::move(*f);
        forged[i] = 1;
        --quota_switch;
        break;
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Experiment runner

namespace {

json repeat_block(const std::vector<TrajectoryReport>& reports) {
  json block;
  json counts, mets;
  const ConfusionCounts overall = count_confusion(reports);
  counts["overall"] = overall;
  mets["overall"] = metrics(overall);
  for (Label type : {Label::big_detour, Label::small_detour, Label::route_switch}) {
    const ConfusionCounts c = count_confusion(reports, type);
    counts[label_to_string(type)] = c;
    mets[label_to_string(type)] = metrics(c);
  }

  json hist{{"high_level_reject", 0},
            {"low_level_reject", 0},
            {"off_graph_reject", 0},
            {"normal", 0}};
  for (const auto& r : reports) {
    if (!r.is_anomaly) {
      hist["normal"] = hist["normal"].get<int>() + 1;
      continue;
    }
    for (const auto& v : r.legs)
      if (v.is_anomaly) {
        const std::string key = to_string(v.stage);
        hist[key] = hist[key].get<int>() + 1;
        break;
      }
  }

  json verdicts = json::array();
  for (const auto& r : reports) verdicts.push_back(sanitized_report(r));
  block["counts"] = std::move(counts);
  block["metrics"] = std::move(mets);
  block["stage_histogram"] = std::move(hist);
  block["verdicts"] = std::move(verdicts);
  return block;
}

json mean_metrics(const json& repeats) {
  json out;
  const char* groups[] = {"overall", "big_detour", "small_detour", "route_switch"};
  const char* fields[] = {"precision", "recall", "f1", "specificity"};
  for (const char* g : groups) {
    json gm;
    for (const char* f : fields) {
      double sum = 0.0;
      int n = 0;
      for (const auto& rep : repeats) {
        const json& v = rep.at("metrics").at(g).at(f);
        if (!v.is_null()) {
          sum += v.get<double>();
          ++n;
        }
      }
      gm[f] = n > 0 ? json(sum / n) : json();
    }
    out[g] = std::move(gm);
  }
  return out;
}

}  // namespace

json run_experiment_with(const TrainedModels& models, const ExperimentConfig& cfg,
                         DetectorMode mode) {
  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t S = cfg.runner.seed;
  if (cfg.runner.repeats < 1) throw std::invalid_argument("runner: repeats must be >= 1");

  json seeds{{"train_world", derive_seed(S, fnv1a64("train_world"))},
             {"train_high", derive_seed(S, fnv1a64("train_high"))},
             {"train_low", derive_seed(S, fnv1a64("train_low"))},
             {"test_sets", json::array()},
             {"detect", json::array()}};

  json repeats = json::array();
  for (int r = 0; r < cfg.runner.repeats; ++r) {
    const std::uint64_t test_seed = derive_seed(S, fnv1a64("test_set"), r);
    const std::uint64_t detect_seed = derive_seed(S, fnv1a64("detect"), r);
    seeds["test_sets"].push_back(test_seed);
    seeds["detect"].push_back(detect_seed);

    const auto set =
        make_test_set(cfg.world, models.graph, models.bbox, cfg.diffusion.L, cfg.forge,
                      cfg.runner.test_count, cfg.runner.anomaly_fraction, test_seed,
                      "r" + std::to_string(r) + "_");
    DetectorConfig dc;
    dc.th = cfg.thresholds;
    dc.mode = mode;
    dc.samples = cfg.runner.samples;
    dc.t_inf = cfg.diffusion.t_inf;
    dc.seed = detect_seed;
    dc.workers = cfg.runner.workers;
    const auto reports = detect_batch(models.q, models.dm, set, models.graph, models.bbox, dc);
    repeats.push_back(repeat_block(reports));
  }

  json out;
  out["config"] = cfg;
  out["mode"] = to_string(mode);
  out["seeds"] = std::move(seeds);
  out["graph_nodes"] = models.graph.nodes.size();
  out["dropped_training"] = models.dropped_training;
  out["mean"] = mean_metrics(repeats);
  out["repeats"] = std::move(repeats);
  out["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

json run_experiment(const ExperimentConfig& cfg) {
  const TrainedModels models = train_models(cfg);
  return run_experiment_with(models, cfg, DetectorMode::full);
}

json ablate_with(const TrainedModels& models, const ExperimentConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  json variants;
  for (DetectorMode mode : {DetectorMode::full, DetectorMode::high_only, DetectorMode::low_only}) {
    json v = run_experiment_with(models, cfg, mode);
    v.erase("wall_time_s");
    v.erase("config");  // identical across variants; kept once at the top level
    variants[to_string(mode)] = std::move(v);
  }
  json out;
  out["config"] = cfg;
  out["variants"] = std::move(variants);
  out["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

json ablate(const ExperimentConfig& cfg) { return ablate_with(train_models(cfg), cfg); }

json sweep(const ExperimentConfig& cfg, const std::string& param,
           const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  const bool is_rho = param == "rho";
  if (!is_rho && param != "t_inf" && param != "gamma_q" && param != "beta_e")
    throw std::invalid_argument("sweep: unknown parameter \"" + param + "\"");

  const auto started = std::chrono::steady_clock::now();
  std::optional<TrainedModels> shared;
  if (!is_rho) shared = train_models(cfg);

  json points = json::array();
  for (double v : values) {
    ExperimentConfig c = cfg;
    if (is_rho)
      c.diffusion.rho = v;
    else if (param == "t_inf")
      c.diffusion.t_inf = static_cast<int>(v);
    else if (param == "gamma_q")
      c.thresholds.gamma_q = v;
    else
      c.thresholds.beta_e = v;

    json run = is_rho ? run_experiment(c)
                      : run_experiment_with(*shared, c, DetectorMode::full);
    json point{{"value", v}, {"mean", run.at("mean")}};
    points.push_back(std::move(point));
  }

  json out;
  out["param"] = param;
  out["config"] = cfg;
  out["points"] = std::move(points);
  out["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

}  // namespace ihid
