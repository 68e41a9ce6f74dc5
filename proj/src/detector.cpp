#include "ihid/detector.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace ihid {

using nlohmann::json;

std::string to_string(VerdictStage s) {
  switch (s) {
    case VerdictStage::high_level_reject: return "high_level_reject";
    case VerdictStage::low_level_reject: return "low_level_reject";
    case VerdictStage::off_graph_reject: return "off_graph_reject";
    case VerdictStage::normal: return "normal";
  }
  return "normal";
}

VerdictStage verdict_stage_from_string(const std::string& s) {
  if (s == "high_level_reject") return VerdictStage::high_level_reject;
  if (s == "low_level_reject") return VerdictStage::low_level_reject;
  if (s == "off_graph_reject") return VerdictStage::off_graph_reject;
  if (s == "normal") return VerdictStage::normal;
  throw ParseError("unknown verdict stage \"" + s + "\"");
}

std::string to_string(DetectorMode m) {
  switch (m) {
    case DetectorMode::full: return "full";
    case DetectorMode::high_only: return "high_only";
    case DetectorMode::low_only: return "low_only";
  }
  return "full";
}

DetectorMode detector_mode_from_string(const std::string& s) {
  if (s == "full") return DetectorMode::full;
  if (s == "high_only") return DetectorMode::high_only;
  if (s == "low_only") return DetectorMode::low_only;
  throw ParseError("unknown detector mode \"" + s + "\"");
}

LegVerdict detect_leg(const QFunction& q, const DiffusionModel& dm, const SubgoalGraph& graph,
                      const Eigen::MatrixXd& leg, int g_i, int g_next, const Thresholds& th,
                      Rng& rng, DetectorMode mode, int samples, int t_inf) {
  LegVerdict v;
  if (!graph.has_node(g_i) || !graph.has_node(g_next)) {
    v.stage = VerdictStage::off_graph_reject;
    v.is_anomaly = true;
    return v;
  }

  if (mode != DetectorMode::low_only) {
    v.q_score = score_transition(q, g_i, g_next);
    if (*v.q_score <= th.gamma_q) {
      v.stage = VerdictStage::high_level_reject;
      v.is_anomaly = true;
      return v;
    }
    if (mode == DetectorMode::high_only) return v;  // passing score is final
  }

  const int steps = t_inf > 0 ? t_inf : dm.cfg.t_inf;
  const int n_samples = std::max(1, samples);
  const Vec2 g_from = graph.node(g_i).center;
  const Vec2 g_to = graph.node(g_next).center;
  // average the reconstructions, then score: each draw carries sampling noise
  // around the conditional mean, so the averaged path is a far lower-variance
  // reference than any single draw (error against it shrinks ~1/k for normals)
  Eigen::MatrixXd mean_rec = Eigen::MatrixXd::Zero(leg.rows(), leg.cols());
  for (int k = 0; k < n_samples; ++k)
    mean_rec += reconstruct(dm, leg, g_from, g_to, steps, rng);
  mean_rec /= static_cast<double>(n_samples);
  v.e_delta = recon_error(leg, mean_rec);
  if (*v.e_delta >= th.beta_e) {
    v.stage = VerdictStage::low_level_reject;
    v.is_anomaly = true;
  }
  return v;
}

TrajectoryReport detect_trajectory(const QFunction& q, const DiffusionModel& dm,
                                   const Trajectory& traj, const SubgoalGraph& graph,
                                   const BoundingBox& bbox, const DetectorConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  TrajectoryReport rep;
  rep.traj_id = traj.id;
  rep.label = traj.label;

  const auto seg = segment_by_graph(traj, graph, bbox, dm.cfg.L);
  if (!seg) {
    rep.segmentation_failed = true;
    rep.is_anomaly = true;
    LegVerdict v;
    v.stage = VerdictStage::off_graph_reject;
    v.is_anomaly = true;
    rep.legs.push_back(v);
  } else {
    const std::uint64_t id_hash = fnv1a64(traj.id);
    for (std::size_t i = 0; i + 1 < seg->subgoal_seq.size(); ++i) {
      Rng leg_rng(derive_seed(cfg.seed, id_hash, static_cast<std::uint64_t>(i)));
      LegVerdict v = detect_leg(q, dm, graph, seg->legs[i], seg->subgoal_seq[i],
                                seg->subgoal_seq[i + 1], cfg.th, leg_rng, cfg.mode, cfg.samples,
                                cfg.t_inf);
      v.leg_index = static_cast<int>(i);
      rep.is_anomaly = rep.is_anomaly || v.is_anomaly;
      rep.legs.push_back(std::move(v));
    }
  }
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rep;
}

std::vector<TrajectoryReport> detect_batch(const QFunction& q, const DiffusionModel& dm,
                                           const std::vector<Trajectory>& trajs,
                                           const SubgoalGraph& graph, const BoundingBox& bbox,
                                           const DetectorConfig& cfg) {
  std::vector<TrajectoryReport> reports(trajs.size());
  const int workers =
      std::max(1, std::min<int>(cfg.workers, static_cast<int>(trajs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < trajs.size(); ++i)
      reports[i] = detect_trajectory(q, dm, trajs[i], graph, bbox, cfg);
    return reports;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= trajs.size()) break;
      reports[i] = detect_trajectory(q, dm, trajs[i], graph, bbox, cfg);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return reports;
}

json report_to_json(const TrajectoryReport& r) {
  json legs = json::array();
  for (const auto& v : r.legs) {
    json jl{{"leg", v.leg_index}, {"stage", to_string(v.stage)}, {"anomaly", v.is_anomaly}};
    if (v.q_score) jl["q_score"] = *v.q_score;
    if (v.e_delta) jl["e_delta"] = *v.e_delta;
    legs.push_back(std::move(jl));
  }
  return json{{"traj_id", r.traj_id},
              {"label", label_to_string(r.label)},
              {"is_anomaly", r.is_anomaly},
              {"segmentation_failed", r.segmentation_failed},
              {"legs", std::move(legs)},
              {"wall_time_s", r.wall_time_s}};
}

TrajectoryReport report_from_json(const json& j) {
  try {
    TrajectoryReport r;
    r.traj_id = j.at("traj_id").get<std::string>();
    r.label = label_from_string(j.at("label").get<std::string>());
    r.is_anomaly = j.at("is_anomaly").get<bool>();
    r.segmentation_failed = j.at("segmentation_failed").get<bool>();
    r.wall_time_s = j.value("wall_time_s", 0.0);
    for (const auto& jl : j.at("legs")) {
      LegVerdict v;
      v.leg_index = jl.at("leg").get<int>();
      v.stage = verdict_stage_from_string(jl.at("stage").get<std::string>());
      v.is_anomaly = jl.at("anomaly").get<bool>();
      if (jl.contains("q_score")) v.q_score = jl.at("q_score").get<double>();
      if (jl.contains("e_delta")) v.e_delta = jl.at("e_delta").get<double>();
      r.legs.push_back(std::move(v));
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad report record: ") + e.what());
  }
}

void write_reports_jsonl(const std::string& path, const std::vector<TrajectoryReport>& reports) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& r : reports) out << report_to_json(r).dump() << "\n";
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<TrajectoryReport> read_reports_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<TrajectoryReport> reports;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what(), line_no);
    }
    reports.push_back(report_from_json(j));
  }
  return reports;
}

}  // namespace ihid
