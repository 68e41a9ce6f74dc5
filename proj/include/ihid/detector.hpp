#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ihid/diffusion.hpp"
#include "ihid/geo.hpp"
#include "ihid/graph.hpp"
#include "ihid/iql.hpp"
#include "ihid/segment.hpp"

namespace ihid {

struct Thresholds {
  double gamma_q = -1.2;  // transition-score threshold; score <= gamma_q rejects
  double beta_e = 0.18;   // reconstruction-error threshold; error >= beta_e rejects
};

enum class VerdictStage { high_level_reject, low_level_reject, off_graph_reject, normal };

std::string to_string(VerdictStage s);
VerdictStage verdict_stage_from_string(const std::string& s);

// Per-leg decision record. e_delta is present only when the transition-score
// test passed (the reconstruction stage is lazy); off_graph_reject carries
// neither score.
struct LegVerdict {
  int leg_index = 0;
  std::optional<double> q_score;
  std::optional<double> e_delta;
  VerdictStage stage = VerdictStage::normal;
  bool is_anomaly = false;
};

struct TrajectoryReport {
  std::string traj_id;
  Label label = Label::unknown;  // ground truth carried through for scoring
  std::vector<LegVerdict> legs;
  bool segmentation_failed = false;
  bool is_anomaly = false;   // any leg anomalous, or segmentation failed
  double wall_time_s = 0.0;  // kept in its own key so reruns diff clean
};

// full runs both stages; high_only skips reconstruction (a passing transition
// score is final); low_only skips the transition test and reconstructs every
// on-graph leg.
enum class DetectorMode { full, high_only, low_only };

std::string to_string(DetectorMode m);
DetectorMode detector_mode_from_string(const std::string& s);

struct DetectorConfig {
  Thresholds th;
  DetectorMode mode = DetectorMode::full;
  int samples = 1;         // reconstructions averaged per leg
  int t_inf = 0;           // 0 → use the model's configured value
  std::uint64_t seed = 0;  // per-leg rngs derive from (seed, trajectory id, leg index)
  int workers = 1;
};

// Two-stage decision for one leg between nodes g_i -> g_next. Stage 1 scores
// the transition and rejects at score <= th.gamma_q without touching the
// diffusion model; stage 2 reconstructs at t_inf and rejects at error >=
// th.beta_e (boundary anomalous). Ids absent from the graph yield an
// off_graph_reject verdict rather than an exception.
LegVerdict detect_leg(const QFunction& q, const DiffusionModel& dm, const SubgoalGraph& graph,
                      const Eigen::MatrixXd& leg, int g_i, int g_next, const Thresholds& th,
                      Rng& rng, DetectorMode mode = DetectorMode::full, int samples = 1,
                      int t_inf = 0);

// Segments the trajectory and scores every leg in order. Segmentation failure
// becomes an anomalous off_graph_reject report; no exceptions surface from
// scoring. Deterministic given cfg.seed regardless of worker count.
TrajectoryReport detect_trajectory(const QFunction& q, const DiffusionModel& dm,
                                   const Trajectory& traj, const SubgoalGraph& graph,
                                   const BoundingBox& bbox, const DetectorConfig& cfg);

// Scores a collection, optionally across cfg.workers threads. Output order
// matches input order and is byte-stable across worker counts.
std::vector<TrajectoryReport> detect_batch(const QFunction& q, const DiffusionModel& dm,
                                           const std::vector<Trajectory>& trajs,
                                           const SubgoalGraph& graph, const BoundingBox& bbox,
                                           const DetectorConfig& cfg);

nlohmann::json report_to_json(const TrajectoryReport& r);
TrajectoryReport report_from_json(const nlohmann::json& j);

// One JSON record per line, in order.
void write_reports_jsonl(const std::string& path, const std::vector<TrajectoryReport>& reports);
std::vector<TrajectoryReport> read_reports_jsonl(const std::string& path);

}  // namespace ihid
