#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ihid/checkpoint.hpp"
#include "ihid/detector.hpp"
#include "ihid/forge.hpp"
#include "ihid/world.hpp"

namespace ihid {

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

// Undefined values are encoded explicitly (serialized as null), never as
// silent zeros: precision needs tp+fp > 0, recall tp+fn > 0, F1 both plus a
// nonzero sum, specificity tn+fp > 0.
struct Metrics {
  std::optional<double> precision, recall, f1, specificity;
};

Metrics metrics(const ConfusionCounts& c);

// Ground truth from trajectory labels (anomalous = any non-normal label),
// predictions from is_anomaly. With `type` set, only normal trajectories and
// that one anomaly label are counted.
ConfusionCounts count_confusion(const std::vector<TrajectoryReport>& reports,
                                std::optional<Label> type = std::nullopt);

struct RunnerConfig {
  int test_count = 500;
  double anomaly_fraction = 0.2;  // split evenly across the three anomaly types
  int repeats = 5;
  int samples = 1;   // reconstruction draws averaged per leg
  int workers = 1;
  std::string graph_source = "ground_truth";  // or "built" (build_graph on the data)
  std::uint64_t seed = 0;  // master seed; every other seed derives from it
};

// One experiment = a world, a graph recipe, forge parameters, both model
// configs, thresholds, and the runner block. The runner's master seed
// overrides the per-section seeds so a single --seed controls everything.
struct ExperimentConfig {
  WorldSpec world = default_world_spec();
  GraphParams graph;
  ForgeParams forge;
  IqlConfig iql;
  DiffusionConfig diffusion;
  Thresholds thresholds;
  RunnerConfig runner;
};

void to_json(nlohmann::json& j, const GraphParams& p);
void from_json(const nlohmann::json& j, GraphParams& p);
void to_json(nlohmann::json& j, const ForgeParams& p);
void from_json(const nlohmann::json& j, ForgeParams& p);
void to_json(nlohmann::json& j, const Thresholds& t);
void from_json(const nlohmann::json& j, Thresholds& t);
void to_json(nlohmann::json& j, const WorldNode& n);
void from_json(const nlohmann::json& j, WorldNode& n);
void to_json(nlohmann::json& j, const WorldRoute& r);
void from_json(const nlohmann::json& j, WorldRoute& r);
void to_json(nlohmann::json& j, const WorldSpec& s);
void from_json(const nlohmann::json& j, WorldSpec& s);
void to_json(nlohmann::json& j, const RunnerConfig& r);
void from_json(const nlohmann::json& j, RunnerConfig& r);
void to_json(nlohmann::json& j, const Metrics& m);
void to_json(nlohmann::json& j, const ConfusionCounts& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Parses the sectioned config file; absent sections/keys keep their defaults,
// unknown keys are errors.
ExperimentConfig load_experiment_config(const std::string& path);

struct TrainedModels {
  SubgoalGraph graph;
  BoundingBox bbox;
  QFunction q;
  DiffusionModel dm;
  int dropped_training = 0;  // training trajectories skipped (could not be
                             // decomposed into on-graph transitions)
};

struct TrainingData {
  std::vector<std::vector<int>> seqs;  // subgoal sequences
  std::vector<LegExample> legs;        // resampled legs with their node centers
  int dropped = 0;
};

// Segments every trajectory against the graph; ones that fail to decompose or
// cross a pair absent from the edge set are dropped (counted), the rest yield
// one sequence plus one leg example per transition.
TrainingData extract_training_data(const std::vector<Trajectory>& trajs,
                                   const SubgoalGraph& graph, const BoundingBox& bbox,
                                   int leg_len);

// Generates the training world, fixes the graph per runner.graph_source,
// extracts subgoal sequences and resampled legs, and trains both models.
// All seeds derive from runner.seed.
TrainedModels train_models(const ExperimentConfig& cfg);

// One resampled test mix: `count` trajectories from the world spec, with
// round(count * anomaly_fraction) of them forged in place (split evenly:
// whole-path detours, single-leg detours, route switches). Labels carry the
// ground truth. Sources whose forge attempt fails stay normal.
std::vector<Trajectory> make_test_set(const WorldSpec& world_spec, const SubgoalGraph& graph,
                                      const BoundingBox& bbox, int leg_len,
                                      const ForgeParams& forge, int count,
                                      double anomaly_fraction, std::uint64_t seed,
                                      const std::string& id_prefix);

// Scores runner.repeats freshly drawn test sets and reports per-type and
// overall counts/metrics per repeat, their means, per-stage rejection
// histograms, embedded per-trajectory verdicts, the full config, and all
// derived seeds. Deterministic except the top-level "wall_time_s" key.
nlohmann::json run_experiment_with(const TrainedModels& models, const ExperimentConfig& cfg,
                                   DetectorMode mode);
nlohmann::json run_experiment(const ExperimentConfig& cfg);

// Three detector variants (full / transition-test only / reconstruction
// only) over identical data and seeds.
nlohmann::json ablate_with(const TrainedModels& models, const ExperimentConfig& cfg);
nlohmann::json ablate(const ExperimentConfig& cfg);

// F1-vs-value curves per anomaly type. param "rho" retrains per value;
// "t_inf", "gamma_q", "beta_e" re-score the same trained models. Unknown
// names throw std::invalid_argument.
nlohmann::json sweep(const ExperimentConfig& cfg, const std::string& param,
                     const std::vector<double>& values);

}  // namespace ihid
