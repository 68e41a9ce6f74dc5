#include "ihid/cli.hpp"

#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ihid/checkpoint.hpp"
#include "ihid/csv.hpp"
#include "ihid/detector.hpp"
#include "ihid/evalbench.hpp"
#include "ihid/forge.hpp"
#include "ihid/geojson.hpp"
#include "ihid/graph.hpp"
#include "ihid/segment.hpp"
#include "ihid/world.hpp"

namespace ihid {

namespace {

using nlohmann::json;

std::uint64_t parse_seed_string(const std::string& s) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ParseError("bad seed value \"" + s + "\"");
  }
}

// --seed wins, IHID_SEED is the fallback, otherwise the supplied default
// (e.g. the config file's own seed).
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value,
                           std::uint64_t fallback) {
  if (opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("IHID_SEED"); env && *env) return parse_seed_string(env);
  return fallback;
}

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_experiment_config(path);
}

json stage_histogram(const std::vector<TrajectoryReport>& reports) {
  json hist{{"high_level_reject", 0},
            {"low_level_reject", 0},
            {"off_graph_reject", 0},
            {"normal", 0}};
  for (const auto& r : reports) {
    std::string key = "normal";
    for (const auto& v : r.legs)
      if (v.is_anomaly) {
        key = to_string(v.stage);
        break;
      }
    if (!r.is_anomaly) key = "normal";
    hist[key] = hist[key].get<int>() + 1;
  }
  return hist;
}

// In-place forging over an already-ingested collection (the test-set builder
// for CSV inputs; route identities are unknown here, so switch partners are
// just other unforged trajectories).
json forge_collection(std::vector<Trajectory>& trajs, const SubgoalGraph& graph,
                      const ForgeParams& fp, const std::string& type, double fraction,
                      int leg_len, std::uint64_t seed) {
  if (trajs.size() < 2) throw ParseError("forge: need at least 2 trajectories");
  Rng rng(derive_seed(seed, fnv1a64("forge_cmd")));
  const long n_anom = std::lround(static_cast<double>(trajs.size()) * fraction);
  long quota_big = 0, quota_small = 0, quota_switch = 0;
  if (type == "big_detour") {
    quota_big = n_anom;
  } else if (type == "small_detour") {
    quota_small = n_anom;
  } else if (type == "route_switch") {
    quota_switch = n_anom;
  } else {  // mix
    quota_big = n_anom / 3 + (n_anom % 3 > 0 ? 1 : 0);
    quota_small = n_anom / 3 + (n_anom % 3 > 1 ? 1 : 0);
    quota_switch = n_anom / 3;
  }

  for (auto& t : trajs)
    if (t.label == Label::unknown) t.label = Label::normal;

  std::vector<std::size_t> order(trajs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> forged(trajs.size(), 0);
  long made_big = 0, made_small = 0, made_switch = 0;

  for (std::size_t oi = 0; oi < order.size() && quota_big + quota_small + quota_switch > 0;
       ++oi) {
    const std::size_t i = order[oi];
    const Trajectory& src = trajs[i];
    if (quota_big > 0) {
      try {
        Trajectory f = make_big_detour(src, fp.d, fp.omega, rng);
        trajs[i] = std::move(f);
        forged[i] = 1;
        --quota_big;
        ++made_big;
      } catch (const std::exception&) {
      }
      continue;
    }
    if (quota_small > 0) {
      const auto seg = segment_by_graph(src, graph, graph.bbox, leg_len);
      if (!seg) continue;
      auto f = make_small_detour(src, *seg, graph, graph.bbox, leg_len, fp.d, fp.omega_star,
                                 rng);
      if (f) {
        trajs[i] = std::move(*f);
        forged[i] = 1;
        --quota_small;
        ++made_small;
      }
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, trajs.size() - 1);
    for (int attempt = 0; attempt < 20; ++attempt) {
      const std::size_t b = pick(rng);
      if (b == i || forged[b]) continue;
      auto f = make_route_switch(src, trajs[b], fp.sigma, rng);
      if (f) {
        trajs[i] = std::move(*f);
        forged[i] = 1;
        --quota_switch;
        ++made_switch;
        break;
      }
    }
  }
  return json{{"requested", n_anom},
              {"big_detour", made_big},
              {"small_detour", made_small},
              {"route_switch", made_switch}};
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"intention-aware trajectory anomaly detection toolkit"};
  app.require_subcommand(1);

  std::string config_path, input_path, out_path, graph_path, high_path, low_path;
  std::string report_path, graph_out, type = "mix", mode_str = "full", param;
  std::uint64_t seed = 0;
  double fraction = 0.2, pad = 0.05;
  std::optional<double> gamma_q_flag, beta_e_flag;
  int count = 0, workers = 0, samples = 0, t_inf = 0, epochs = 0;
  std::vector<double> values;

  // ingest
  auto* c_ingest = app.add_subcommand("ingest", "parse, clean and rewrite a trajectory CSV");
  c_ingest->add_option("--input", input_path, "input CSV")->required();
  c_ingest->add_option("--out", out_path, "output CSV")->required();

  // synth
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic world as CSV");
  c_synth->add_option("--config", config_path, "experiment config (world section)");
  c_synth->add_option("--out", out_path, "output CSV")->required();
  c_synth->add_option("--graph-out", graph_out, "also save the ground-truth graph JSON");
  c_synth->add_option("--count", count, "trajectory count override");
  auto* synth_seed = c_synth->add_option("--seed", seed, "rng seed (env IHID_SEED fallback)");

  // build-graph
  auto* c_graph = app.add_subcommand("build-graph", "extract the subgoal graph from a CSV");
  c_graph->add_option("--input", input_path, "training CSV")->required();
  c_graph->add_option("--out", out_path, "graph JSON")->required();
  c_graph->add_option("--config", config_path, "experiment config (graph section)");
  c_graph->add_option("--pad", pad, "bounding-box padding fraction");

  // forge
  auto* c_forge = app.add_subcommand("forge", "inject synthetic anomalies into a CSV");
  c_forge->add_option("--input", input_path, "source CSV")->required();
  c_forge->add_option("--graph", graph_path, "graph JSON")->required();
  c_forge->add_option("--out", out_path, "output CSV")->required();
  c_forge->add_option("--config", config_path, "experiment config (forge section)");
  c_forge->add_option("--type", type, "big_detour|small_detour|route_switch|mix")
      ->check(CLI::IsMember({"big_detour", "small_detour", "route_switch", "mix"}));
  c_forge->add_option("--fraction", fraction, "fraction of trajectories to forge");
  auto* forge_seed = c_forge->add_option("--seed", seed, "rng seed (env IHID_SEED fallback)");

  // train-high
  auto* c_high = app.add_subcommand("train-high", "train the transition scorer");
  c_high->add_option("--input", input_path, "training CSV")->required();
  c_high->add_option("--graph", graph_path, "graph JSON")->required();
  c_high->add_option("--out", out_path, "checkpoint path")->required();
  c_high->add_option("--config", config_path, "experiment config (iql section)");
  auto* high_epochs = c_high->add_option("--epochs", epochs, "epoch override");
  auto* high_seed = c_high->add_option("--seed", seed, "rng seed (env IHID_SEED fallback)");

  // train-low
  auto* c_low = app.add_subcommand("train-low", "train the reconstruction model");
  c_low->add_option("--input", input_path, "training CSV")->required();
  c_low->add_option("--graph", graph_path, "graph JSON")->required();
  c_low->add_option("--out", out_path, "checkpoint path")->required();
  c_low->add_option("--config", config_path, "experiment config (diffusion section)");
  auto* low_epochs = c_low->add_option("--epochs", epochs, "epoch override");
  auto* low_seed = c_low->add_option("--seed", seed, "rng seed (env IHID_SEED fallback)");

  // detect
  auto* c_detect = app.add_subcommand("detect", "score trajectories with trained models");
  c_detect->add_option("--graph", graph_path, "graph JSON")->required();
  c_detect->add_option("--high", high_path, "transition-scorer checkpoint")->required();
  c_detect->add_option("--low", low_path, "reconstruction checkpoint")->required();
  c_detect->add_option("--input", input_path, "test CSV")->required();
  c_detect->add_option("--out", out_path, "report JSONL")->required();
  c_detect->add_option("--config", config_path, "experiment config (thresholds/runner)");
  c_detect->add_option("--mode", mode_str, "full|high_only|low_only")
      ->check(CLI::IsMember({"full", "high_only", "low_only"}));
  auto* det_gq = c_detect->add_option("--gamma-q", gamma_q_flag, "transition threshold");
  auto* det_be = c_detect->add_option("--beta-e", beta_e_flag, "reconstruction threshold");
  auto* det_samples = c_detect->add_option("--samples", samples, "recon draws per leg");
  auto* det_tinf = c_detect->add_option("--t-inf", t_inf, "noising level override");
  auto* det_workers = c_detect->add_option("--workers", workers, "scoring threads");
  auto* det_seed = c_detect->add_option("--seed", seed, "rng seed (env IHID_SEED fallback)");

  // evaluate / ablate / sweep
  auto* c_eval = app.add_subcommand("evaluate", "train and score repeated synthetic test sets");
  auto* c_ablate = app.add_subcommand("ablate", "run single-stage and full detector variants");
  auto* c_sweep = app.add_subcommand("sweep", "F1 curves over one parameter");
  for (auto* sub : {c_eval, c_ablate, c_sweep}) {
    sub->add_option("--config", config_path, "experiment config JSON");
    sub->add_option("--out", out_path, "report JSON")->required();
  }
  auto* eval_seed = c_eval->add_option("--seed", seed, "master seed (env IHID_SEED fallback)");
  auto* ablate_seed = c_ablate->add_option("--seed", seed, "master seed (env IHID_SEED fallback)");
  auto* sweep_seed = c_sweep->add_option("--seed", seed, "master seed (env IHID_SEED fallback)");
  auto* eval_workers = c_eval->add_option("--workers", workers, "scoring threads");
  auto* ablate_workers = c_ablate->add_option("--workers", workers, "scoring threads");
  auto* sweep_workers = c_sweep->add_option("--workers", workers, "scoring threads");
  c_sweep->add_option("--param", param, "rho|t_inf|gamma_q|beta_e")
      ->required()
      ->check(CLI::IsMember({"rho", "t_inf", "gamma_q", "beta_e"}));
  c_sweep->add_option("--values", values, "comma-separated values")
      ->required()
      ->delimiter(',');

  // export-geojson
  auto* c_geo = app.add_subcommand("export-geojson", "write inspection GeoJSON");
  c_geo->add_option("--input", input_path, "trajectory CSV")->required();
  c_geo->add_option("--out", out_path, "GeoJSON path")->required();
  c_geo->add_option("--report", report_path, "report JSONL to join on trajectory id");
  c_geo->add_option("--graph", graph_path, "graph JSON for node features");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  std::function<json()> action;

  if (c_ingest->parsed()) {
    action = [&] {
      const ParseResult pr = parse_trajectories_csv(input_path);
      write_trajectories_csv(out_path, pr.trajectories);
      std::size_t points = 0;
      for (const auto& t : pr.trajectories) points += t.points.size();
      return json{{"command", "ingest"},
                  {"trajectories", pr.trajectories.size()},
                  {"points", points},
                  {"dropped_short", pr.dropped_short},
                  {"out", out_path}};
    };
  } else if (c_synth->parsed()) {
    action = [&] {
      ExperimentConfig cfg = config_or_default(config_path);
      WorldSpec spec = cfg.world;
      if (count > 0) spec.count = count;
      spec.seed = resolve_seed(synth_seed, seed, spec.seed);
      const SynthWorld world = synth_world(spec);
      write_trajectories_csv(out_path, world.trajs);
      if (!graph_out.empty()) save_graph_json(world.graph, graph_out);
      return json{{"command", "synth"},
                  {"trajectories", world.trajs.size()},
                  {"nodes", world.graph.nodes.size()},
                  {"out", out_path}};
    };
  } else if (c_graph->parsed()) {
    action = [&] {
      ExperimentConfig cfg = config_or_default(config_path);
      const ParseResult pr = parse_trajectories_csv(input_path);
      const BoundingBox bbox = compute_bbox(pr.trajectories, pad);
      const SubgoalGraph g = build_graph(pr.trajectories, bbox, cfg.graph);
      save_graph_json(g, out_path);
      int dests = 0;
      for (const auto& n : g.nodes) dests += n.kind == NodeKind::destination ? 1 : 0;
      return json{{"command", "build-graph"},
                  {"nodes", g.nodes.size()},
                  {"destinations", dests},
                  {"turning_points", g.nodes.size() - dests},
                  {"edges", g.edges.size()},
                  {"out", out_path}};
    };
  } else if (c_forge->parsed()) {
    action = [&] {
      ExperimentConfig cfg = config_or_default(config_path);
      ParseResult pr = parse_trajectories_csv(input_path);
      const SubgoalGraph g = load_graph_json(graph_path);
      const std::uint64_t s = resolve_seed(forge_seed, seed, 0);
      json made = forge_collection(pr.trajectories, g, cfg.forge, type, fraction,
                                   cfg.diffusion.L, s);
      write_trajectories_csv(out_path, pr.trajectories);
      return json{{"command", "forge"},
                  {"trajectories", pr.trajectories.size()},
                  {"forged", made},
                  {"out", out_path}};
    };
  } else if (c_high->parsed()) {
    action = [&] {
      ExperimentConfig cfg = config_or_default(config_path);
      const ParseResult pr = parse_trajectories_csv(input_path);
      const SubgoalGraph g = load_graph_json(graph_path);
      const TrainingData data =
          extract_training_data(pr.trajectories, g, g.bbox, cfg.diffusion.L);
      if (data.seqs.empty()) throw ParseError("train-high: no usable training trajectories");
      IqlConfig ic = cfg.iql;
      if (high_epochs->count() > 0) ic.epochs = epochs;
      ic.seed = resolve_seed(high_seed, seed, ic.seed);
      const IqlTrainResult res = train_iql(data.seqs, g, ic);
      save_qfunction_checkpoint(out_path, res.q, ic);
      return json{{"command", "train-high"},
                  {"sequences", data.seqs.size()},
                  {"dropped", data.dropped},
                  {"epochs_run", res.loss_curve.size()},
                  {"final_loss", res.loss_curve.back()},
                  {"out", out_path}};
    };
  } else if (c_low->parsed()) {
    action = [&] {
      ExperimentConfig cfg = config_or_default(config_path);
      const ParseResult pr = parse_trajectories_csv(input_path);
      const SubgoalGraph g = load_graph_json(graph_path);
      const TrainingData data =
          extract_training_data(pr.trajectories, g, g.bbox, cfg.diffusion.L);
      if (data.legs.empty()) throw ParseError("train-low: no usable training legs");
      DiffusionConfig dc = cfg.diffusion;
      if (low_epochs->count() > 0) dc.epochs = epochs;
      dc.seed = resolve_seed(low_seed, seed, dc.seed);
      const DiffusionTrainResult res = train_diffusion(data.legs, dc);
      save_diffusion_checkpoint(out_path, res.model);
      return json{{"command", "train-low"},
                  {"legs", data.legs.size()},
                  {"dropped", data.dropped},
                  {"epochs_run", res.loss_curve.size()},
                  {"final_loss", res.loss_curve.back()},
                  {"out", out_path}};
    };
  } else if (c_detect->parsed()) {
    action = [&] {
      ExperimentConfig cfg = config_or_default(config_path);
      const SubgoalGraph g = load_graph_json(graph_path);
      const QFunction q = load_qfunction_checkpoint(high_path);
      const DiffusionModel dm = load_diffusion_checkpoint(low_path);
      const ParseResult pr = parse_trajectories_csv(input_path);

      DetectorConfig dc;
      dc.th = cfg.thresholds;
      if (det_gq->count() > 0) dc.th.gamma_q = *gamma_q_flag;
      if (det_be->count() > 0) dc.th.beta_e = *beta_e_flag;
      dc.mode = detector_mode_from_string(mode_str);
      dc.samples = det_samples->count() > 0 ? samples : cfg.runner.samples;
      dc.t_inf = det_tinf->count() > 0 ? t_inf : 0;
      dc.workers = det_workers->count() > 0 ? workers : cfg.runner.workers;
      dc.seed = resolve_seed(det_seed, seed, cfg.runner.seed);

      const auto reports = detect_batch(q, dm, pr.trajectories, g, g.bbox, dc);
      write_reports_jsonl(out_path, reports);
      long anomalies = 0;
      for (const auto& r : reports) anomalies += r.is_anomaly ? 1 : 0;
      return json{{"command", "detect"},
                  {"trajectories", reports.size()},
                  {"anomalies", anomalies},
                  {"stage_histogram", stage_histogram(reports)},
                  {"out", out_path}};
    };
  } else if (c_eval->parsed() || c_ablate->parsed() || c_sweep->parsed()) {
    action = [&] {
      ExperimentConfig cfg = config_or_default(config_path);
      CLI::Option* seed_opt = c_eval->parsed() ? eval_seed
                              : c_ablate->parsed() ? ablate_seed
                                                   : sweep_seed;
      CLI::Option* workers_opt = c_eval->parsed() ? eval_workers
                                 : c_ablate->parsed() ? ablate_workers
                                                      : sweep_workers;
      cfg.runner.seed = resolve_seed(seed_opt, seed, cfg.runner.seed);
      if (workers_opt->count() > 0) cfg.runner.workers = workers;

      json report;
      std::string cmd;
      if (c_eval->parsed()) {
        cmd = "evaluate";
        report = run_experiment(cfg);
      } else if (c_ablate->parsed()) {
        cmd = "ablate";
        report = ablate(cfg);
      } else {
        cmd = "sweep";
        report = sweep(cfg, param, values);
      }
      std::ofstream out(out_path, std::ios::trunc);
      if (!out) throw std::runtime_error("cannot open " + out_path + " for writing");
      out << report.dump(2) << "\n";
      if (!out) throw std::runtime_error("failed writing " + out_path);

      json summary{{"command", cmd}, {"out", out_path}, {"seed", cfg.runner.seed}};
      if (report.contains("mean")) summary["mean"] = report.at("mean");
      return summary;
    };
  } else if (c_geo->parsed()) {
    action = [&] {
      const ParseResult pr = parse_trajectories_csv(input_path);
      std::vector<TrajectoryReport> reports;
      if (!report_path.empty()) reports = read_reports_jsonl(report_path);
      std::optional<SubgoalGraph> g;
      if (!graph_path.empty()) g = load_graph_json(graph_path);
      export_geojson(out_path, pr.trajectories, reports, g ? &*g : nullptr,
                     g ? &g->bbox : nullptr);
      return json{{"command", "export-geojson"},
                  {"trajectories", pr.trajectories.size()},
                  {"nodes", g ? g->nodes.size() : 0},
                  {"out", out_path}};
    };
  }

  try {
    const json summary = action();
    std::cout << summary.dump() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace ihid
