#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "json.hpp"

#include "ihid/detector.hpp"
#include "ihid/resample.hpp"

using namespace ihid;
using nlohmann::json;

namespace {

struct Rig {
  SubgoalGraph g;
  QFunction q;
  DiffusionModel dm;
  BoundingBox bbox{30.0, 31.0, 104.0, 106.0};

  Rig() {
    g.params.radius = 0.07;
    g.nodes = {{0, {-0.8, 0.0}, 0.07, NodeKind::destination},
               {1, {0.0, 0.0}, 0.07, NodeKind::turning_point},
               {2, {0.8, 0.0}, 0.07, NodeKind::destination}};
    g.edges[{0, 1}] = 10;
    g.edges[{1, 2}] = 10;
    g.bbox = bbox;

    q = QFunction::make_tabular(3);
    q.params()[0].value.setConstant(-3.0);
    q.params()[0].value(0, 1) = 1.0;
    q.params()[0].value(1, 2) = 1.0;

    DiffusionConfig cfg;
    cfg.L = 8;
    cfg.latent = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ff_mult = 2;
    cfg.dropout = 0.0;
    cfg.subgoal_dim = 6;
    cfg.ctx_dim = 8;
    cfg.T = 20;
    cfg.t_inf = 4;
    cfg.seed = 3;
    dm = make_diffusion_model(cfg);
  }

  // straight run through nodes 0 -> 1 -> 2 with an optional mid bump
  Trajectory line_traj(const std::string& id, double bump = 0.0) const {
    Trajectory t;
    t.id = id;
    for (int i = 0; i <= 36; ++i) {
      const double x = -0.85 + 1.7 * i / 36.0;
      const double y = bump * std::exp(-std::pow((x - 0.4) / 0.08, 2));
      t.points.push_back(denormalize_point({x, y}, bbox));
      t.points.back().t = static_cast<double>(i);
    }
    return t;
  }

  Eigen::MatrixXd one_leg() const {
    Polyline pts;
    for (int i = 0; i <= 12; ++i) pts.push_back({-0.8 + 0.8 * i / 12.0, 0.0});
    return polyline_to_matrix(resample_arclength(pts, dm.cfg.L));
  }
};

json sanitized(const TrajectoryReport& r) {
  json j = report_to_json(r);
  j.erase("wall_time_s");
  return j;
}

}  // namespace

TEST_SUITE("detector") {

TEST_CASE("leg: failing transition score rejects without reconstruction") {
  Rig rig;
  rig.q.params()[0].value(0, 1) = -1.5;
  Thresholds th{-1.2, 0.18};
  Rng rng(1);
  const LegVerdict v = detect_leg(rig.q, rig.dm, rig.g, rig.one_leg(), 0, 1, th, rng);
  CHECK(v.is_anomaly);
  CHECK(v.stage == VerdictStage::high_level_reject);
  REQUIRE(v.q_score.has_value());
  CHECK(*v.q_score == -1.5);
  CHECK_FALSE(v.e_delta.has_value());
}

TEST_CASE("leg: passing score runs reconstruction; boundary error is anomalous") {
  Rig rig;
  Thresholds loose{-1.2, 1e9};
  Rng r1(42);
  const LegVerdict pass = detect_leg(rig.q, rig.dm, rig.g, rig.one_leg(), 0, 1, loose, r1);
  CHECK_FALSE(pass.is_anomaly);
  CHECK(pass.stage == VerdictStage::normal);
  REQUIRE(pass.q_score.has_value());
  REQUIRE(pass.e_delta.has_value());
  CHECK(*pass.e_delta >= 0.0);

  // same rng seed, threshold set exactly at the observed error: >= rejects
  Thresholds exact{-1.2, *pass.e_delta};
  Rng r2(42);
  const LegVerdict hit = detect_leg(rig.q, rig.dm, rig.g, rig.one_leg(), 0, 1, exact, r2);
  CHECK(hit.is_anomaly);
  CHECK(hit.stage == VerdictStage::low_level_reject);
  CHECK(*hit.e_delta == *pass.e_delta);

  Thresholds zero{-1.2, 0.0};
  Rng r3(42);
  const LegVerdict always = detect_leg(rig.q, rig.dm, rig.g, rig.one_leg(), 0, 1, zero, r3);
  CHECK(always.stage == VerdictStage::low_level_reject);
}

TEST_CASE("leg: unknown node ids become off-graph verdicts, not exceptions") {
  Rig rig;
  Thresholds th{-1.2, 0.18};
  Rng rng(5);
  const LegVerdict v = detect_leg(rig.q, rig.dm, rig.g, rig.one_leg(), 7, 1, th, rng);
  CHECK(v.is_anomaly);
  CHECK(v.stage == VerdictStage::off_graph_reject);
  CHECK_FALSE(v.q_score.has_value());
  CHECK_FALSE(v.e_delta.has_value());
}

TEST_CASE("leg: mode semantics") {
  Rig rig;
  Thresholds th{-1.2, 0.0};  // beta 0 would reject every reconstruction
  Rng r1(9);
  const LegVerdict high = detect_leg(rig.q, rig.dm, rig.g, rig.one_leg(), 0, 1, th, r1,
                                     DetectorMode::high_only);
  CHECK_FALSE(high.is_anomaly);  // passing transition score is final
  CHECK_FALSE(high.e_delta.has_value());

  Rng r2(9);
  const LegVerdict low = detect_leg(rig.q, rig.dm, rig.g, rig.one_leg(), 0, 1, th, r2,
                                    DetectorMode::low_only);
  CHECK(low.is_anomaly);  // reconstruction ran despite no transition test
  CHECK_FALSE(low.q_score.has_value());
  REQUIRE(low.e_delta.has_value());
}

TEST_CASE("trajectory: clean run is normal, reversed run is caught at stage 1") {
  Rig rig;
  DetectorConfig cfg;
  cfg.th = Thresholds{-1.2, 1e9};
  cfg.seed = 11;
  const TrajectoryReport ok =
      detect_trajectory(rig.q, rig.dm, rig.line_traj("fwd"), rig.g, rig.bbox, cfg);
  CHECK_FALSE(ok.is_anomaly);
  CHECK_FALSE(ok.segmentation_failed);
  REQUIRE(ok.legs.size() == 2);
  for (const auto& v : ok.legs) {
    CHECK(v.stage == VerdictStage::normal);
    // laziness contract: e_delta only ever computed after a passing q test
    if (v.e_delta.has_value()) {
      REQUIRE(v.q_score.has_value());
      CHECK(*v.q_score > cfg.th.gamma_q);
    }
  }

  Trajectory rev = rig.line_traj("rev");
  std::reverse(rev.points.begin(), rev.points.end());
  const TrajectoryReport bad = detect_trajectory(rig.q, rig.dm, rev, rig.g, rig.bbox, cfg);
  CHECK(bad.is_anomaly);
  CHECK(bad.legs[0].stage == VerdictStage::high_level_reject);
}

TEST_CASE("trajectory: segmentation failure becomes an off-graph report") {
  Rig rig;
  Trajectory far;
  far.id = "far";
  for (int i = 0; i <= 10; ++i) {
    far.points.push_back(denormalize_point({-0.2 + 0.04 * i, 0.9}, rig.bbox));
  }
  DetectorConfig cfg;
  const TrajectoryReport r = detect_trajectory(rig.q, rig.dm, far, rig.g, rig.bbox, cfg);
  CHECK(r.is_anomaly);
  CHECK(r.segmentation_failed);
  REQUIRE(r.legs.size() == 1);
  CHECK(r.legs[0].stage == VerdictStage::off_graph_reject);
}

TEST_CASE("batch: output is byte-stable across worker counts") {
  Rig rig;
  std::vector<Trajectory> trajs;
  for (int k = 0; k < 6; ++k)
    trajs.push_back(rig.line_traj("t" + std::to_string(k), 0.02 * k));
  DetectorConfig cfg;
  cfg.th = Thresholds{-1.2, 0.05};
  cfg.seed = 21;
  cfg.workers = 1;
  const auto seq = detect_batch(rig.q, rig.dm, trajs, rig.g, rig.bbox, cfg);
  cfg.workers = 3;
  const auto par = detect_batch(rig.q, rig.dm, trajs, rig.g, rig.bbox, cfg);
  REQUIRE(seq.size() == par.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    CHECK(seq[i].traj_id == trajs[i].id);
    CHECK(sanitized(seq[i]).dump() == sanitized(par[i]).dump());
  }
}

TEST_CASE("thresholds: tightening never flips anomalous to normal") {
  Rig rig;
  std::vector<Trajectory> trajs;
  for (int k = 0; k < 8; ++k)
    trajs.push_back(rig.line_traj("m" + std::to_string(k), 0.015 * k));
  Trajectory rev = rig.line_traj("rev");
  std::reverse(rev.points.begin(), rev.points.end());
  trajs.push_back(rev);

  auto anomaly_set = [&](double gamma_q, double beta_e) {
    DetectorConfig cfg;
    cfg.th = Thresholds{gamma_q, beta_e};
    cfg.seed = 33;
    std::set<std::string> out;
    for (const auto& r : detect_batch(rig.q, rig.dm, trajs, rig.g, rig.bbox, cfg))
      if (r.is_anomaly) out.insert(r.traj_id);
    return out;
  };

  const auto base = anomaly_set(-1.2, 0.05);
  const auto higher_gamma = anomaly_set(0.5, 0.05);
  const auto lower_beta = anomaly_set(-1.2, 0.02);
  CHECK(std::includes(higher_gamma.begin(), higher_gamma.end(), base.begin(), base.end()));
  CHECK(std::includes(lower_beta.begin(), lower_beta.end(), base.begin(), base.end()));
}

TEST_CASE("modes: full anomaly set is the union of the single-stage sets") {
  Rig rig;
  std::vector<Trajectory> trajs;
  for (int k = 0; k < 8; ++k)
    trajs.push_back(rig.line_traj("u" + std::to_string(k), 0.012 * k));
  Trajectory rev = rig.line_traj("rev");
  std::reverse(rev.points.begin(), rev.points.end());
  trajs.push_back(rev);

  auto anomaly_set = [&](DetectorMode mode) {
    DetectorConfig cfg;
    cfg.th = Thresholds{-1.2, 0.04};
    cfg.mode = mode;
    cfg.seed = 44;
    std::set<std::string> out;
    for (const auto& r : detect_batch(rig.q, rig.dm, trajs, rig.g, rig.bbox, cfg))
      if (r.is_anomaly) out.insert(r.traj_id);
    return out;
  };
  const auto full = anomaly_set(DetectorMode::full);
  const auto high = anomaly_set(DetectorMode::high_only);
  const auto low = anomaly_set(DetectorMode::low_only);
  std::set<std::string> uni = high;
  uni.insert(low.begin(), low.end());
  CHECK(full == uni);
}

TEST_CASE("reports: jsonl round-trip and parse errors with line numbers") {
  Rig rig;
  std::vector<Trajectory> trajs = {rig.line_traj("a"), rig.line_traj("b", 0.05)};
  DetectorConfig cfg;
  cfg.th = Thresholds{-1.2, 0.03};
  cfg.seed = 7;
  const auto reports = detect_batch(rig.q, rig.dm, trajs, rig.g, rig.bbox, cfg);
  const std::string p = "/tmp/ihid_test_reports.jsonl";
  write_reports_jsonl(p, reports);
  const auto back = read_reports_jsonl(p);
  REQUIRE(back.size() == reports.size());
  for (std::size_t i = 0; i < back.size(); ++i)
    CHECK(report_to_json(back[i]).dump() == report_to_json(reports[i]).dump());

  std::ofstream out(p, std::ios::app);
  out << "{not json\n";
  out.close();
  try {
    read_reports_jsonl(p);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == reports.size() + 1);
  }
}

TEST_CASE("verdict stage and mode names round-trip") {
  for (auto s : {VerdictStage::high_level_reject, VerdictStage::low_level_reject,
                 VerdictStage::off_graph_reject, VerdictStage::normal})
    CHECK(verdict_stage_from_string(to_string(s)) == s);
  for (auto m : {DetectorMode::full, DetectorMode::high_only, DetectorMode::low_only})
    CHECK(detector_mode_from_string(to_string(m)) == m);
  CHECK_THROWS(verdict_stage_from_string("meh"));
  CHECK_THROWS(detector_mode_from_string("medium_only"));
}

}  // TEST_SUITE
