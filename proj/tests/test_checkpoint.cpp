#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"

#include "ihid/checkpoint.hpp"
#include "ihid/diffusion.hpp"
#include "ihid/iql.hpp"

using namespace ihid;
using nlohmann::json;

namespace {

DiffusionConfig micro_config() {
  DiffusionConfig cfg;
  cfg.L = 8;
  cfg.latent = 8;
  cfg.layers = 2;  // covers a skip connection
  cfg.heads = 2;
  cfg.ff_mult = 2;
  cfg.dropout = 0.0;
  cfg.subgoal_dim = 6;
  cfg.ctx_dim = 8;
  cfg.T = 20;
  cfg.t_inf = 4;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("tabular q-function round-trips scores and config") {
  QFunction q = QFunction::make_tabular(5);
  Rng rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) q.params()[0].value(i, j) = u(rng);
  IqlConfig cfg;
  cfg.gamma_d = 0.97;
  cfg.epochs = 33;
  cfg.seed = 1234;

  const std::string p = "/tmp/ihid_test_q.ckpt";
  save_qfunction_checkpoint(p, q, cfg);
  IqlConfig cfg_back;
  const QFunction back = load_qfunction_checkpoint(p, &cfg_back);
  CHECK(back.backend() == QBackend::tabular);
  CHECK(back.n_nodes() == 5);
  CHECK(cfg_back.gamma_d == 0.97);
  CHECK(cfg_back.epochs == 33);
  CHECK(cfg_back.seed == 1234);
  // float32 storage: scores agree to single precision
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(back.score(i, j) == doctest::Approx(q.score(i, j)).epsilon(1e-6));
}

TEST_CASE("mlp q-function round-trips through the same manifest format") {
  QFunction q = QFunction::make_mlp(4, 6, 10, 77);
  IqlConfig cfg;
  cfg.backend = QBackend::mlp;
  cfg.embed_dim = 6;
  cfg.hidden_dim = 10;
  const std::string p = "/tmp/ihid_test_qmlp.ckpt";
  save_qfunction_checkpoint(p, q, cfg);
  const QFunction back = load_qfunction_checkpoint(p);
  CHECK(back.backend() == QBackend::mlp);
  CHECK(back.n_nodes() == 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(back.score(i, j) == doctest::Approx(q.score(i, j)).epsilon(1e-5));
}

TEST_CASE("diffusion model round-trips predictions within float32 precision") {
  const DiffusionModel m = make_diffusion_model(micro_config());
  const std::string p = "/tmp/ihid_test_dm.ckpt";
  save_diffusion_checkpoint(p, m);
  const DiffusionModel back = load_diffusion_checkpoint(p);
  CHECK(back.cfg.L == m.cfg.L);
  CHECK(back.cfg.t_inf == m.cfg.t_inf);
  CHECK(back.schedule.T == m.schedule.T);

  Eigen::MatrixXd x(8, 2);
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 0.5);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = n(rng);
    x(i, 1) = n(rng);
  }
  const Vec2 a(-0.5, 0.1), b(0.6, -0.2);
  const Eigen::MatrixXd e0 = m.predict_eps(x, 3, a, b);
  const Eigen::MatrixXd e1 = back.predict_eps(x, 3, a, b);
  CHECK((e0 - e1).norm() / std::max(1.0, e0.norm()) < 1e-4);
}

TEST_CASE("manifest kind/tensor mismatches are rejected") {
  const DiffusionModel m = make_diffusion_model(micro_config());
  const std::string p = "/tmp/ihid_test_bad.ckpt";
  save_diffusion_checkpoint(p, m);

  // wrong model kind
  CHECK_THROWS(load_qfunction_checkpoint(p));

  // truncated blob
  {
    std::ifstream in(p + ".bin", std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(p + ".bin", std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<long>(blob.size() / 2));
  }
  CHECK_THROWS(load_diffusion_checkpoint(p));
}

TEST_CASE("tampered tensor list is rejected") {
  QFunction q = QFunction::make_tabular(3);
  IqlConfig cfg;
  const std::string p = "/tmp/ihid_test_tamper.ckpt";
  save_qfunction_checkpoint(p, q, cfg);
  json manifest;
  {
    std::ifstream in(p);
    in >> manifest;
  }
  manifest["tensors"][0]["name"] = "not_the_tensor";
  {
    std::ofstream out(p, std::ios::trunc);
    out << manifest.dump(2);
  }
  CHECK_THROWS(load_qfunction_checkpoint(p));
}

TEST_CASE("config json: partial objects merge onto defaults, junk keys fail") {
  IqlConfig defaults;
  json j = {{"gamma_d", 0.9}, {"epochs", 7}};
  IqlConfig c = j.get<IqlConfig>();
  CHECK(c.gamma_d == 0.9);
  CHECK(c.epochs == 7);
  CHECK(c.alpha_reg == defaults.alpha_reg);
  CHECK(c.batch_size == defaults.batch_size);

  json bad = {{"gamma_d", 0.9}, {"gamma", 0.5}};
  CHECK_THROWS_AS(bad.get<IqlConfig>(), ParseError);

  DiffusionConfig dd;
  json jd = {{"L", 16}, {"rho", 0.8}};
  DiffusionConfig d = jd.get<DiffusionConfig>();
  CHECK(d.L == 16);
  CHECK(d.rho == 0.8);
  CHECK(d.T == dd.T);
  json badd = {{"latent_dim", 32}};
  CHECK_THROWS_AS(badd.get<DiffusionConfig>(), ParseError);
}

TEST_CASE("backend names round-trip") {
  CHECK(qbackend_from_string(to_string(QBackend::tabular)) == QBackend::tabular);
  CHECK(qbackend_from_string(to_string(QBackend::mlp)) == QBackend::mlp);
  CHECK_THROWS(qbackend_from_string("transformer"));
}

}  // TEST_SUITE
