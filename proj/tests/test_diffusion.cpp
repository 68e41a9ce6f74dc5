#include <cmath>
#include <random>

#include "doctest.h"

#include "ihid/diffusion.hpp"
#include "ihid/nn.hpp"

using namespace ihid;

namespace {

DiffusionConfig tiny_config() {
  DiffusionConfig cfg;
  cfg.L = 8;
  cfg.latent = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff_mult = 2;
  cfg.dropout = 0.0;
  cfg.time_channels = 4;
  cfg.subgoal_dim = 6;
  cfg.ctx_dim = 8;
  cfg.rho = 0.4;
  cfg.T = 20;
  cfg.t_inf = 4;
  cfg.lr = 1e-2;
  cfg.epochs = 30;
  cfg.batch_size = 4;
  cfg.seed = 5;
  return cfg;
}

Eigen::MatrixXd sine_leg(int L) {
  Eigen::MatrixXd x(L, 2);
  for (int i = 0; i < L; ++i) {
    const double f = static_cast<double>(i) / (L - 1);
    x(i, 0) = -0.8 + 1.6 * f;
    x(i, 1) = 0.3 * std::sin(3.14159 * f);
  }
  return x;
}

}  // namespace

TEST_SUITE("diffusion") {

TEST_CASE("schedule: endpoints, monotonicity and the frozen terminal product") {
  const NoiseSchedule s = make_schedule(800, 1e-4, 0.02);
  REQUIRE(s.T == 800);
  CHECK(s.betas.front() == 1e-4);
  CHECK(s.betas.back() == 0.02);
  CHECK(s.alpha_bars[0] == doctest::Approx(0.9999).epsilon(1e-15));
  for (int t = 1; t < 800; ++t) {
    CHECK(s.betas[t] > s.betas[t - 1]);
    CHECK(s.alpha_bars[t] < s.alpha_bars[t - 1]);
    CHECK(s.alpha_bars[t] > 0.0);
    CHECK(s.alpha_bars[t] < 1.0);
  }
  // direct-product oracle, computed independently before the build
  CHECK(std::abs(s.alpha_bars[799] - 0.00030531162416676724) < 1e-12);
  // posterior variances: zero at t=1, then bounded by beta
  CHECK(s.beta_tildes[0] == 0.0);
  for (int t = 1; t < 800; ++t) {
    CHECK(s.beta_tildes[t] > 0.0);
    CHECK(s.beta_tildes[t] <= s.betas[t]);
  }
}

TEST_CASE("schedule: invalid bounds are rejected") {
  CHECK_THROWS_AS(make_schedule(1, 1e-4, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(800, 0.02, 1e-4), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(800, 0.0, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(800, 1e-4, 1.0), std::invalid_argument);
}

TEST_CASE("forward noise: zero-noise identity and near-total noising at T") {
  const NoiseSchedule s = make_schedule(800, 1e-4, 0.02);
  const Eigen::MatrixXd x0 = sine_leg(16);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(16, 2);
  const Eigen::MatrixXd x200 = forward_noise(x0, 200, zero, s);
  CHECK((x200 - std::sqrt(s.alpha_bars[199]) * x0).norm() < 1e-12);
  // at t=800 the signal coefficient is below 0.02
  CHECK(std::sqrt(s.alpha_bars[799]) < 0.02);
  Rng rng(3);
  Eigen::MatrixXd eps(16, 2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 16; ++i) {
    eps(i, 0) = n(rng);
    eps(i, 1) = n(rng);
  }
  const Eigen::MatrixXd xT = forward_noise(x0, 800, eps, s);
  CHECK((xT - std::sqrt(1.0 - s.alpha_bars[799]) * eps).norm() < 0.02 * x0.norm() + 1e-9);
  CHECK_THROWS_AS(forward_noise(x0, 0, eps, s), std::invalid_argument);
  CHECK_THROWS_AS(forward_noise(x0, 801, eps, s), std::invalid_argument);
}

TEST_CASE("forward noise is linear in signal and noise") {
  const NoiseSchedule s = make_schedule(100, 1e-4, 0.02);
  Rng rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  auto draw = [&](int r) {
    Eigen::MatrixXd m(r, 2);
    for (int i = 0; i < r; ++i) {
      m(i, 0) = n(rng);
      m(i, 1) = n(rng);
    }
    return m;
  };
  const Eigen::MatrixXd a = draw(10), b = draw(10), e1 = draw(10), e2 = draw(10);
  const Eigen::MatrixXd lhs = forward_noise(a + b, 37, e1 + e2, s);
  const Eigen::MatrixXd rhs = forward_noise(a, 37, e1, s) + forward_noise(b, 37, e2, s);
  CHECK((lhs - rhs).norm() < 1e-12);
}

TEST_CASE("reconstruction error: identities and loop oracle") {
  const Eigen::MatrixXd x = sine_leg(12);
  CHECK(recon_error(x, x) == 0.0);

  Eigen::MatrixXd shifted = x;
  shifted.col(0).array() += 0.1;
  CHECK(recon_error(x, shifted) == doctest::Approx(0.01).epsilon(1e-12));

  Rng rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd y(12, 2);
  for (int i = 0; i < 12; ++i) {
    y(i, 0) = n(rng);
    y(i, 1) = n(rng);
  }
  double manual = 0.0;
  for (int i = 0; i < 12; ++i) {
    const double dx = x(i, 0) - y(i, 0), dy = x(i, 1) - y(i, 1);
    manual += dx * dx + dy * dy;
  }
  manual /= 12.0;
  CHECK(std::abs(recon_error(x, y) - manual) < 1e-12);
  CHECK(recon_error(x, y) == recon_error(y, x));

  Eigen::MatrixXd wrong(6, 2);
  CHECK_THROWS_AS(recon_error(x, wrong), std::invalid_argument);
}

TEST_CASE("conditioner: rho 0 is a bitwise identity, rho 1 reads off the token segment") {
  Conditioner cond(6, 8, 42);
  const Eigen::MatrixXd x = sine_leg(10);
  const Vec2 g_from(-0.5, 0.0), g_to(0.5, 0.2);

  nn::Tape t0;
  nn::Var x0 = nn::leaf(t0, x);
  nn::Var c0 = cond.forward(t0, g_from, g_to, x0, 0.0);
  CHECK(c0.val() == x);

  nn::Tape t1;
  nn::Var c1 = cond.forward(t1, g_from, g_to, nn::leaf(t1, x), 1.0);
  REQUIRE(c1.rows() == 10);
  REQUIRE(c1.cols() == 2);
  // attention values come from the two subgoal tokens only, so every row is a
  // convex mix of the same two read-out points: all rows sit on one line, but
  // the positional queries move the read-out along it
  const Eigen::RowVector2d r0 = c1.val().row(0);
  Eigen::RowVector2d dir = Eigen::RowVector2d::Zero();
  for (int i = 1; i < 10; ++i)
    if ((c1.val().row(i) - r0).norm() > dir.norm()) dir = c1.val().row(i) - r0;
  REQUIRE(dir.norm() > 1e-9);  // not a constant broadcast
  for (int i = 1; i < 10; ++i) {
    const Eigen::RowVector2d d = c1.val().row(i) - r0;
    CHECK(std::abs(d.x() * dir.y() - d.y() * dir.x()) < 1e-10);
  }

  // blend arithmetic at rho = 0.4 against the two endpoints
  nn::Tape t2;
  nn::Var c2 = cond.forward(t2, g_from, g_to, nn::leaf(t2, x), 0.4);
  const Eigen::MatrixXd expect = 0.4 * c1.val() + 0.6 * x;
  CHECK((c2.val() - expect).norm() < 1e-12);
}

TEST_CASE("denoiser: output shape equals input shape and evaluation is pure") {
  DiffusionConfig cfg = tiny_config();
  const DiffusionModel m = make_diffusion_model(cfg);
  const Eigen::MatrixXd x = sine_leg(cfg.L);
  const Vec2 a(-0.8, 0.0), b(0.8, 0.0);
  const Eigen::MatrixXd e1 = m.predict_eps(x, 3, a, b);
  const Eigen::MatrixXd e2 = m.predict_eps(x, 3, a, b);
  REQUIRE(e1.rows() == cfg.L);
  REQUIRE(e1.cols() == 2);
  CHECK(e1 == e2);
  // a different step changes the time embedding, hence the output
  const Eigen::MatrixXd e3 = m.predict_eps(x, 17, a, b);
  CHECK((e1 - e3).norm() > 1e-8);
}

TEST_CASE("reverse chain with the true noise inverts one step exactly") {
  const NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
  const Eigen::MatrixXd x0 = sine_leg(12);
  Rng rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd eps(12, 2);
  for (int i = 0; i < 12; ++i) {
    eps(i, 0) = n(rng);
    eps(i, 1) = n(rng);
  }
  const Eigen::MatrixXd x1 = forward_noise(x0, 1, eps, s);
  Rng chain_rng(1);
  const Eigen::MatrixXd back = reverse_diffuse(
      s, x1, 1, [&](const Eigen::MatrixXd&, int) { return eps; }, chain_rng);
  CHECK((back - x0).norm() < 1e-6);
}

TEST_CASE("training: deterministic loss curves and a decreasing trend") {
  DiffusionConfig cfg = tiny_config();
  std::vector<LegExample> legs;
  for (int k = 0; k < 4; ++k) {
    LegExample ex;
    ex.x0 = sine_leg(cfg.L) * (0.7 + 0.1 * k);
    ex.g_from = Vec2(-0.8, 0.0);
    ex.g_to = Vec2(0.8, 0.0);
    legs.push_back(ex);
  }
  const DiffusionTrainResult a = train_diffusion(legs, cfg);
  const DiffusionTrainResult b = train_diffusion(legs, cfg);
  REQUIRE(a.loss_curve.size() == b.loss_curve.size());
  for (std::size_t i = 0; i < a.loss_curve.size(); ++i)
    CHECK(a.loss_curve[i] == b.loss_curve[i]);

  const double head = a.loss_curve[0];
  const double tail = a.loss_curve.back();
  CHECK(tail < head);
}

TEST_CASE("training rejects inconsistent leg shapes") {
  DiffusionConfig cfg = tiny_config();
  std::vector<LegExample> legs(2);
  legs[0].x0 = sine_leg(cfg.L);
  legs[1].x0 = sine_leg(cfg.L + 2);
  CHECK_THROWS(train_diffusion(legs, cfg));
}

TEST_CASE("reconstruction error grows with the noising level") {
  DiffusionConfig cfg = tiny_config();
  const DiffusionModel m = make_diffusion_model(cfg);
  const Eigen::MatrixXd leg = sine_leg(cfg.L);
  const Vec2 a(-0.8, 0.0), b(0.8, 0.0);
  auto mean_err = [&](int t_inf) {
    double sum = 0.0;
    for (int k = 0; k < 10; ++k) {
      Rng rng(derive_seed(100, k));
      sum += recon_error(leg, reconstruct(m, leg, a, b, t_inf, rng));
    }
    return sum / 10;
  };
  const double shallow = mean_err(1);
  const double deep = mean_err(cfg.T);
  CHECK(shallow < deep);
}

TEST_CASE("model parameter list is stable and deduplicated") {
  DiffusionConfig cfg = tiny_config();
  const DiffusionModel m = make_diffusion_model(cfg);
  auto ps = m.params();
  REQUIRE(!ps.empty());
  std::vector<std::string> names;
  for (auto* p : ps) names.push_back(p->name);
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
  // two builds with the same seed produce identical parameter values
  const DiffusionModel m2 = make_diffusion_model(cfg);
  auto ps2 = m2.params();
  REQUIRE(ps.size() == ps2.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(ps[i]->name == ps2[i]->name);
    CHECK(ps[i]->value == ps2[i]->value);
  }
}

}  // TEST_SUITE
