#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ihid/common.hpp"
#include "ihid/geo.hpp"
#include "ihid/nn.hpp"

namespace ihid {

// Linear variance schedule with derived quantities, 1-indexed in t:
// betas[t-1] = beta1 + (t-1) * (betaT - beta1) / (T-1).
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;       // 1 - beta
  std::vector<double> alpha_bars;   // running products of alpha
  std::vector<double> beta_tildes;  // posterior variances; beta_tildes[0] == 0
};

NoiseSchedule make_schedule(int T, double beta1, double betaT);

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, 1 <= t <= T.
Eigen::MatrixXd forward_noise(const Eigen::MatrixXd& x0, int t, const Eigen::MatrixXd& eps,
                              const NoiseSchedule& s);

// Mean over the L rows of the squared Euclidean displacement between the
// original and reconstructed subtrajectories (normalized coordinates).
double recon_error(const Eigen::MatrixXd& orig, const Eigen::MatrixXd& recon);

struct DiffusionConfig {
  int L = 64;            // fixed leg length
  int latent = 256;      // transformer width
  int layers = 7;        // transformer depth; long skips pair layer i with layers+1-i
  int heads = 4;
  int ff_mult = 4;       // feed-forward width multiplier
  double dropout = 0.2;  // training-time dropout
  int time_channels = 4; // sinusoidal base channels before projection
  int subgoal_dim = 30;  // per-token subgoal encoding width
  int ctx_dim = 64;      // cross-attention dimension
  double rho = 0.4;      // conditioning blend factor, in [0, 1]
  int T = 800;
  int t_inf = 200;       // partial noising level used at reconstruction
  double beta1 = 1e-4;
  double betaT = 0.02;
  double lr = 1e-3;
  int epochs = 120;
  int batch_size = 128;
  std::uint64_t seed = 0;
};

// Blends subgoal context into the noisy subtrajectory:
//   c = rho * A + (1 - rho) * x_t
// where row i of A is a per-position cross-attention read-out. Two subgoal
// tokens are encoded from the concatenated (g_i, g_next) center coordinates;
// each position builds a query from its x_t row plus a smooth positional
// basis and attends over the tokens. Values come from the tokens alone, so
// every read-out is a convex mix of two learned points that sweeps across
// positions — enough to express the corridor between the centers — while the
// observed geometry only steers the attention weights, never the content.
class Conditioner {
public:
  Conditioner() = default;
  Conditioner(int subgoal_dim, int ctx_dim, std::uint64_t seed);

  // x_t is an L x 2 tape value; result has the same shape. rho == 0 returns
  // x_t untouched (bitwise identity, attention branch skipped).
  nn::Var forward(nn::Tape& t, const Vec2& g_from, const Vec2& g_to, nn::Var x_t,
                  double rho) const;
  std::vector<nn::Param*> params() const;

private:
  struct P {
    nn::Param tok_w1, tok_b1, tok_w2, tok_b2;  // 4 -> subgoal_dim, one map per token
    nn::Param wq_x, wq_p, bq;                  // row queries from x_t + positional basis
    nn::Param wk, bk, wv, bv;                  // token keys/values in ctx_dim
    nn::Param out_w, out_b;                    // ctx_dim -> 2 read-out per position
  };
  mutable P p_;
  int subgoal_dim_ = 0;
  int ctx_dim_ = 0;
};

// Pre-LN transformer denoiser over L x 2 inputs: input projection + learned
// positional embedding + projected sinusoidal time embedding, `layers` blocks
// (multi-head self-attention + GELU feed-forward), long skip connections
// concatenating layer i's output into layer layers+1-i's input through a
// linear projection, final layernorm and 2-d output head.
class DenoiserNet {
public:
  DenoiserNet() = default;
  DenoiserNet(const DiffusionConfig& cfg, std::uint64_t seed);

  // c is an L x 2 tape value; returns the predicted noise, L x 2. Dropout is
  // applied only when rate > 0 and rng is non-null (training).
  nn::Var forward(nn::Tape& t, nn::Var c, int step, double dropout_rate, Rng* rng) const;
  std::vector<nn::Param*> params() const;

private:
  struct Layer {
    nn::Param ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Param ln2_g, ln2_b, ff1_w, ff1_b, ff2_w, ff2_b;
    bool has_skip = false;
    nn::Param skip_w, skip_b;  // 2*latent -> latent, up-path layers only
  };
  struct P {
    nn::Param in_w, in_b, pos, time_w, time_b;
    std::vector<Layer> layers;
    nn::Param fin_g, fin_b, out_w, out_b;
  };
  mutable P p_;
  int latent_ = 0, heads_ = 0, layers_n_ = 0, L_ = 0, time_channels_ = 0;
};

struct DiffusionModel {
  DiffusionConfig cfg;
  NoiseSchedule schedule;
  Conditioner cond;
  DenoiserNet net;

  std::vector<nn::Param*> params() const;
  // One denoiser evaluation at step t with conditioning recomputed from x_t.
  Eigen::MatrixXd predict_eps(const Eigen::MatrixXd& x_t, int step, const Vec2& g_from,
                              const Vec2& g_to) const;
};

DiffusionModel make_diffusion_model(const DiffusionConfig& cfg);

// A training example: resampled normalized leg plus its subgoal pair centers.
struct LegExample {
  Eigen::MatrixXd x0;  // L x 2
  Vec2 g_from{0.0, 0.0};
  Vec2 g_to{0.0, 0.0};
};

struct DiffusionTrainResult {
  DiffusionModel model;
  std::vector<double> loss_curve;  // per-epoch mean of minibatch losses
};

// Minibatch Adam on the noise-matching objective: per sample draw t uniform
// in [1, T] and eps ~ N(0, I), noise the leg, blend conditioning, and regress
// the denoiser output onto eps (mean squared error over all elements).
// Deterministic given cfg.seed.
DiffusionTrainResult train_diffusion(const std::vector<LegExample>& legs,
                                     const DiffusionConfig& cfg);

// Reverse update chain from t_inf down to 1 starting at x_init, with the
// noise predictor supplied as a callable (the model path recomputes the
// conditioning from the current iterate each step). z is drawn per step
// except the final one, where it is zero.
Eigen::MatrixXd reverse_diffuse(const NoiseSchedule& s, const Eigen::MatrixXd& x_init, int t_inf,
                                const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, int)>& eps_fn,
                                Rng& rng);

// Noise the observed leg to level t_inf, then run the reverse chain back to
// t = 0 under the model's conditioned denoiser.
Eigen::MatrixXd reconstruct(const DiffusionModel& m, const Eigen::MatrixXd& leg,
                            const Vec2& g_from, const Vec2& g_to, int t_inf, Rng& rng);

}  // namespace ihid
