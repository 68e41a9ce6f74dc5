#include "ihid/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ihid {

using nn::Mat;
using nn::Tape;
using nn::Var;

NoiseSchedule make_schedule(int T, double beta1, double betaT) {
  if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2");
  if (!(0.0 < beta1 && beta1 < betaT && betaT < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta1 < betaT < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(static_cast<std::size_t>(T));
  s.alphas.resize(s.betas.size());
  s.alpha_bars.resize(s.betas.size());
  s.beta_tildes.resize(s.betas.size());
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    const std::size_t i = static_cast<std::size_t>(t - 1);
    const double prev_bar = prod;  // alpha_bar_{t-1}, with alpha_bar_0 = 1
    s.betas[i] = beta1 + (t - 1) * (betaT - beta1) / (T - 1);
    s.alphas[i] = 1.0 - s.betas[i];
    prod *= s.alphas[i];
    s.alpha_bars[i] = prod;
    s.beta_tildes[i] = (1.0 - prev_bar) / (1.0 - s.alpha_bars[i]) * s.betas[i];
  }
  return s;
}

Mat forward_noise(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& s) {
  if (t < 1 || t > s.T) throw std::invalid_argument("forward_noise: t out of range");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw std::invalid_argument("forward_noise: shape mismatch");
  const double ab = s.alpha_bars[static_cast<std::size_t>(t - 1)];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

double recon_error(const Mat& orig, const Mat& recon) {
  if (orig.rows() != recon.rows() || orig.cols() != recon.cols())
    throw std::invalid_argument("recon_error: shape mismatch");
  return (orig - recon).rowwise().squaredNorm().mean();
}

// ---------------------------------------------------------------------------
// Conditioner

Conditioner::Conditioner(int subgoal_dim, int ctx_dim, std::uint64_t seed)
    : subgoal_dim_(subgoal_dim), ctx_dim_(ctx_dim) {
  if (subgoal_dim < 1 || ctx_dim < 1)
    throw std::invalid_argument("Conditioner: dims must be positive");
  Rng rng(derive_seed(seed, fnv1a64("conditioner_init")));
  auto mk = [&](const char* name, Eigen::Index r, Eigen::Index c) {
    return nn::Param(std::string("cond.") + name, nn::glorot(r, c, rng));
  };
  auto zb = [&](const char* name, Eigen::Index c) {
    return nn::Param(std::string("cond.") + name, nn::zeros(1, c));
  };
  p_.tok_w1 = mk("tok_w1", 4, subgoal_dim);
  p_.tok_b1 = zb("tok_b1", subgoal_dim);
  p_.tok_w2 = mk("tok_w2", 4, subgoal_dim);
  p_.tok_b2 = zb("tok_b2", subgoal_dim);
  p_.wq_x = mk("wq_x", 2, ctx_dim);
  p_.wq_p = mk("wq_p", 4, ctx_dim);
  p_.bq = zb("bq", ctx_dim);
  p_.wk = mk("wk", subgoal_dim, ctx_dim);
  p_.bk = zb("bk", ctx_dim);
  p_.wv = mk("wv", subgoal_dim, ctx_dim);
  p_.bv = zb("bv", ctx_dim);
  p_.out_w = mk("out_w", ctx_dim, 2);
  p_.out_b = zb("out_b", 2);
}

Var Conditioner::forward(Tape& t, const Vec2& g_from, const Vec2& g_to, Var x_t,
                         double rho) const {
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("Conditioner: rho must be in [0,1]");
  if (x_t.cols() != 2) throw std::invalid_argument("Conditioner: x_t must be L x 2");
  if (rho == 0.0) return x_t;

  Mat pair(1, 4);
  pair << g_from.x(), g_from.y(), g_to.x(), g_to.y();
  Var in = nn::leaf(t, std::move(pair));
  Var tok1 = nn::tanh_act(
      nn::add_rowvec(nn::matmul(in, nn::param(t, p_.tok_w1)), nn::param(t, p_.tok_b1)));
  Var tok2 = nn::tanh_act(
      nn::add_rowvec(nn::matmul(in, nn::param(t, p_.tok_w2)), nn::param(t, p_.tok_b2)));
  Var tokens = nn::concat_rows({tok1, tok2});  // 2 x subgoal_dim

  // smooth positional basis so each row can place its query along the leg
  const Eigen::Index L = x_t.rows();
  Mat pos(L, 4);
  for (Eigen::Index i = 0; i < L; ++i) {
    const double u = L > 1 ? static_cast<double>(i) / static_cast<double>(L - 1) : 0.5;
    pos(i, 0) = u;
    pos(i, 1) = 1.0 - u;
    pos(i, 2) = std::sin(M_PI * u);
    pos(i, 3) = std::cos(M_PI * u);
  }
  Var q = nn::add_rowvec(nn::add(nn::matmul(x_t, nn::param(t, p_.wq_x)),
                                 nn::matmul(nn::leaf(t, std::move(pos)), nn::param(t, p_.wq_p))),
                         nn::param(t, p_.bq));                   // L x ctx_dim
  Var k = nn::add_rowvec(nn::matmul(tokens, nn::param(t, p_.wk)), nn::param(t, p_.bk));
  Var v = nn::add_rowvec(nn::matmul(tokens, nn::param(t, p_.wv)), nn::param(t, p_.bv));
  Var scores = nn::scale(nn::matmul(q, nn::transpose(k)),
                         1.0 / std::sqrt(static_cast<double>(ctx_dim_)));
  Var attended = nn::matmul(nn::softmax_rows(scores), v);        // L x ctx_dim
  Var a = nn::add_rowvec(nn::matmul(attended, nn::param(t, p_.out_w)),
                         nn::param(t, p_.out_b));                // L x 2
  return nn::add(nn::scale(a, rho), nn::scale(x_t, 1.0 - rho));
}

std::vector<nn::Param*> Conditioner::params() const {
  return {&p_.tok_w1, &p_.tok_b1, &p_.tok_w2, &p_.tok_b2, &p_.wq_x, &p_.wq_p, &p_.bq,
          &p_.wk,     &p_.bk,     &p_.wv,     &p_.bv,     &p_.out_w, &p_.out_b};
}

// ---------------------------------------------------------------------------
// DenoiserNet

DenoiserNet::DenoiserNet(const DiffusionConfig& cfg, std::uint64_t seed)
    : latent_(cfg.latent),
      heads_(cfg.heads),
      layers_n_(cfg.layers),
      L_(cfg.L),
      time_channels_(cfg.time_channels) {
  if (latent_ % heads_ != 0)
    throw std::invalid_argument("DenoiserNet: latent must be divisible by heads");
  if (time_channels_ < 2 || time_channels_ % 2 != 0)
    throw std::invalid_argument("DenoiserNet: time_channels must be even and >= 2");
  if (layers_n_ < 1) throw std::invalid_argument("DenoiserNet: need at least one layer");

  Rng rng(derive_seed(seed, fnv1a64("denoiser_init")));
  auto mk = [&](std::string name, Eigen::Index r, Eigen::Index c) {
    return nn::Param(std::move(name), nn::glorot(r, c, rng));
  };
  auto zb = [&](std::string name, Eigen::Index c) {
    return nn::Param(std::move(name), nn::zeros(1, c));
  };
  auto ones = [&](std::string name, Eigen::Index c) {
    return nn::Param(std::move(name), Mat::Ones(1, c));
  };

  const Eigen::Index d = latent_;
  p_.in_w = mk("net.in_w", 2, d);
  p_.in_b = zb("net.in_b", d);
  p_.pos = nn::Param("net.pos", 0.02 * nn::randn(L_, d, rng));
  p_.time_w = mk("net.time_w", time_channels_, d);
  p_.time_b = zb("net.time_b", d);

  const Eigen::Index ff = static_cast<Eigen::Index>(cfg.ff_mult) * d;
  p_.layers.resize(static_cast<std::size_t>(layers_n_));
  for (int l = 1; l <= layers_n_; ++l) {
    auto& lp = p_.layers[static_cast<std::size_t>(l - 1)];
    const std::string pre = "net.l" + std::to_string(l) + ".";
    lp.ln1_g = ones(pre + "ln1_g", d);
    lp.ln1_b = zb(pre + "ln1_b", d);
    lp.wq = mk(pre + "wq", d, d);
    lp.bq = zb(pre + "bq", d);
    lp.wk = mk(pre + "wk", d, d);
    lp.bk = zb(pre + "bk", d);
    lp.wv = mk(pre + "wv", d, d);
    lp.bv = zb(pre + "bv", d);
    lp.wo = mk(pre + "wo", d, d);
    lp.bo = zb(pre + "bo", d);
    lp.ln2_g = ones(pre + "ln2_g", d);
    lp.ln2_b = zb(pre + "ln2_b", d);
    lp.ff1_w = mk(pre + "ff1_w", d, ff);
    lp.ff1_b = zb(pre + "ff1_b", ff);
    lp.ff2_w = mk(pre + "ff2_w", ff, d);
    lp.ff2_b = zb(pre + "ff2_b", d);
    lp.has_skip = l > (layers_n_ + 1) / 2;
    if (lp.has_skip) {
      lp.skip_w = mk(pre + "skip_w", 2 * d, d);
      lp.skip_b = zb(pre + "skip_b", d);
    }
  }
  p_.fin_g = ones("net.fin_g", d);
  p_.fin_b = zb("net.fin_b", d);
  p_.out_w = mk("net.out_w", d, 2);
  p_.out_b = zb("net.out_b", 2);
}

Var DenoiserNet::forward(Tape& t, Var c, int step, double dropout_rate, Rng* rng) const {
  if (c.cols() != 2 || c.rows() != L_)
    throw std::invalid_argument("DenoiserNet: input must be L x 2");
  const bool drop = dropout_rate > 0.0 && rng != nullptr;

  // Sinusoidal base channels at geometrically spaced frequencies from 1 down
  // to 1e-4, projected into the latent width and broadcast over positions.
  const int k = time_channels_ / 2;
  Mat temb(1, time_channels_);
  for (int i = 0; i < k; ++i) {
    const double freq = k > 1 ? std::pow(1e-4, static_cast<double>(i) / (k - 1)) : 1.0;
    temb(0, 2 * i) = std::sin(freq * static_cast<double>(step));
    temb(0, 2 * i + 1) = std::cos(freq * static_cast<double>(step));
  }
  Var time_vec = nn::add_rowvec(nn::matmul(nn::leaf(t, std::move(temb)), nn::param(t, p_.time_w)),
                                nn::param(t, p_.time_b));

  Var h = nn::add_rowvec(nn::matmul(c, nn::param(t, p_.in_w)), nn::param(t, p_.in_b));
  h = nn::add(h, nn::param(t, p_.pos));
  h = nn::add(h, nn::broadcast_rows(time_vec, L_));

  const Eigen::Index d = latent_;
  const Eigen::Index dh = d / heads_;
  std::vector<Var> outputs;
  outputs.reserve(p_.layers.size());

  for (std::size_t li = 0; li < p_.layers.size(); ++li) {
    auto& lp = p_.layers[li];
    if (lp.has_skip) {
      // Long skip: fold in the paired down-path layer's output.
      const std::size_t src = static_cast<std::size_t>(layers_n_) - li - 1;
      Var cat = nn::concat_cols({h, outputs[src]});
      h = nn::add_rowvec(nn::matmul(cat, nn::param(t, lp.skip_w)), nn::param(t, lp.skip_b));
    }

    Var xn = nn::layernorm_rows(h, nn::param(t, lp.ln1_g), nn::param(t, lp.ln1_b));
    Var q = nn::add_rowvec(nn::matmul(xn, nn::param(t, lp.wq)), nn::param(t, lp.bq));
    Var kk = nn::add_rowvec(nn::matmul(xn, nn::param(t, lp.wk)), nn::param(t, lp.bk));
    Var v = nn::add_rowvec(nn::matmul(xn, nn::param(t, lp.wv)), nn::param(t, lp.bv));
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads_));
    for (int hd = 0; hd < heads_; ++hd) {
      Var qh = nn::slice_cols(q, hd * dh, dh);
      Var kh = nn::slice_cols(kk, hd * dh, dh);
      Var vh = nn::slice_cols(v, hd * dh, dh);
      Var scores = nn::scale(nn::matmul(qh, nn::transpose(kh)),
                             1.0 / std::sqrt(static_cast<double>(dh)));
      head_outs.push_back(nn::matmul(nn::softmax_rows(scores), vh));
    }
    Var att = nn::add_rowvec(nn::matmul(nn::concat_cols(head_outs), nn::param(t, lp.wo)),
                             nn::param(t, lp.bo));
    if (drop) att = nn::dropout(att, dropout_rate, *rng);
    h = nn::add(h, att);

    Var fn = nn::layernorm_rows(h, nn::param(t, lp.ln2_g), nn::param(t, lp.ln2_b));
    Var ff = nn::add_rowvec(nn::matmul(fn, nn::param(t, lp.ff1_w)), nn::param(t, lp.ff1_b));
    ff = nn::add_rowvec(nn::matmul(nn::gelu(ff), nn::param(t, lp.ff2_w)),
                        nn::param(t, lp.ff2_b));
    if (drop) ff = nn::dropout(ff, dropout_rate, *rng);
    h = nn::add(h, ff);
    outputs.push_back(h);
  }

  Var fin = nn::layernorm_rows(h, nn::param(t, p_.fin_g), nn::param(t, p_.fin_b));
  return nn::add_rowvec(nn::matmul(fin, nn::param(t, p_.out_w)), nn::param(t, p_.out_b));
}

std::vector<nn::Param*> DenoiserNet::params() const {
  std::vector<nn::Param*> out = {&p_.in_w, &p_.in_b, &p_.pos, &p_.time_w, &p_.time_b};
  for (auto& lp : p_.layers) {
    for (nn::Param* q : {&lp.ln1_g, &lp.ln1_b, &lp.wq, &lp.bq, &lp.wk, &lp.bk, &lp.wv, &lp.bv,
                         &lp.wo, &lp.bo, &lp.ln2_g, &lp.ln2_b, &lp.ff1_w, &lp.ff1_b, &lp.ff2_w,
                         &lp.ff2_b})
      out.push_back(q);
    if (lp.has_skip) {
      out.push_back(&lp.skip_w);
      out.push_back(&lp.skip_b);
    }
  }
  for (nn::Param* q : {&p_.fin_g, &p_.fin_b, &p_.out_w, &p_.out_b}) out.push_back(q);
  return out;
}

// ---------------------------------------------------------------------------
// Model assembly, training, reconstruction

std::vector<nn::Param*> DiffusionModel::params() const {
  auto out = cond.params();
  for (auto* p : net.params()) out.push_back(p);
  return out;
}

Mat DiffusionModel::predict_eps(const Mat& x_t, int step, const Vec2& g_from,
                                const Vec2& g_to) const {
  Tape t;
  Var x = nn::leaf(t, x_t);
  Var c = cond.forward(t, g_from, g_to, x, cfg.rho);
  return net.forward(t, c, step, 0.0, nullptr).val();
}

DiffusionModel make_diffusion_model(const DiffusionConfig& cfg) {
  if (cfg.L < 2) throw std::invalid_argument("diffusion: L must be >= 2");
  if (cfg.rho < 0.0 || cfg.rho > 1.0) throw std::invalid_argument("diffusion: rho in [0,1]");
  if (cfg.t_inf < 1 || cfg.t_inf > cfg.T)
    throw std::invalid_argument("diffusion: t_inf must be in [1, T]");
  DiffusionModel m;
  m.cfg = cfg;
  m.schedule = make_schedule(cfg.T, cfg.beta1, cfg.betaT);
  m.cond = Conditioner(cfg.subgoal_dim, cfg.ctx_dim, derive_seed(cfg.seed, fnv1a64("cond")));
  m.net = DenoiserNet(cfg, derive_seed(cfg.seed, fnv1a64("net")));
  return m;
}

DiffusionTrainResult train_diffusion(const std::vector<LegExample>& legs,
                                     const DiffusionConfig& cfg) {
  if (legs.empty()) throw std::invalid_argument("train_diffusion: no training legs");
  for (const auto& lg : legs)
    if (lg.x0.rows() != cfg.L || lg.x0.cols() != 2)
      throw std::invalid_argument("train_diffusion: leg shape must be L x 2");

  DiffusionTrainResult res;
  res.model = make_diffusion_model(cfg);
  nn::Adam opt({cfg.lr});
  Rng rng(derive_seed(cfg.seed, fnv1a64("diffusion_train")));
  std::uniform_int_distribution<int> t_dist(1, cfg.T);

  std::vector<std::size_t> order(legs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t off = 0; off < order.size();
         off += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi =
          std::min(order.size(), off + static_cast<std::size_t>(cfg.batch_size));
      Tape t;
      Var total{};
      for (std::size_t k = off; k < hi; ++k) {
        const auto& lg = legs[order[k]];
        const int step = t_dist(rng);
        const Mat eps = nn::randn(cfg.L, 2, rng);
        Var x_t = nn::leaf(t, forward_noise(lg.x0, step, eps, res.model.schedule));
        Var c = res.model.cond.forward(t, lg.g_from, lg.g_to, x_t, cfg.rho);
        Var pred = res.model.net.forward(t, c, step, cfg.dropout, &rng);
        Var diff = nn::sub(pred, nn::leaf(t, eps));
        Var li = nn::mean_all(nn::cmul(diff, diff));
        total = total.tape ? nn::add(total, li) : li;
      }
      Var loss = nn::scale(total, 1.0 / static_cast<double>(hi - off));
      epoch_loss += loss.val()(0, 0);
      ++batches;
      t.backward(loss.idx);
      opt.step(t);
    }
    res.loss_curve.push_back(epoch_loss / std::max(1, batches));
  }
  return res;
}

Mat reverse_diffuse(const NoiseSchedule& s, const Mat& x_init, int t_inf,
                    const std::function<Mat(const Mat&, int)>& eps_fn, Rng& rng) {
  if (t_inf < 1 || t_inf > s.T) throw std::invalid_argument("reverse_diffuse: t_inf out of range");
  Mat x = x_init;
  for (int t = t_inf; t >= 1; --t) {
    const std::size_t i = static_cast<std::size_t>(t - 1);
    const Mat eps_hat = eps_fn(x, t);
    if (eps_hat.rows() != x.rows() || eps_hat.cols() != x.cols())
      throw std::invalid_argument("reverse_diffuse: predictor shape mismatch");
    x = (x - (s.betas[i] / std::sqrt(1.0 - s.alpha_bars[i])) * eps_hat) / std::sqrt(s.alphas[i]);
    if (t > 1) x += std::sqrt(s.beta_tildes[i]) * nn::randn(x.rows(), x.cols(), rng);
  }
  return x;
}

Mat reconstruct(const DiffusionModel& m, const Mat& leg, const Vec2& g_from, const Vec2& g_to,
                int t_inf, Rng& rng) {
  if (leg.rows() != m.cfg.L || leg.cols() != 2)
    throw std::invalid_argument("reconstruct: leg must be L x 2");
  const Mat eps = nn::randn(leg.rows(), leg.cols(), rng);
  const Mat x_t = forward_noise(leg, t_inf, eps, m.schedule);
  return reverse_diffuse(
      m.schedule, x_t, t_inf,
      [&m, &g_from, &g_to](const Mat& x, int step) {
        return m.predict_eps(x, step, g_from, g_to);
      },
      rng);
}

}  // namespace ihid
