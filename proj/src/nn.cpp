#include "ihid/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ihid::nn {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_same_tape(Var a, Var b) {
  require(a.tape != nullptr && a.tape == b.tape, "nn: operands live on different tapes");
}

}  // namespace

int Tape::add_node(Mat val, std::function<void()> back) {
  nodes_.push_back({std::move(val), Mat(), std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accum(int i, const Mat& g) {
  Mat& dst = nodes_[static_cast<std::size_t>(i)].grad;
  if (dst.size() == 0)
    dst = g;
  else
    dst += g;
}

void Tape::backward(int loss_node) {
  require(loss_node >= 0 && loss_node < static_cast<int>(nodes_.size()),
          "backward: node out of range");
  require(nodes_[static_cast<std::size_t>(loss_node)].val.size() == 1,
          "backward: loss must be 1x1");
  nodes_[static_cast<std::size_t>(loss_node)].grad = Mat::Ones(1, 1);
  for (int i = loss_node; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() != 0 && n.back) n.back();
  }
}

int Tape::bind(Param& p) {
  for (const auto& [ptr, idx] : bound_)
    if (ptr == &p) return idx;
  const int idx = add_node(p.value);
  bound_.emplace_back(&p, idx);
  return idx;
}

void Tape::clear() {
  nodes_.clear();
  bound_.clear();
}

Var leaf(Tape& t, Mat v) { return {&t, t.add_node(std::move(v))}; }
Var param(Tape& t, Param& p) { return {&t, t.bind(p)}; }

// Note on the capture `out_ = t->size()`: the closure is built before
// add_node pushes the node, so size() equals the index the node will get.

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require(a.cols() == b.rows(), "matmul: inner dims differ");
  Tape* t = a.tape;
  const int ai = a.idx, bi = b.idx;
  const int out = t->add_node(a.val() * b.val(), [t, ai, bi, out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    t->accum(ai, g * t->val(bi).transpose());
    t->accum(bi, t->val(ai).transpose() * g);
  });
  return {t, out};
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tape* t = a.tape;
  const int ai = a.idx, bi = b.idx;
  const int out = t->add_node(a.val() + b.val(), [t, ai, bi, out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    t->accum(ai, g);
    t->accum(bi, g);
  });
  return {t, out};
}

Var add_rowvec(Var a, Var b) {
  require_same_tape(a, b);
  require(b.rows() == 1 && a.cols() == b.cols(), "add_rowvec: need 1 x cols vector");
  Tape* t = a.tape;
  const int ai = a.idx, bi = b.idx;
  Mat v = a.val();
  v.rowwise() += b.val().row(0);
  const int out = t->add_node(std::move(v), [t, ai, bi, out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    t->accum(ai, g);
    t->accum(bi, g.colwise().sum());
  });
  return {t, out};
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Tape* t = a.tape;
  const int ai = a.idx, bi = b.idx;
  const int out = t->add_node(a.val() - b.val(), [t, ai, bi, out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    t->accum(ai, g);
    t->accum(bi, -g);
  });
  return {t, out};
}

Var cmul(Var a, Var b) {
  require_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "cmul: shape mismatch");
  Tape* t = a.tape;
  const int ai = a.idx, bi = b.idx;
  const int out =
      t->add_node(a.val().cwiseProduct(b.val()), [t, ai, bi, out_ = t->size()]() {
        const Mat& g = t->grad(static_cast<int>(out_));
        t->accum(ai, g.cwiseProduct(t->val(bi)));
        t->accum(bi, g.cwiseProduct(t->val(ai)));
      });
  return {t, out};
}

Var scale(Var a, double s) {
  Tape* t = a.tape;
  const int ai = a.idx;
  const int out = t->add_node(a.val() * s, [t, ai, s, out_ = t->size()]() {
    t->accum(ai, t->grad(static_cast<int>(out_)) * s);
  });
  return {t, out};
}

Var add_const(Var a, double c) {
  Tape* t = a.tape;
  const int ai = a.idx;
  const int out =
      t->add_node((a.val().array() + c).matrix(), [t, ai, out_ = t->size()]() {
        t->accum(ai, t->grad(static_cast<int>(out_)));
      });
  return {t, out};
}

Var transpose(Var a) {
  Tape* t = a.tape;
  const int ai = a.idx;
  const int out = t->add_node(a.val().transpose(), [t, ai, out_ = t->size()]() {
    t->accum(ai, t->grad(static_cast<int>(out_)).transpose());
  });
  return {t, out};
}

Var relu(Var a) {
  Tape* t = a.tape;
  const int ai = a.idx;
  const int out = t->add_node(a.val().cwiseMax(0.0), [t, ai, out_ = t->size()]() {
    const Mat mask = (t->val(ai).array() > 0.0).cast<double>().matrix();
    t->accum(ai, t->grad(static_cast<int>(out_)).cwiseProduct(mask));
  });
  return {t, out};
}

Var gelu(Var a) {
  Tape* t = a.tape;
  const int ai = a.idx;
  Mat y = a.val().unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); });
  const int out = t->add_node(std::move(y), [t, ai, out_ = t->size()]() {
    const Mat d = t->val(ai).unaryExpr([](double x) {
      const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
      return cdf + x * pdf;
    });
    t->accum(ai, t->grad(static_cast<int>(out_)).cwiseProduct(d));
  });
  return {t, out};
}

Var tanh_act(Var a) {
  Tape* t = a.tape;
  const int ai = a.idx;
  const int out =
      t->add_node(a.val().array().tanh().matrix(), [t, ai, out_ = t->size()]() {
        const int o = static_cast<int>(out_);
        const Mat d = (1.0 - t->val(o).array().square()).matrix();
        t->accum(ai, t->grad(o).cwiseProduct(d));
      });
  return {t, out};
}

Var softmax_rows(Var a) {
  Tape* t = a.tape;
  const int ai = a.idx;
  Mat y = a.val();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  const int out = t->add_node(std::move(y), [t, ai, out_ = t->size()]() {
    const int o = static_cast<int>(out_);
    const Mat& g = t->grad(o);
    const Mat& yv = t->val(o);
    Mat gx(yv.rows(), yv.cols());
    for (Eigen::Index r = 0; r < yv.rows(); ++r) {
      const double s = g.row(r).cwiseProduct(yv.row(r)).sum();
      gx.row(r) = yv.row(r).cwiseProduct((g.row(r).array() - s).matrix());
    }
    t->accum(ai, gx);
  });
  return {t, out};
}

Var logsumexp_rows(Var a) {
  Tape* t = a.tape;
  const int ai = a.idx;
  const Mat& x = a.val();
  Mat y(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y(r, 0) = m + std::log((x.row(r).array() - m).exp().sum());
  }
  const int out = t->add_node(std::move(y), [t, ai, out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    const Mat& x2 = t->val(ai);
    Mat gx(x2.rows(), x2.cols());
    for (Eigen::Index r = 0; r < x2.rows(); ++r) {
      const double m = x2.row(r).maxCoeff();
      Eigen::RowVectorXd p = (x2.row(r).array() - m).exp().matrix();
      p /= p.sum();
      gx.row(r) = g(r, 0) * p;
    }
    t->accum(ai, gx);
  });
  return {t, out};
}

Var layernorm_rows(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  require(gain.rows() == 1 && gain.cols() == x.cols(), "layernorm: gain must be 1 x cols");
  require(bias.rows() == 1 && bias.cols() == x.cols(), "layernorm: bias must be 1 x cols");
  Tape* t = x.tape;
  const int xi = x.idx, gi = gain.idx, bi = bias.idx;

  const Mat& xv = x.val();
  const Eigen::Index d = xv.cols();
  Mat xhat(xv.rows(), d);
  Eigen::VectorXd sigma(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    sigma(r) = std::sqrt(var + eps);
    xhat.row(r) = ((xv.row(r).array() - mu) / sigma(r)).matrix();
  }
  Mat y = xhat;
  for (Eigen::Index r = 0; r < y.rows(); ++r)
    y.row(r) = y.row(r).cwiseProduct(gain.val().row(0)) + bias.val().row(0);

  const int out = t->add_node(std::move(y), [t, xi, gi, bi, xhat, sigma, out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    const Eigen::RowVectorXd gn = t->val(gi).row(0);
    Mat gx(xhat.rows(), xhat.cols());
    Eigen::RowVectorXd ggain = Eigen::RowVectorXd::Zero(xhat.cols());
    Eigen::RowVectorXd gbias = Eigen::RowVectorXd::Zero(xhat.cols());
    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
      const Eigen::RowVectorXd u = g.row(r).cwiseProduct(gn);
      const double mu = u.mean();
      const double mx = u.cwiseProduct(xhat.row(r)).mean();
      gx.row(r) = ((u.array() - mu - xhat.row(r).array() * mx) / sigma(r)).matrix();
      ggain += g.row(r).cwiseProduct(xhat.row(r));
      gbias += g.row(r);
    }
    t->accum(xi, gx);
    t->accum(gi, ggain);
    t->accum(bi, gbias);
  });
  return {t, out};
}

Var mean_all(Var a) {
  Tape* t = a.tape;
  const int ai = a.idx;
  const double n = static_cast<double>(a.val().size());
  Mat y(1, 1);
  y(0, 0) = a.val().mean();
  const int out = t->add_node(std::move(y), [t, ai, n, out_ = t->size()]() {
    const double g = t->grad(static_cast<int>(out_))(0, 0);
    const Mat& x = t->val(ai);
    t->accum(ai, Mat::Constant(x.rows(), x.cols(), g / n));
  });
  return {t, out};
}

Var sum_all(Var a) {
  Tape* t = a.tape;
  const int ai = a.idx;
  Mat y(1, 1);
  y(0, 0) = a.val().sum();
  const int out = t->add_node(std::move(y), [t, ai, out_ = t->size()]() {
    const double g = t->grad(static_cast<int>(out_))(0, 0);
    const Mat& x = t->val(ai);
    t->accum(ai, Mat::Constant(x.rows(), x.cols(), g));
  });
  return {t, out};
}

Var mean_over_rows(Var a) {
  Tape* t = a.tape;
  const int ai = a.idx;
  const double n = static_cast<double>(a.rows());
  const int out = t->add_node(a.val().colwise().mean(), [t, ai, n, out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    const Mat& x = t->val(ai);
    t->accum(ai, (g / n).replicate(x.rows(), 1));
  });
  return {t, out};
}

Var broadcast_rows(Var a, Eigen::Index n) {
  require(a.rows() == 1, "broadcast_rows: input must be 1 x c");
  Tape* t = a.tape;
  const int ai = a.idx;
  const int out = t->add_node(a.val().replicate(n, 1), [t, ai, out_ = t->size()]() {
    t->accum(ai, t->grad(static_cast<int>(out_)).colwise().sum());
  });
  return {t, out};
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: empty");
  Tape* t = parts[0].tape;
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    require(p.rows() == parts[0].rows(), "concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat y(parts[0].rows(), cols);
  Eigen::Index off = 0;
  std::vector<std::pair<int, Eigen::Index>> layout;
  for (const auto& p : parts) {
    y.middleCols(off, p.cols()) = p.val();
    layout.emplace_back(p.idx, p.cols());
    off += p.cols();
  }
  const int out = t->add_node(std::move(y), [t, layout, out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    Eigen::Index o = 0;
    for (const auto& [idx, c] : layout) {
      t->accum(idx, g.middleCols(o, c));
      o += c;
    }
  });
  return {t, out};
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: empty");
  Tape* t = parts[0].tape;
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    require(p.cols() == parts[0].cols(), "concat_rows: col mismatch");
    rows += p.rows();
  }
  Mat y(rows, parts[0].cols());
  Eigen::Index off = 0;
  std::vector<std::pair<int, Eigen::Index>> layout;
  for (const auto& p : parts) {
    y.middleRows(off, p.rows()) = p.val();
    layout.emplace_back(p.idx, p.rows());
    off += p.rows();
  }
  const int out = t->add_node(std::move(y), [t, layout, out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    Eigen::Index o = 0;
    for (const auto& [idx, r] : layout) {
      t->accum(idx, g.middleRows(o, r));
      o += r;
    }
  });
  return {t, out};
}

Var slice_cols(Var a, Eigen::Index first, Eigen::Index count) {
  require(first >= 0 && count > 0 && first + count <= a.cols(), "slice_cols: out of range");
  Tape* t = a.tape;
  const int ai = a.idx;
  const int out =
      t->add_node(a.val().middleCols(first, count), [t, ai, first, count, out_ = t->size()]() {
        const Mat& x = t->val(ai);
        Mat z = Mat::Zero(x.rows(), x.cols());
        z.middleCols(first, count) = t->grad(static_cast<int>(out_));
        t->accum(ai, z);
      });
  return {t, out};
}

Var reshape_rows(Var a, Eigen::Index r, Eigen::Index c) {
  require(r * c == a.rows() * a.cols(), "reshape_rows: element count mismatch");
  Tape* t = a.tape;
  const int ai = a.idx;
  const Mat& x = a.val();
  Mat y(r, c);
  for (Eigen::Index k = 0; k < r * c; ++k)
    y(k / c, k % c) = x(k / x.cols(), k % x.cols());
  const int out = t->add_node(std::move(y), [t, ai, c, out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    const Mat& x2 = t->val(ai);
    Mat z(x2.rows(), x2.cols());
    for (Eigen::Index k = 0; k < z.size(); ++k)
      z(k / z.cols(), k % z.cols()) = g(k / c, k % c);
    t->accum(ai, z);
  });
  return {t, out};
}

Var gather_rows(Var a, std::vector<int> rows) {
  Tape* t = a.tape;
  const int ai = a.idx;
  Mat y(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require(rows[k] >= 0 && rows[k] < a.rows(), "gather_rows: index out of range");
    y.row(static_cast<Eigen::Index>(k)) = a.val().row(rows[k]);
  }
  const int out = t->add_node(std::move(y), [t, ai, rows = std::move(rows), out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    const Mat& x = t->val(ai);
    Mat z = Mat::Zero(x.rows(), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k)
      z.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
    t->accum(ai, z);
  });
  return {t, out};
}

Var gather_elems(Var a, std::vector<std::pair<int, int>> at) {
  Tape* t = a.tape;
  const int ai = a.idx;
  Mat y(static_cast<Eigen::Index>(at.size()), 1);
  for (std::size_t k = 0; k < at.size(); ++k) {
    require(at[k].first >= 0 && at[k].first < a.rows() && at[k].second >= 0 &&
                at[k].second < a.cols(),
            "gather_elems: index out of range");
    y(static_cast<Eigen::Index>(k), 0) = a.val()(at[k].first, at[k].second);
  }
  const int out = t->add_node(std::move(y), [t, ai, at = std::move(at), out_ = t->size()]() {
    const Mat& g = t->grad(static_cast<int>(out_));
    const Mat& x = t->val(ai);
    Mat z = Mat::Zero(x.rows(), x.cols());
    for (std::size_t k = 0; k < at.size(); ++k)
      z(at[k].first, at[k].second) += g(static_cast<Eigen::Index>(k), 0);
    t->accum(ai, z);
  });
  return {t, out};
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  require(rate < 1.0, "dropout: rate must be < 1");
  Tape* t = a.tape;
  const int ai = a.idx;
  std::bernoulli_distribution keep(1.0 - rate);
  Mat mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  const int out =
      t->add_node(a.val().cwiseProduct(mask), [t, ai, mask, out_ = t->size()]() {
        t->accum(ai, t->grad(static_cast<int>(out_)).cwiseProduct(mask));
      });
  return {t, out};
}

void Adam::step(Tape& tape) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [p, idx] : tape.bound()) {
    if (!tape.touched(idx)) continue;
    const Mat& g = tape.grad(idx);
    if (p->m.size() == 0) {
      p->m = Mat::Zero(p->value.rows(), p->value.cols());
      p->v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    p->m = cfg_.beta1 * p->m + (1.0 - cfg_.beta1) * g;
    p->v = cfg_.beta2 * p->v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p->value.array() -=
        cfg_.lr * (p->m.array() / bc1) / ((p->v.array() / bc2).sqrt() + cfg_.eps);
  }
}

Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

Mat zeros(Eigen::Index rows, Eigen::Index cols) { return Mat::Zero(rows, cols); }

Mat randn(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

}  // namespace ihid::nn
