#include "ihid/iql.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ihid {

using nn::Mat;
using nn::Tape;
using nn::Var;

QFunction QFunction::make_tabular(int n_nodes) {
  if (n_nodes < 1) throw std::invalid_argument("QFunction: need at least one node");
  QFunction q;
  q.backend_ = QBackend::tabular;
  q.n_nodes_ = n_nodes;
  q.params_.emplace_back("q_table", nn::zeros(n_nodes, n_nodes));
  return q;
}

QFunction QFunction::make_mlp(int n_nodes, int embed_dim, int hidden_dim, std::uint64_t seed) {
  if (n_nodes < 1) throw std::invalid_argument("QFunction: need at least one node");
  if (embed_dim < 1 || hidden_dim < 1)
    throw std::invalid_argument("QFunction: dims must be positive");
  QFunction q;
  q.backend_ = QBackend::mlp;
  q.n_nodes_ = n_nodes;
  q.embed_dim_ = embed_dim;
  q.hidden_dim_ = hidden_dim;
  Rng rng(derive_seed(seed, fnv1a64("q_mlp_init")));
  q.params_.emplace_back("embed", nn::glorot(n_nodes, embed_dim, rng));
  q.params_.emplace_back("w1", nn::glorot(2 * embed_dim, hidden_dim, rng));
  q.params_.emplace_back("b1", nn::zeros(1, hidden_dim));
  q.params_.emplace_back("w2", nn::glorot(hidden_dim, hidden_dim, rng));
  q.params_.emplace_back("b2", nn::zeros(1, hidden_dim));
  q.params_.emplace_back("w3", nn::glorot(hidden_dim, 1, rng));
  q.params_.emplace_back("b3", nn::zeros(1, 1));
  return q;
}

void QFunction::check_ids(const std::vector<int>& ids) const {
  for (int id : ids)
    if (id < 0 || id >= n_nodes_)
      throw std::invalid_argument("QFunction: node id " + std::to_string(id) +
                                  " out of range [0, " + std::to_string(n_nodes_) + ")");
}

Var QFunction::mlp_forward(Tape& t, Var x) const {
  Var w1 = nn::param(t, params_[1]), b1 = nn::param(t, params_[2]);
  Var w2 = nn::param(t, params_[3]), b2 = nn::param(t, params_[4]);
  Var w3 = nn::param(t, params_[5]), b3 = nn::param(t, params_[6]);
  Var h = nn::relu(nn::add_rowvec(nn::matmul(x, w1), b1));
  h = nn::relu(nn::add_rowvec(nn::matmul(h, w2), b2));
  return nn::add_rowvec(nn::matmul(h, w3), b3);
}

Var QFunction::pair_scores(Tape& t, const std::vector<int>& states,
                           const std::vector<int>& actions) const {
  if (states.size() != actions.size())
    throw std::invalid_argument("pair_scores: length mismatch");
  check_ids(states);
  check_ids(actions);
  if (backend_ == QBackend::tabular) {
    Var q = nn::param(t, params_[0]);
    std::vector<std::pair<int, int>> at;
    at.reserve(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) at.emplace_back(states[i], actions[i]);
    return nn::gather_elems(q, std::move(at));
  }
  Var emb = nn::param(t, params_[0]);
  Var x = nn::concat_cols({nn::gather_rows(emb, states), nn::gather_rows(emb, actions)});
  return mlp_forward(t, x);
}

Var QFunction::state_values(Tape& t, const std::vector<int>& states) const {
  check_ids(states);
  if (backend_ == QBackend::tabular) {
    Var q = nn::param(t, params_[0]);
    return nn::logsumexp_rows(nn::gather_rows(q, states));
  }
  // Q(s, a) for every action: one forward over the k*|V| stacked pairs,
  // reshaped to k x |V| before the row-wise log-sum-exp.
  std::vector<int> s_rep, a_rep;
  s_rep.reserve(states.size() * static_cast<std::size_t>(n_nodes_));
  a_rep.reserve(s_rep.capacity());
  for (int s : states)
    for (int a = 0; a < n_nodes_; ++a) {
      s_rep.push_back(s);
      a_rep.push_back(a);
    }
  Var flat = pair_scores(t, s_rep, a_rep);
  return nn::logsumexp_rows(
      nn::reshape_rows(flat, static_cast<Eigen::Index>(states.size()), n_nodes_));
}

double QFunction::score(int s, int a) const {
  Tape t;
  return pair_scores(t, {s}, {a}).val()(0, 0);
}

std::vector<double> QFunction::scores(int s, const std::vector<int>& actions) const {
  Tape t;
  const std::vector<int> states(actions.size(), s);
  const Mat& v = pair_scores(t, states, actions).val();
  std::vector<double> out(actions.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = v(static_cast<Eigen::Index>(i), 0);
  return out;
}

double soft_value(const QFunction& q, int s, const std::vector<int>& action_set) {
  if (action_set.empty()) throw std::invalid_argument("soft_value: empty action set");
  const auto vals = q.scores(s, action_set);
  const double m = *std::max_element(vals.begin(), vals.end());
  double sum = 0.0;
  for (double v : vals) sum += std::exp(v - m);
  return m + std::log(sum);
}

Var iql_loss_node(Tape& t, const QFunction& q, const TransitionBatch& batch,
                  const IqlConfig& cfg) {
  if (batch.states.empty()) throw std::invalid_argument("iql_loss: empty batch");
  if (batch.initial_states.empty())
    throw std::invalid_argument("iql_loss: no initial states");
  if (batch.states.size() != batch.actions.size() ||
      batch.states.size() != batch.next_states.size() ||
      batch.states.size() != batch.is_terminal.size())
    throw std::invalid_argument("iql_loss: ragged batch");

  const auto n = static_cast<Eigen::Index>(batch.states.size());
  Var q_sa = q.pair_scores(t, batch.states, batch.actions);
  Var v_next = q.state_values(t, batch.next_states);
  Mat mask(n, 1);
  for (Eigen::Index i = 0; i < n; ++i)
    mask(i, 0) = batch.is_terminal[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
  v_next = nn::cmul(v_next, nn::leaf(t, std::move(mask)));

  Var r_hat = nn::sub(q_sa, nn::scale(v_next, cfg.gamma_d));
  Var phi = nn::sub(r_hat, nn::scale(nn::cmul(r_hat, r_hat), 1.0 / (4.0 * cfg.alpha_reg)));
  Var expert_term = nn::mean_all(phi);
  Var v0_term = nn::mean_all(q.state_values(t, batch.initial_states));
  return nn::add(nn::scale(expert_term, -1.0), nn::scale(v0_term, 1.0 - cfg.gamma_d));
}

double iql_loss(const QFunction& q, const TransitionBatch& batch, const IqlConfig& cfg) {
  Tape t;
  return iql_loss_node(t, q, batch, cfg).val()(0, 0);
}

IqlTrainResult train_iql(const std::vector<std::vector<int>>& subgoal_trajs,
                         const SubgoalGraph& graph, const IqlConfig& cfg) {
  if (subgoal_trajs.empty()) throw std::invalid_argument("train_iql: no expert sequences");

  TransitionBatch all;
  for (const auto& seq : subgoal_trajs) {
    if (seq.size() < 2)
      throw std::invalid_argument("train_iql: expert sequence shorter than 2 subgoals");
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      const int s = seq[i], a = seq[i + 1];
      if (!graph.has_node(s) || !graph.has_node(a) || graph.edge_count(s, a) < 1)
        throw std::invalid_argument("train_iql: transition " + std::to_string(s) + "->" +
                                    std::to_string(a) + " is not a graph edge");
      all.states.push_back(s);
      all.actions.push_back(a);
      all.next_states.push_back(a);
      all.is_terminal.push_back(i + 2 == seq.size() ? 1 : 0);
    }
    all.initial_states.push_back(seq.front());
  }

  const int n_nodes = static_cast<int>(graph.nodes.size());
  IqlTrainResult res;
  res.q = cfg.backend == QBackend::tabular
              ? QFunction::make_tabular(n_nodes)
              : QFunction::make_mlp(n_nodes, cfg.embed_dim, cfg.hidden_dim, cfg.seed);

  nn::Adam opt({cfg.lr});
  Rng rng(derive_seed(cfg.seed, fnv1a64("iql_train")));
  std::vector<std::size_t> order(all.states.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t off = 0; off < order.size();
         off += static_cast<std::size_t>(cfg.batch_size)) {
      TransitionBatch b;
      const std::size_t hi =
          std::min(order.size(), off + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t k = off; k < hi; ++k) {
        const std::size_t i = order[k];
        b.states.push_back(all.states[i]);
        b.actions.push_back(all.actions[i]);
        b.next_states.push_back(all.next_states[i]);
        b.is_terminal.push_back(all.is_terminal[i]);
      }
      b.initial_states = all.initial_states;

      Tape t;
      Var loss = iql_loss_node(t, res.q, b, cfg);
      epoch_loss += loss.val()(0, 0);
      ++batches;
      t.backward(loss.idx);
      opt.step(t);
    }
    res.loss_curve.push_back(epoch_loss / std::max(1, batches));

    const int w = cfg.plateau_window;
    if (cfg.plateau_tol > 0.0 && static_cast<int>(res.loss_curve.size()) > w) {
      const double prev = res.loss_curve[res.loss_curve.size() - 1 - static_cast<std::size_t>(w)];
      const double now = res.loss_curve.back();
      if ((prev - now) / std::max(std::abs(prev), 1e-12) < cfg.plateau_tol) break;
    }
  }
  return res;
}

double score_transition(const QFunction& q, int g_i, int g_next) {
  if (g_i < 0 || g_i >= q.n_nodes() || g_next < 0 || g_next >= q.n_nodes())
    throw std::invalid_argument("score_transition: unknown node id");
  return q.score(g_i, g_next);
}

}  // namespace ihid
