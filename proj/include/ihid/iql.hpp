#pragma once

#include <cstdint>
#include <vector>

#include "ihid/common.hpp"
#include "ihid/graph.hpp"
#include "ihid/nn.hpp"

namespace ihid {

enum class QBackend { tabular, mlp };

struct IqlConfig {
  QBackend backend = QBackend::tabular;
  double gamma_d = 0.99;      // MDP discount (distinct from the detection threshold)
  double alpha_reg = 0.5;     // chi-squared regularizer weight
  double lr = 1e-3;
  int epochs = 120;
  int batch_size = 128;
  int embed_dim = 30;         // mlp backend: learned node-embedding width
  int hidden_dim = 64;        // mlp backend: width of the two hidden layers
  double plateau_tol = 1e-5;  // stop when relative improvement drops below; 0 disables
  int plateau_window = 10;
  std::uint64_t seed = 0;
};

// Expert transitions under deterministic subgoal dynamics: next_state equals
// action; is_terminal marks transitions into an absorbing final destination.
struct TransitionBatch {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<int> next_states;
  std::vector<char> is_terminal;
  std::vector<int> initial_states;  // first subgoals of the expert sequences
};

// Scorer over node pairs. Two backends share one forward path (built on the
// tape) so training and read-only scoring cannot diverge:
//   tabular — a |V| x |V| matrix, used for closed-form and gradient oracles;
//   mlp     — two relu hidden layers over concatenated learned id embeddings.
class QFunction {
public:
  QFunction() = default;
  static QFunction make_tabular(int n_nodes);
  static QFunction make_mlp(int n_nodes, int embed_dim, int hidden_dim, std::uint64_t seed);

  QBackend backend() const { return backend_; }
  int n_nodes() const { return n_nodes_; }
  int embed_dim() const { return embed_dim_; }
  int hidden_dim() const { return hidden_dim_; }

  // Q(states[k], actions[k]) as a k x 1 tape value.
  nn::Var pair_scores(nn::Tape& t, const std::vector<int>& states,
                      const std::vector<int>& actions) const;
  // Soft state value log sum_a exp Q(s, a) over the full node set, k x 1.
  nn::Var state_values(nn::Tape& t, const std::vector<int>& states) const;

  double score(int s, int a) const;
  std::vector<double> scores(int s, const std::vector<int>& actions) const;

  // Mutable access for the optimizer and checkpointing; binding parameters to
  // a tape copies their values, so concurrent read-only scoring stays safe.
  std::vector<nn::Param>& params() const { return params_; }

private:
  QBackend backend_ = QBackend::tabular;
  int n_nodes_ = 0;
  int embed_dim_ = 0;
  int hidden_dim_ = 0;
  mutable std::vector<nn::Param> params_;

  nn::Var mlp_forward(nn::Tape& t, nn::Var x) const;
  void check_ids(const std::vector<int>& ids) const;
};

// Numerically stable log sum_a exp Q(s, a) over an explicit action set.
double soft_value(const QFunction& q, int s, const std::vector<int>& action_set);

// The training objective as a tape value (1 x 1), to minimize:
//   -( mean phi(r_hat) - (1 - gamma_d) * mean V(s0) )
// with r_hat = Q(s,a) - gamma_d * V(next) (V := 0 at terminal transitions) and
// phi(x) = x - x^2 / (4 * alpha_reg).
nn::Var iql_loss_node(nn::Tape& t, const QFunction& q, const TransitionBatch& batch,
                      const IqlConfig& cfg);
double iql_loss(const QFunction& q, const TransitionBatch& batch, const IqlConfig& cfg);

struct IqlTrainResult {
  QFunction q;
  std::vector<double> loss_curve;  // per-epoch mean of the minibatch losses
};

// Minibatch Adam on iql_loss over all consecutive pairs of the expert subgoal
// sequences. Deterministic given cfg.seed; stops at the epoch budget or when
// the loss plateaus. Transitions absent from the graph's edge set are errors.
IqlTrainResult train_iql(const std::vector<std::vector<int>>& subgoal_trajs,
                         const SubgoalGraph& graph, const IqlConfig& cfg);

// Q(g_i, g_next); throws std::invalid_argument on unknown node ids.
double score_transition(const QFunction& q, int g_i, int g_next);

}  // namespace ihid
