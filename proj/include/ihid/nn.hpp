#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ihid/common.hpp"

namespace ihid::nn {

using Mat = Eigen::MatrixXd;

// Named trainable tensor with Adam moment state.
struct Param {
  std::string name;
  Mat value;
  Mat m, v;  // Adam first/second moments, lazily sized

  Param() = default;
  Param(std::string n, Mat val) : name(std::move(n)), value(std::move(val)) {}
};

// Define-by-run reverse-mode tape over dense matrices. Values are computed
// eagerly; backward() replays the recorded closures in reverse. A Tape is
// built per training step and cleared (or discarded) afterwards.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  struct Node {
    Mat val;
    Mat grad;                    // empty until touched by backward
    std::function<void()> back;  // empty for leaves
  };

  int add_node(Mat val, std::function<void()> back = {});
  const Mat& val(int i) const { return nodes_[static_cast<std::size_t>(i)].val; }
  Mat& grad(int i) { return nodes_[static_cast<std::size_t>(i)].grad; }
  void accum(int i, const Mat& g);
  bool touched(int i) const { return nodes_[static_cast<std::size_t>(i)].grad.size() != 0; }

  // Seeds d(loss)/d(loss) = 1 on a 1x1 node and runs the closures in reverse.
  void backward(int loss_node);

  // Binds a persistent parameter; repeated binds of the same Param return the
  // same node so gradients accumulate in one place.
  int bind(Param& p);
  const std::vector<std::pair<Param*, int>>& bound() const { return bound_; }

  std::size_t size() const { return nodes_.size(); }
  void clear();

private:
  std::vector<Node> nodes_;
  std::vector<std::pair<Param*, int>> bound_;
};

// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;

  const Mat& val() const { return tape->val(idx); }
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
};

Var leaf(Tape& t, Mat v);
Var param(Tape& t, Param& p);

Var matmul(Var a, Var b);
Var add(Var a, Var b);          // identical shapes
Var add_rowvec(Var a, Var b);   // b is 1 x cols, broadcast over rows
Var sub(Var a, Var b);
Var cmul(Var a, Var b);         // elementwise
Var scale(Var a, double s);
Var add_const(Var a, double c);
Var transpose(Var a);
Var relu(Var a);
Var gelu(Var a);                // exact erf form
Var tanh_act(Var a);
Var softmax_rows(Var a);
Var logsumexp_rows(Var a);      // n x c -> n x 1, shift-stabilized
Var layernorm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
Var mean_all(Var a);            // -> 1 x 1
Var sum_all(Var a);             // -> 1 x 1
Var mean_over_rows(Var a);      // n x c -> 1 x c
Var broadcast_rows(Var a, Eigen::Index n);  // 1 x c -> n x c
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, Eigen::Index first, Eigen::Index count);
Var reshape_rows(Var a, Eigen::Index r, Eigen::Index c);  // row-major order
Var gather_rows(Var a, std::vector<int> rows);
Var gather_elems(Var a, std::vector<std::pair<int, int>> at);  // -> k x 1
// Inverted dropout; rate 0 returns the input unchanged. Draws one mask.
Var dropout(Var a, double rate, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  // Applies one update to every param bound on the tape using its accumulated
  // gradient; params whose gradient was never touched are skipped.
  void step(Tape& tape);
  long steps() const { return t_; }

private:
  AdamConfig cfg_;
  long t_ = 0;
};

// Glorot-uniform init, limit sqrt(6 / (fan_in + fan_out)).
Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Mat zeros(Eigen::Index rows, Eigen::Index cols);

// Standard normal matrix.
Mat randn(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace ihid::nn
