#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Var is a node in a dynamically built graph. Operations record their
// parents and a closure that pushes the node's gradient back to them. Nodes
// that do not depend on any trainable value drop their parents immediately,
// so constants and detached values never carry a graph.

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ktts::nn {

using Matrix = Eigen::MatrixXd;

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<Var> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  bool is_parameter = false;
  std::string name;  // parameters only
  const char* op = "leaf";

  Matrix& grad_buffer() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }
  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
};

/// While alive, operations on this thread do not record graphs.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

Var constant(Matrix value);
Var scalar(double v);
/// Trainable leaf.
Var parameter(std::string name, Matrix value);
/// Same value, no history: gradients never flow through the result.
Var detach(const Var& x);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
/// Adds a 1 x n row (or a 1 x 1 scalar) to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var one_minus(const Var& a);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
/// Repeats a 1 x n row `times` times.
Var repeat_rows(const Var& row, Eigen::Index times);
/// Appends zero rows up to `rows` total.
Var pad_rows(const Var& a, Eigen::Index rows);

/// Row-wise softmax.
Var softmax_rows(const Var& a);
Var sum(const Var& a);

/// Sum of squared differences against a constant target (1 x 1).
Var squared_error_sum(const Var& pred, const Matrix& target);
/// Sum of |a - b| (1 x 1). The subgradient at zero is zero.
Var abs_error_sum(const Var& a, const Var& b);
/// Sum of positive-weighted binary cross-entropy on logits (1 x 1).
Var bce_with_logits_sum(const Var& logits, const Matrix& labels, double pos_weight);

/// Rows of `table` selected by `ids`; id == pad_id yields a zero row and no gradient.
Var embedding_lookup(const Var& table, const std::vector<int>& ids, int pad_id);

/// Time-axis im2col: row t holds x[t + k - pad_left] for k in [0, width),
/// zero outside the sequence. Output T x (width * C).
Var unfold_time(const Var& x, int width, int pad_left);

/// Spatial im2col for a (H*W) x C feature map stored row-major by (h, w).
/// Output (Ho*Wo) x (k*k*C) with Ho = (H + 2 pad - k) / stride + 1.
Var unfold_2d(const Var& x, Eigen::Index height, Eigen::Index width, int kernel, int stride, int pad);

/// Max over each frame and its successor (the last frame pairs with itself).
Var max_pool_time2(const Var& x);

/// Fused LSTM cell: gates (1 x 4H, order i f g o) and previous cell (1 x H)
/// to [h | c] (1 x 2H).
Var lstm_cell(const Var& gates, const Var& c_prev);

/// Fused GRU cell: input projection (1 x 3H), hidden projection (1 x 3H),
/// order r z n, and previous state; returns the new state.
Var gru_cell(const Var& x_proj, const Var& h_proj, const Var& h_prev);

/// One step of the stepwise monotonic recurrence:
/// next_i = prev_i (1 - p_i) + prev_{i-1} p_{i-1}.
Var monotonic_advance(const Var& alpha_prev, const Var& p);

/// Reverse pass from a 1 x 1 root. Gradients accumulate into every node that
/// requires them. Unless `retain_graph`, interior links are cut afterwards.
void backward(const Var& root, bool retain_graph = false);

/// Parameters reachable from `root` through recorded history.
std::vector<Var> reachable_parameters(const Var& root);

/// Throws NumericError(where) when the value holds NaN or infinity.
void check_finite(const Var& x, const std::string& where);

}  // namespace ktts::nn
