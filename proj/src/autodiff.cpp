#include "ktts/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ktts/errors.hpp"

namespace ktts::nn {

namespace {

thread_local bool g_grad_enabled = true;

Var make(Matrix value, std::vector<Var> parents, std::function<void(Node&)> bw, const char* op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p && p->requires_grad; });
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward = std::move(bw);
    }
  }
  return n;
}

inline bool wants(const Var& p) { return p->requires_grad; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->rows() != b->rows() || a->cols() != b->cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a->rows()) + "x" + std::to_string(a->cols()) +
                     " vs " + std::to_string(b->rows()) + "x" + std::to_string(b->cols()));
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "constant";
  return n;
}

Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Var parameter(std::string name, Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->is_parameter = true;
  n->name = std::move(name);
  n->op = "parameter";
  return n;
}

Var detach(const Var& x) {
  auto n = constant(x->value);
  n->op = "detach";
  return n;
}

Var matmul(const Var& a, const Var& b) {
  if (a->cols() != b->rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a->cols()) + " and " + std::to_string(b->rows()));
  }
  return make(a->value * b->value, {a, b}, [](Node& self) {
    const Var& a = self.parents[0];
    const Var& b = self.parents[1];
    if (wants(a)) a->grad_buffer().noalias() += self.grad * b->value.transpose();
    if (wants(b)) b->grad_buffer().noalias() += a->value.transpose() * self.grad;
  }, "matmul");
}

Var transpose(const Var& a) {
  return make(a->value.transpose(), {a}, [](Node& self) {
    self.parents[0]->grad_buffer() += self.grad.transpose();
  }, "transpose");
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make(a->value + b->value, {a, b}, [](Node& self) {
    for (const Var& p : self.parents) {
      if (wants(p)) p->grad_buffer() += self.grad;
    }
  }, "add");
}

Var add_row(const Var& a, const Var& row) {
  if (row->rows() != 1 || (row->cols() != a->cols() && row->cols() != 1)) throw ShapeError("add_row: row shape mismatch");
  Matrix v = a->value;
  if (row->cols() == 1) {
    v.array() += row->value(0, 0);
  } else {
    v.rowwise() += row->value.row(0);
  }
  return make(std::move(v), {a, row}, [](Node& self) {
    const Var& a = self.parents[0];
    const Var& r = self.parents[1];
    if (wants(a)) a->grad_buffer() += self.grad;
    if (wants(r)) {
      if (r->cols() == 1) {
        r->grad_buffer()(0, 0) += self.grad.sum();
      } else {
        r->grad_buffer() += self.grad.colwise().sum();
      }
    }
  }, "add_row");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make(a->value - b->value, {a, b}, [](Node& self) {
    if (wants(self.parents[0])) self.parents[0]->grad_buffer() += self.grad;
    if (wants(self.parents[1])) self.parents[1]->grad_buffer() -= self.grad;
  }, "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make(a->value.cwiseProduct(b->value), {a, b}, [](Node& self) {
    const Var& a = self.parents[0];
    const Var& b = self.parents[1];
    if (wants(a)) a->grad_buffer() += self.grad.cwiseProduct(b->value);
    if (wants(b)) b->grad_buffer() += self.grad.cwiseProduct(a->value);
  }, "mul");
}

Var scale(const Var& a, double s) {
  return make(a->value * s, {a}, [s](Node& self) { self.parents[0]->grad_buffer() += self.grad * s; }, "scale");
}

Var one_minus(const Var& a) {
  return make((1.0 - a->value.array()).matrix(), {a}, [](Node& self) { self.parents[0]->grad_buffer() -= self.grad; },
              "one_minus");
}

Var tanh(const Var& a) {
  Matrix y = a->value.array().tanh().matrix();
  return make(y, {a}, [y](Node& self) {
    self.parents[0]->grad_buffer().array() += self.grad.array() * (1.0 - y.array().square());
  }, "tanh");
}

Var sigmoid(const Var& a) {
  Matrix y = a->value.unaryExpr([](double x) { return sigmoid_scalar(x); });
  return make(y, {a}, [y](Node& self) {
    self.parents[0]->grad_buffer().array() += self.grad.array() * y.array() * (1.0 - y.array());
  }, "sigmoid");
}

Var relu(const Var& a) {
  Matrix y = a->value.cwiseMax(0.0);
  return make(y, {a}, [](Node& self) {
    const Var& a = self.parents[0];
    a->grad_buffer().array() += (a->value.array() > 0.0).select(self.grad.array(), 0.0);
  }, "relu");
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0]->rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p->rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p->cols();
  }
  Matrix v(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p->cols()) = p->value;
    c += p->cols();
  }
  return make(std::move(v), parts, [](Node& self) {
    Eigen::Index c = 0;
    for (const Var& p : self.parents) {
      if (wants(p)) p->grad_buffer() += self.grad.middleCols(c, p->cols());
      c += p->cols();
    }
  }, "concat_cols");
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = parts[0]->cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p->cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p->rows();
  }
  Matrix v(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p->rows()) = p->value;
    r += p->rows();
  }
  return make(std::move(v), parts, [](Node& self) {
    Eigen::Index r = 0;
    for (const Var& p : self.parents) {
      if (wants(p)) p->grad_buffer() += self.grad.middleRows(r, p->rows());
      r += p->rows();
    }
  }, "concat_rows");
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a->rows()) throw ShapeError("slice_rows: out of range");
  return make(a->value.middleRows(start, count), {a}, [start, count](Node& self) {
    self.parents[0]->grad_buffer().middleRows(start, count) += self.grad;
  }, "slice_rows");
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a->cols()) throw ShapeError("slice_cols: out of range");
  return make(a->value.middleCols(start, count), {a}, [start, count](Node& self) {
    self.parents[0]->grad_buffer().middleCols(start, count) += self.grad;
  }, "slice_cols");
}

Var repeat_rows(const Var& row, Eigen::Index times) {
  if (row->rows() != 1) throw ShapeError("repeat_rows: expected a single row");
  return make(row->value.replicate(times, 1), {row}, [](Node& self) {
    self.parents[0]->grad_buffer() += self.grad.colwise().sum();
  }, "repeat_rows");
}

Var pad_rows(const Var& a, Eigen::Index rows) {
  if (rows < a->rows()) throw ShapeError("pad_rows: target smaller than input");
  if (rows == a->rows()) return a;
  Matrix v = Matrix::Zero(rows, a->cols());
  v.topRows(a->rows()) = a->value;
  return make(std::move(v), {a}, [](Node& self) {
    const Var& a = self.parents[0];
    a->grad_buffer() += self.grad.topRows(a->rows());
  }, "pad_rows");
}

Var softmax_rows(const Var& a) {
  Matrix y(a->rows(), a->cols());
  for (Eigen::Index r = 0; r < a->rows(); ++r) {
    const double m = a->value.row(r).maxCoeff();
    y.row(r) = (a->value.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return make(y, {a}, [y](Node& self) {
    Matrix& g = self.parents[0]->grad_buffer();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = self.grad.row(r).dot(y.row(r));
      g.row(r).array() += y.row(r).array() * (self.grad.row(r).array() - dot);
    }
  }, "softmax_rows");
}

Var sum(const Var& a) {
  return make(Matrix::Constant(1, 1, a->value.sum()), {a}, [](Node& self) {
    self.parents[0]->grad_buffer().array() += self.grad(0, 0);
  }, "sum");
}

Var squared_error_sum(const Var& pred, const Matrix& target) {
  if (pred->rows() != target.rows() || pred->cols() != target.cols()) throw ShapeError("squared_error_sum: shape mismatch");
  Matrix diff = pred->value - target;
  const double s = diff.squaredNorm();
  return make(Matrix::Constant(1, 1, s), {pred}, [diff](Node& self) {
    self.parents[0]->grad_buffer() += (2.0 * self.grad(0, 0)) * diff;
  }, "squared_error_sum");
}

Var abs_error_sum(const Var& a, const Var& b) {
  require_same_shape(a, b, "abs_error_sum");
  Matrix diff = a->value - b->value;
  const double s = diff.cwiseAbs().sum();
  Matrix sign = diff.unaryExpr([](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); });
  return make(Matrix::Constant(1, 1, s), {a, b}, [sign](Node& self) {
    const double g = self.grad(0, 0);
    if (wants(self.parents[0])) self.parents[0]->grad_buffer() += g * sign;
    if (wants(self.parents[1])) self.parents[1]->grad_buffer() -= g * sign;
  }, "abs_error_sum");
}

Var bce_with_logits_sum(const Var& logits, const Matrix& labels, double pos_weight) {
  if (logits->rows() != labels.rows() || logits->cols() != labels.cols()) throw ShapeError("bce_with_logits_sum: shape mismatch");
  double s = 0.0;
  Matrix d(labels.rows(), labels.cols());
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const double x = logits->value(i);
    const double y = labels(i);
    s += pos_weight * y * softplus(-x) + (1.0 - y) * softplus(x);
    const double sg = sigmoid_scalar(x);
    d(i) = pos_weight * y * (sg - 1.0) + (1.0 - y) * sg;
  }
  return make(Matrix::Constant(1, 1, s), {logits}, [d](Node& self) {
    self.parents[0]->grad_buffer() += self.grad(0, 0) * d;
  }, "bce_with_logits_sum");
}

Var embedding_lookup(const Var& table, const std::vector<int>& ids, int pad_id) {
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), table->cols());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const int id = ids[t];
    if (id < 0 || id >= table->rows()) {
      throw RangeError("embedding id " + std::to_string(id) + " outside [0, " + std::to_string(table->rows()) + ")");
    }
    if (id != pad_id) v.row(static_cast<Eigen::Index>(t)) = table->value.row(id);
  }
  return make(std::move(v), {table}, [ids, pad_id](Node& self) {
    Matrix& g = self.parents[0]->grad_buffer();
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (ids[t] != pad_id) g.row(ids[t]) += self.grad.row(static_cast<Eigen::Index>(t));
    }
  }, "embedding_lookup");
}

Var unfold_time(const Var& x, int width, int pad_left) {
  const Eigen::Index T = x->rows(), C = x->cols();
  Matrix v = Matrix::Zero(T, width * C);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int k = 0; k < width; ++k) {
      const Eigen::Index src = t + k - pad_left;
      if (src >= 0 && src < T) v.block(t, k * C, 1, C) = x->value.row(src);
    }
  }
  return make(std::move(v), {x}, [width, pad_left](Node& self) {
    Matrix& g = self.parents[0]->grad_buffer();
    const Eigen::Index T = g.rows(), C = g.cols();
    for (Eigen::Index t = 0; t < T; ++t) {
      for (int k = 0; k < width; ++k) {
        const Eigen::Index src = t + k - pad_left;
        if (src >= 0 && src < T) g.row(src) += self.grad.block(t, k * C, 1, C);
      }
    }
  }, "unfold_time");
}

Var unfold_2d(const Var& x, Eigen::Index height, Eigen::Index width, int kernel, int stride, int pad) {
  if (x->rows() != height * width) throw ShapeError("unfold_2d: rows do not match height*width");
  const Eigen::Index C = x->cols();
  const Eigen::Index ho = (height + 2 * pad - kernel) / stride + 1;
  const Eigen::Index wo = (width + 2 * pad - kernel) / stride + 1;
  Matrix v = Matrix::Zero(ho * wo, kernel * kernel * C);
  for (Eigen::Index oh = 0; oh < ho; ++oh) {
    for (Eigen::Index ow = 0; ow < wo; ++ow) {
      for (int kh = 0; kh < kernel; ++kh) {
        const Eigen::Index ih = oh * stride + kh - pad;
        if (ih < 0 || ih >= height) continue;
        for (int kw = 0; kw < kernel; ++kw) {
          const Eigen::Index iw = ow * stride + kw - pad;
          if (iw < 0 || iw >= width) continue;
          v.block(oh * wo + ow, (kh * kernel + kw) * C, 1, C) = x->value.row(ih * width + iw);
        }
      }
    }
  }
  return make(std::move(v), {x}, [=](Node& self) {
    Matrix& g = self.parents[0]->grad_buffer();
    for (Eigen::Index oh = 0; oh < ho; ++oh) {
      for (Eigen::Index ow = 0; ow < wo; ++ow) {
        for (int kh = 0; kh < kernel; ++kh) {
          const Eigen::Index ih = oh * stride + kh - pad;
          if (ih < 0 || ih >= height) continue;
          for (int kw = 0; kw < kernel; ++kw) {
            const Eigen::Index iw = ow * stride + kw - pad;
            if (iw < 0 || iw >= width) continue;
            g.row(ih * width + iw) += self.grad.block(oh * wo + ow, (kh * kernel + kw) * C, 1, C);
          }
        }
      }
    }
  }, "unfold_2d");
}

Var max_pool_time2(const Var& x) {
  const Eigen::Index T = x->rows(), C = x->cols();
  Matrix v(T, C);
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> src(T, C);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Index n = std::min(t + 1, T - 1);
    for (Eigen::Index c = 0; c < C; ++c) {
      const bool take_next = x->value(n, c) > x->value(t, c);
      src(t, c) = take_next ? n : t;
      v(t, c) = x->value(src(t, c), c);
    }
  }
  return make(std::move(v), {x}, [src](Node& self) {
    Matrix& g = self.parents[0]->grad_buffer();
    for (Eigen::Index t = 0; t < src.rows(); ++t) {
      for (Eigen::Index c = 0; c < src.cols(); ++c) g(src(t, c), c) += self.grad(t, c);
    }
  }, "max_pool_time2");
}

Var lstm_cell(const Var& gates, const Var& c_prev) {
  const Eigen::Index H = c_prev->cols();
  if (gates->rows() != 1 || c_prev->rows() != 1 || gates->cols() != 4 * H) throw ShapeError("lstm_cell: bad shapes");
  const Eigen::ArrayXXd pre = gates->value.array();
  auto sig = [](const Eigen::ArrayXXd& a) { return a.unaryExpr([](double x) { return sigmoid_scalar(x); }).eval(); };
  Eigen::ArrayXXd i = sig(pre.middleCols(0, H));
  Eigen::ArrayXXd f = sig(pre.middleCols(H, H));
  Eigen::ArrayXXd g = pre.middleCols(2 * H, H).tanh();
  Eigen::ArrayXXd o = sig(pre.middleCols(3 * H, H));
  Eigen::ArrayXXd c = f * c_prev->value.array() + i * g;
  Eigen::ArrayXXd tc = c.tanh();
  Matrix out(1, 2 * H);
  out.leftCols(H) = (o * tc).matrix();
  out.rightCols(H) = c.matrix();
  return make(std::move(out), {gates, c_prev}, [=](Node& self) {
    const Eigen::ArrayXXd gh = self.grad.leftCols(H).array();
    const Eigen::ArrayXXd gc = self.grad.rightCols(H).array();
    const Eigen::ArrayXXd dc = gc + gh * o * (1.0 - tc.square());
    const Var& gates_v = self.parents[0];
    const Var& cprev_v = self.parents[1];
    if (wants(gates_v)) {
      Matrix& gg = gates_v->grad_buffer();
      gg.middleCols(0, H).array() += dc * g * i * (1.0 - i);
      gg.middleCols(H, H).array() += dc * cprev_v->value.array() * f * (1.0 - f);
      gg.middleCols(2 * H, H).array() += dc * i * (1.0 - g.square());
      gg.middleCols(3 * H, H).array() += gh * tc * o * (1.0 - o);
    }
    if (wants(cprev_v)) cprev_v->grad_buffer().array() += dc * f;
  }, "lstm_cell");
}

Var gru_cell(const Var& x_proj, const Var& h_proj, const Var& h_prev) {
  const Eigen::Index H = h_prev->cols();
  if (x_proj->cols() != 3 * H || h_proj->cols() != 3 * H || x_proj->rows() != 1 || h_proj->rows() != 1 || h_prev->rows() != 1) {
    throw ShapeError("gru_cell: bad shapes");
  }
  const Eigen::ArrayXXd xp = x_proj->value.array();
  const Eigen::ArrayXXd hp = h_proj->value.array();
  auto sig = [](const Eigen::ArrayXXd& a) { return a.unaryExpr([](double x) { return sigmoid_scalar(x); }).eval(); };
  Eigen::ArrayXXd r = sig(xp.middleCols(0, H) + hp.middleCols(0, H));
  Eigen::ArrayXXd z = sig(xp.middleCols(H, H) + hp.middleCols(H, H));
  Eigen::ArrayXXd hn = hp.middleCols(2 * H, H);
  Eigen::ArrayXXd n = (xp.middleCols(2 * H, H) + r * hn).tanh();
  Eigen::ArrayXXd hprev = h_prev->value.array();
  Matrix out = ((1.0 - z) * n + z * hprev).matrix();
  return make(std::move(out), {x_proj, h_proj, h_prev}, [=](Node& self) {
    const Eigen::ArrayXXd g = self.grad.array();
    const Eigen::ArrayXXd dn_pre = g * (1.0 - z) * (1.0 - n.square());
    const Eigen::ArrayXXd dz_pre = g * (hprev - n) * z * (1.0 - z);
    const Eigen::ArrayXXd dr_pre = dn_pre * hn * r * (1.0 - r);
    if (wants(self.parents[0])) {
      Matrix& gx = self.parents[0]->grad_buffer();
      gx.middleCols(0, H).array() += dr_pre;
      gx.middleCols(H, H).array() += dz_pre;
      gx.middleCols(2 * H, H).array() += dn_pre;
    }
    if (wants(self.parents[1])) {
      Matrix& gh = self.parents[1]->grad_buffer();
      gh.middleCols(0, H).array() += dr_pre;
      gh.middleCols(H, H).array() += dz_pre;
      gh.middleCols(2 * H, H).array() += dn_pre * r;
    }
    if (wants(self.parents[2])) self.parents[2]->grad_buffer().array() += g * z;
  }, "gru_cell");
}

Var monotonic_advance(const Var& alpha_prev, const Var& p) {
  require_same_shape(alpha_prev, p, "monotonic_advance");
  if (alpha_prev->rows() != 1) throw ShapeError("monotonic_advance: expected row vectors");
  const Eigen::Index N = alpha_prev->cols();
  const auto& a = alpha_prev->value;
  const auto& q = p->value;
  Matrix next(1, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    next(0, i) = a(0, i) * (1.0 - q(0, i)) + (i > 0 ? a(0, i - 1) * q(0, i - 1) : 0.0);
  }
  return make(std::move(next), {alpha_prev, p}, [N](Node& self) {
    const Var& av = self.parents[0];
    const Var& pv = self.parents[1];
    const auto& a = av->value;
    const auto& q = pv->value;
    const auto& g = self.grad;
    if (wants(av)) {
      Matrix& ga = av->grad_buffer();
      for (Eigen::Index i = 0; i < N; ++i) ga(0, i) += g(0, i) * (1.0 - q(0, i)) + (i + 1 < N ? g(0, i + 1) * q(0, i) : 0.0);
    }
    if (wants(pv)) {
      Matrix& gp = pv->grad_buffer();
      for (Eigen::Index i = 0; i < N; ++i) gp(0, i) += a(0, i) * ((i + 1 < N ? g(0, i + 1) : 0.0) - g(0, i));
    }
  }, "monotonic_advance");
}

namespace {

std::vector<Node*> topological_order(const Var& root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace

void backward(const Var& root, bool retain_graph) {
  if (root->rows() != 1 || root->cols() != 1) throw ShapeError("backward: root must be 1x1");
  if (!root->requires_grad) return;
  const std::vector<Node*> order = topological_order(root);
  root->grad_buffer().array() += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() > 0) n->backward(*n);
  }
  if (!retain_graph) {
    for (Node* n : order) {
      if (n->is_parameter) continue;
      n->parents.clear();
      n->backward = nullptr;
      n->grad.resize(0, 0);
    }
  }
}

std::vector<Var> reachable_parameters(const Var& root) {
  std::vector<Var> out;
  std::unordered_set<Node*> seen;
  std::vector<Var> stack{root};
  seen.insert(root.get());
  while (!stack.empty()) {
    Var n = stack.back();
    stack.pop_back();
    if (n->is_parameter) out.push_back(n);
    for (const Var& p : n->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p);
    }
  }
  return out;
}

void check_finite(const Var& x, const std::string& where) {
  if (!x->value.allFinite()) throw NumericError(where);
}

}  // namespace ktts::nn
