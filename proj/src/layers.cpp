#include "ktts/layers.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ktts/errors.hpp"

namespace ktts::nn {

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  have_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
  os.precision(17);
  os << spare_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  int spare_flag = 0;
  is >> engine_ >> spare_flag >> spare_;
  if (!is) throw CheckpointError("corrupt RNG state");
  have_spare_ = spare_flag != 0;
}

Var ParamStore::add(const std::string& name, Matrix init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
  Var p = parameter(name, std::move(init));
  index_[name] = params_.size();
  params_.push_back(p);
  return p;
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second];
}

std::vector<Var> ParamStore::with_prefix(const std::string& prefix) const {
  std::vector<Var> out;
  for (const auto& p : params_) {
    if (p->name.rfind(prefix, 0) == 0) out.push_back(p);
  }
  return out;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad = Matrix::Zero(p->rows(), p->cols());
}

Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-a, a);
  }
  return m;
}

Linear::Linear(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, double bias_init)
    : weight(ps.add(name + ".weight", glorot(in, out, rng))),
      bias(ps.add(name + ".bias", Matrix::Constant(1, out, bias_init))) {}

Conv1d::Conv1d(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index out, int w, Rng& rng)
    : weight(ps.add(name + ".weight", glorot(w * in, out, rng))), bias(ps.add(name + ".bias", Matrix::Zero(1, out))), width(w) {}

Var Conv1d::operator()(const Var& x) const {
  const int pad_left = (width - 1) / 2;
  return add_row(matmul(unfold_time(x, width, pad_left), weight), bias);
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, int k, int s, int p)
    : weight(ps.add(name + ".weight", glorot(k * k * in, out, rng))),
      bias(ps.add(name + ".bias", Matrix::Zero(1, out))),
      kernel(k),
      stride(s),
      pad(p) {}

Var Conv2d::operator()(const Var& x, Eigen::Index& height, Eigen::Index& width) const {
  Var cols = unfold_2d(x, height, width, kernel, stride, pad);
  height = out_size(height, kernel, stride, pad);
  width = out_size(width, kernel, stride, pad);
  return add_row(matmul(cols, weight), bias);
}

Lstm::Lstm(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index h, Rng& rng) : units(h) {
  w_input = ps.add(name + ".w_input", glorot(in, 4 * h, rng));
  w_hidden = ps.add(name + ".w_hidden", glorot(h, 4 * h, rng));
  Matrix b = Matrix::Zero(1, 4 * h);
  b.middleCols(h, h).setOnes();  // forget gate starts open
  bias = ps.add(name + ".bias", b);
}

Lstm::State Lstm::zero_state() const { return {constant(Matrix::Zero(1, units)), constant(Matrix::Zero(1, units))}; }

Lstm::State Lstm::step(const Var& x_proj, const State& prev) const {
  Var hc = lstm_cell(add(x_proj, matmul(prev.h, w_hidden)), prev.c);
  return {slice_cols(hc, 0, units), slice_cols(hc, units, units)};
}

Var Lstm::run(const Var& x, bool reverse) const {
  const Eigen::Index T = x->rows();
  Var proj = add_row(matmul(x, w_input), bias);
  std::vector<Var> outs(static_cast<std::size_t>(T));
  State s = zero_state();
  for (Eigen::Index k = 0; k < T; ++k) {
    const Eigen::Index t = reverse ? T - 1 - k : k;
    s = step(slice_rows(proj, t, 1), s);
    outs[static_cast<std::size_t>(t)] = s.h;
  }
  return concat_rows(outs);
}

Gru::Gru(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index h, Rng& rng) : units(h) {
  w_input = ps.add(name + ".w_input", glorot(in, 3 * h, rng));
  b_input = ps.add(name + ".b_input", Matrix::Zero(1, 3 * h));
  w_hidden = ps.add(name + ".w_hidden", glorot(h, 3 * h, rng));
  b_hidden = ps.add(name + ".b_hidden", Matrix::Zero(1, 3 * h));
}

Var Gru::final_state(const Var& x) const {
  Var proj = add_row(matmul(x, w_input), b_input);
  Var h = constant(Matrix::Zero(1, units));
  for (Eigen::Index t = 0; t < x->rows(); ++t) {
    Var hp = add_row(matmul(h, w_hidden), b_hidden);
    h = gru_cell(slice_rows(proj, t, 1), hp, h);
  }
  return h;
}

Highway::Highway(ParamStore& ps, const std::string& name, Eigen::Index dim, Rng& rng)
    : transform(ps, name + ".transform", dim, dim, rng), gate(ps, name + ".gate", dim, dim, rng, -1.0) {}

Var Highway::operator()(const Var& x) const {
  Var h = relu(transform(x));
  Var t = sigmoid(gate(x));
  return add(mul(h, t), mul(x, one_minus(t)));
}

}  // namespace ktts::nn
