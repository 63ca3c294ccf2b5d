#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ktts/autodiff.hpp"

namespace ktts::nn {

/// Seeded generator with platform-independent uniform/normal draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t next() { return engine_(); }

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Ordered collection of named trainable tensors.
class ParamStore {
 public:
  Var add(const std::string& name, Matrix init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<Var>& all() const { return params_; }
  std::vector<Var> with_prefix(const std::string& prefix) const;
  std::size_t count() const;  // scalar parameter count
  void zero_grad();

 private:
  std::vector<Var> params_;
  std::map<std::string, std::size_t> index_;
};

Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, double bias_init = 0.0);
  Var operator()(const Var& x) const { return add_row(matmul(x, weight), bias); }
  Eigen::Index out_dim() const { return weight->cols(); }
};

/// Same-length 1-D convolution over time (rows).
struct Conv1d {
  Var weight;  // (width * in) x out
  Var bias;
  int width = 1;

  Conv1d() = default;
  Conv1d(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index out, int width, Rng& rng);
  Var operator()(const Var& x) const;
};

/// 2-D convolution over a (H*W) x C feature map.
struct Conv2d {
  Var weight;  // (k * k * in) x out
  Var bias;
  int kernel = 3;
  int stride = 2;
  int pad = 1;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, int kernel = 3,
         int stride = 2, int pad = 1);
  /// Returns the output map; updates height/width to the output grid.
  Var operator()(const Var& x, Eigen::Index& height, Eigen::Index& width) const;
  static Eigen::Index out_size(Eigen::Index n, int kernel, int stride, int pad) { return (n + 2 * pad - kernel) / stride + 1; }
};

struct Lstm {
  Var w_input;   // in x 4H
  Var w_hidden;  // H x 4H
  Var bias;      // 1 x 4H
  Eigen::Index units = 0;

  Lstm() = default;
  Lstm(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index units, Rng& rng);

  struct State {
    Var h;
    Var c;
  };
  State zero_state() const;
  /// One step on a precomputed input projection row (1 x 4H, bias included).
  State step(const Var& x_proj, const State& prev) const;
  State step_input(const Var& x, const State& prev) const { return step(add_row(matmul(x, w_input), bias), prev); }
  /// Runs over every row of x; returns T x H.
  Var run(const Var& x, bool reverse) const;
};

struct Gru {
  Var w_input;   // in x 3H
  Var b_input;   // 1 x 3H
  Var w_hidden;  // H x 3H
  Var b_hidden;  // 1 x 3H
  Eigen::Index units = 0;

  Gru() = default;
  Gru(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index units, Rng& rng);
  /// Final state after consuming every row of x (1 x H).
  Var final_state(const Var& x) const;
};

struct Highway {
  Linear transform;
  Linear gate;

  Highway() = default;
  Highway(ParamStore& ps, const std::string& name, Eigen::Index dim, Rng& rng);
  Var operator()(const Var& x) const;
};

}  // namespace ktts::nn
