#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ktts/model.hpp"

namespace ktts::training {

using nn::Matrix;
using nn::Var;

/// Piecewise-constant learning rate: (first iteration, rate) pairs with
/// strictly increasing iterations, the first at 0.
using LrSchedule = std::vector<std::pair<long, double>>;

inline LrSchedule default_lr_schedule() { return {{0, 1e-3}, {50000, 5e-4}, {100000, 3e-4}}; }

/// Rate of the last entry whose start is <= iteration; the final rate holds
/// forever. Throws ConfigError for an invalid schedule or negative iteration.
double lr_schedule(long iteration, const LrSchedule& schedule = default_lr_schedule());
void validate_schedule(const LrSchedule& schedule);

enum class GateLoss { BCE, MSE };

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 1e-6;
  double clip_norm = 1.0;
};

struct TrainConfig {
  int batch_size = 16;
  double lambda = 0.3;
  LrSchedule schedule = default_lr_schedule();
  double valid_fraction = 0.1;  // 9:1 split
  std::uint64_t seed = 1234;
  long max_iterations = 200000;
  long checkpoint_interval = 5000;
  GateLoss gate_loss = GateLoss::BCE;
  double gate_pos_weight = 5.0;
  AdamConfig adam;

  void validate() const;
};

struct LossBreakdown {
  double mel_pre = 0.0;
  double mel_post = 0.0;
  double gate = 0.0;
  double tpgst = 0.0;
  double total = 0.0;
};

struct LossGraph {
  Var mel_pre, mel_post, gate, tpgst, total;
  LossBreakdown values;
};

/// Stop labels for a clip of `frames` frames: zero except the final frame.
Matrix stop_labels(Eigen::Index frames);

/// total = mel_pre + mel_post + gate + lambda * tpgst. Mel terms are MSE over
/// every target element, the gate term is averaged per frame, and tpgst is the
/// mean absolute TAE/TPAE difference with the TAE detached, so the tpgst
/// term never reaches the reference encoder or style tokens. Throws
/// ShapeError on mismatched shapes and NumericError naming a non-finite term.
LossGraph compute_loss(const std::vector<model::DecodeOutput>& decodes, const std::vector<Matrix>& targets,
                       const std::vector<Matrix>& gate_targets, const std::vector<model::AcousticEmbedding>& tae,
                       const std::vector<model::AcousticEmbedding>& tpae, double lambda,
                       GateLoss gate_loss = GateLoss::BCE, double gate_pos_weight = 1.0);

/// Adam with L2 weight decay folded into the gradient and global
/// gradient-norm clipping.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Global L2 norm of every parameter gradient.
  static double gradient_norm(const nn::ParamStore& ps);
  /// Clips and applies one update. Returns the pre-clip norm.
  double step(nn::ParamStore& ps, double lr);

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  struct Moments {
    Matrix m;
    Matrix v;
  };
  const std::map<std::string, Moments>& state() const { return moments_; }
  void restore(long steps, std::map<std::string, Moments> moments) {
    t_ = steps;
    moments_ = std::move(moments);
  }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> moments_;
};

struct StepResult {
  long iteration = 0;  // iteration the step ran at
  double lr = 0.0;
  double grad_norm = 0.0;
  bool skipped = false;  // parameters untouched
  std::string skip_reason;
  LossBreakdown loss;
};

/// Owns the optimizer, the iteration counter and the RNG that drives
/// dropout, attention noise and batch order.
class Trainer {
 public:
  Trainer(model::Model& model, TrainConfig cfg);

  /// One optimizer update. A non-finite activation, loss term or gradient
  /// skips the update and is reported through StepResult; the iteration
  /// counter still advances.
  StepResult train_step(const std::vector<model::Example>& batch);

  /// Indices of the next batch, drawn epoch by epoch from a seeded shuffle.
  std::vector<std::size_t> next_batch(std::size_t dataset_size);

  long iteration() const { return iteration_; }
  void set_iteration(long it) { iteration_ = it; }
  nn::Rng& rng() { return rng_; }
  const nn::Rng& rng() const { return rng_; }
  Adam& optimizer() { return adam_; }
  const Adam& optimizer() const { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  model::Model& model() { return model_; }

  /// Batch-order state (epoch permutation and cursor) for checkpoints.
  std::string order_state() const;
  void set_order_state(const std::string& s);

 private:
  model::Model& model_;
  TrainConfig cfg_;
  Adam adam_;
  nn::Rng rng_;
  nn::Rng order_rng_;
  long iteration_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace ktts::training
