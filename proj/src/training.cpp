#include "ktts/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ktts/errors.hpp"

namespace ktts::training {

using namespace ktts::nn;

void validate_schedule(const LrSchedule& schedule) {
  if (schedule.empty()) throw ConfigError("learning-rate schedule is empty");
  if (schedule.front().first != 0) throw ConfigError("learning-rate schedule must start at iteration 0");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i].second > 0.0)) throw ConfigError("learning rates must be positive");
    if (i > 0 && schedule[i].first <= schedule[i - 1].first) {
      throw ConfigError("learning-rate schedule iterations must be strictly increasing");
    }
  }
}

double lr_schedule(long iteration, const LrSchedule& schedule) {
  if (iteration < 0) throw ConfigError("iteration must be non-negative");
  validate_schedule(schedule);
  double lr = schedule.front().second;
  for (const auto& [start, rate] : schedule) {
    if (iteration >= start) lr = rate;
  }
  return lr;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch size must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be non-negative");
  validate_schedule(schedule);
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw ConfigError("train: valid fraction must lie in (0, 1)");
  if (max_iterations < 0 || checkpoint_interval < 1) throw ConfigError("train: bad iteration limits");
  if (!(gate_pos_weight > 0.0)) throw ConfigError("train: gate positive weight must be positive");
  if (!(adam.clip_norm > 0.0) || !(adam.eps > 0.0)) throw ConfigError("train: bad optimizer settings");
}

Matrix stop_labels(Eigen::Index frames) {
  Matrix m = Matrix::Zero(frames, 1);
  if (frames > 0) m(frames - 1, 0) = 1.0;
  return m;
}

LossGraph compute_loss(const std::vector<model::DecodeOutput>& decodes, const std::vector<Matrix>& targets,
                       const std::vector<Matrix>& gate_targets, const std::vector<model::AcousticEmbedding>& tae,
                       const std::vector<model::AcousticEmbedding>& tpae, double lambda, GateLoss gate_loss,
                       double gate_pos_weight) {
  const std::size_t B = decodes.size();
  if (B == 0) throw ShapeError("compute_loss: empty batch");
  if (targets.size() != B || gate_targets.size() != B || tae.size() != B || tpae.size() != B) {
    throw ShapeError("compute_loss: batch size mismatch");
  }
  std::vector<Var> pre_terms, post_terms, gate_terms, tp_terms;
  double mel_elements = 0.0, gate_elements = 0.0, emb_elements = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto& d = decodes[b];
    if (d.mel_pre->rows() != targets[b].rows() || d.mel_pre->cols() != targets[b].cols()) {
      throw ShapeError("compute_loss: decoder output and target mel differ in shape for item " + std::to_string(b));
    }
    if (d.gate_logits->rows() != gate_targets[b].rows() || d.gate_logits->cols() != gate_targets[b].cols()) {
      throw ShapeError("compute_loss: gate logits and stop labels differ in shape for item " + std::to_string(b));
    }
    if (tae[b].vector->cols() != tpae[b].vector->cols()) throw ShapeError("compute_loss: TAE and TPAE dimensions differ");
    pre_terms.push_back(squared_error_sum(d.mel_pre, targets[b]));
    post_terms.push_back(squared_error_sum(d.mel_post, targets[b]));
    if (gate_loss == GateLoss::BCE) {
      gate_terms.push_back(bce_with_logits_sum(d.gate_logits, gate_targets[b], gate_pos_weight));
    } else {
      gate_terms.push_back(squared_error_sum(sigmoid(d.gate_logits), gate_targets[b]));
    }
    // Stop-gradient: the TAE is a constant target for the TPAE.
    tp_terms.push_back(abs_error_sum(detach(tae[b].vector), tpae[b].vector));
    mel_elements += static_cast<double>(targets[b].size());
    gate_elements += static_cast<double>(gate_targets[b].size());
    emb_elements += static_cast<double>(tpae[b].vector->value.size());
  }
  auto total_of = [](const std::vector<Var>& v) { return sum(concat_rows(v)); };
  LossGraph g;
  g.mel_pre = scale(total_of(pre_terms), 1.0 / mel_elements);
  g.mel_post = scale(total_of(post_terms), 1.0 / mel_elements);
  g.gate = scale(total_of(gate_terms), 1.0 / gate_elements);
  g.tpgst = scale(total_of(tp_terms), 1.0 / emb_elements);
  check_finite(g.mel_pre, "loss.mel_pre");
  check_finite(g.mel_post, "loss.mel_post");
  check_finite(g.gate, "loss.gate");
  check_finite(g.tpgst, "loss.tpgst");
  g.total = add(add(add(g.mel_pre, g.mel_post), g.gate), scale(g.tpgst, lambda));
  check_finite(g.total, "loss.total");
  g.values = {g.mel_pre->value(0, 0), g.mel_post->value(0, 0), g.gate->value(0, 0), g.tpgst->value(0, 0),
              g.total->value(0, 0)};
  return g;
}

double Adam::gradient_norm(const ParamStore& ps) {
  double sq = 0.0;
  for (const auto& p : ps.all()) {
    if (p->grad.size() == p->value.size()) sq += p->grad.squaredNorm();
  }
  return std::sqrt(sq);
}

double Adam::step(ParamStore& ps, double lr) {
  const double norm = gradient_norm(ps);
  const double clip = norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& p : ps.all()) {
    if (p->grad.size() != p->value.size()) continue;
    Matrix g = p->grad * clip + cfg_.weight_decay * p->value;
    auto [it, inserted] = moments_.try_emplace(p->name);
    Moments& mo = it->second;
    if (inserted || mo.m.size() != g.size()) {
      mo.m = Matrix::Zero(g.rows(), g.cols());
      mo.v = Matrix::Zero(g.rows(), g.cols());
    }
    mo.m = cfg_.beta1 * mo.m + (1.0 - cfg_.beta1) * g;
    mo.v = cfg_.beta2 * mo.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p->value.array() -= lr * (mo.m.array() / bc1) / ((mo.v.array() / bc2).sqrt() + cfg_.eps);
  }
  return norm;
}

Trainer::Trainer(model::Model& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), adam_(cfg_.adam), rng_(cfg_.seed), order_rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL) {
  cfg_.validate();
}

StepResult Trainer::train_step(const std::vector<model::Example>& batch) {
  StepResult r;
  r.iteration = iteration_;
  r.lr = lr_schedule(iteration_, cfg_.schedule);
  model_.params().zero_grad();
  try {
    model::TrainForward fwd = model_.forward_train(batch, rng_);
    std::vector<Matrix> targets, gates;
    for (const auto& ex : batch) {
      targets.push_back(ex.mel);
      gates.push_back(stop_labels(ex.mel.rows()));
    }
    LossGraph loss =
        compute_loss(fwd.decodes, targets, gates, fwd.tae, fwd.tpae, cfg_.lambda, cfg_.gate_loss, cfg_.gate_pos_weight);
    r.loss = loss.values;
    backward(loss.total);
  } catch (const NumericError& e) {
    model_.params().zero_grad();
    r.skipped = true;
    r.skip_reason = e.what();
  }
  if (!r.skipped) {
    r.grad_norm = Adam::gradient_norm(model_.params());
    if (std::isfinite(r.grad_norm)) {
      adam_.step(model_.params(), r.lr);
    } else {
      r.skipped = true;
      r.skip_reason = "non-finite gradient norm";
    }
  }
  ++iteration_;
  return r;
}

std::vector<std::size_t> Trainer::next_batch(std::size_t n) {
  if (n == 0) throw DatasetError("cannot draw a batch from an empty dataset");
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(cfg_.batch_size), n);
  std::vector<std::size_t> out;
  while (out.size() < want) {
    if (order_.size() != n || cursor_ >= order_.size()) {
      order_.resize(n);
      std::iota(order_.begin(), order_.end(), 0);
      for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(order_rng_.next() % i);
        std::swap(order_[i - 1], order_[j]);
      }
      cursor_ = 0;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

std::string Trainer::order_state() const {
  std::ostringstream os;
  os << order_rng_.state() << '\n' << cursor_ << ' ' << order_.size();
  for (auto i : order_) os << ' ' << i;
  return os.str();
}

void Trainer::set_order_state(const std::string& s) {
  const auto nl = s.find('\n');
  if (nl == std::string::npos) throw CheckpointError("corrupt batch-order state");
  order_rng_.set_state(s.substr(0, nl));
  std::istringstream is(s.substr(nl + 1));
  std::size_t n = 0;
  is >> cursor_ >> n;
  order_.assign(n, 0);
  for (auto& i : order_) is >> i;
  if (!is) throw CheckpointError("corrupt batch-order state");
}

}  // namespace ktts::training
