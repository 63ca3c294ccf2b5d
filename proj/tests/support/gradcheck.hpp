#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ktts/autodiff.hpp"

namespace testutil {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]" of the worst entry
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `loss()` against central differences
/// for every entry of every tensor in `params` (or a strided subset when
/// `stride` > 1). `loss` must rebuild the graph on each call.
inline GradCheckResult grad_check(const std::function<ktts::nn::Var()>& loss, const std::vector<ktts::nn::Var>& params,
                                  double h = 1e-6, std::size_t stride = 1, double abs_floor = 1e-6) {
  using namespace ktts::nn;
  for (const auto& p : params) p->grad.resize(0, 0);
  backward(loss());
  std::vector<Matrix> analytic;
  for (const auto& p : params) {
    analytic.push_back(p->grad.size() == p->value.size() ? p->grad : Matrix::Zero(p->rows(), p->cols()));
  }
  GradCheckResult r;
  std::size_t counter = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& v = params[k]->value;
    for (Eigen::Index i = 0; i < v.size(); ++i, ++counter) {
      if (counter % stride != 0) continue;
      const double orig = v.data()[i];
      double plus, minus;
      {
        NoGradGuard g;
        v.data()[i] = orig + h;
        plus = loss()->value(0, 0);
        v.data()[i] = orig - h;
        minus = loss()->value(0, 0);
        v.data()[i] = orig;
      }
      const double numeric = (plus - minus) / (2 * h);
      const double a = analytic[k].data()[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), abs_floor});
      ++r.checked;
      if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst = (params[k]->name.empty() ? std::string("input") + std::to_string(k) : params[k]->name) + "[" +
                  std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace testutil
