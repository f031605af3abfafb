#include "cdv/adam.hpp"

#include <cmath>

#include "cdv/error.hpp"

namespace cdv::nn {

void Adam::step(const ParamList& params) {
  for (const auto& p : params) {
    if (!p.value->same_shape(*p.grad)) {
      throw ShapeError("adam: parameter " + p.name + " is " + shape_string(*p.value) +
                       " but its gradient is " + shape_string(*p.grad));
    }
  }
  if (first_moment_.empty()) {
    for (const auto& p : params) {
      first_moment_.emplace_back(p.value->rows(), p.value->cols());
      second_moment_.emplace_back(p.value->rows(), p.value->cols());
    }
  } else if (first_moment_.size() != params.size()) {
    throw ShapeError("adam: state tracks " + std::to_string(first_moment_.size()) +
                     " parameters, step received " + std::to_string(params.size()));
  }

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor2& value = *params[k].value;
    const Tensor2& grad = *params[k].grad;
    if (!first_moment_[k].same_shape(value)) {
      throw ShapeError("adam: moment shape " + shape_string(first_moment_[k]) +
                       " does not match parameter " + params[k].name + " " +
                       shape_string(value));
    }
    auto w = value.values();
    auto g = grad.values();
    auto m = first_moment_[k].values();
    auto v = second_moment_[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      w[i] -= lr_ * config_.weight_decay * w[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= lr_ * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace cdv::nn
