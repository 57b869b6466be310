#include "gcs/adam.hpp"

#include <cmath>

#include "gcs/errors.hpp"

namespace gcs::ad {

void Adam::set_learning_rate(std::size_t param_index, double lr) {
  if (lr_override_.size() <= param_index) lr_override_.resize(param_index + 1);
  lr_override_[param_index] = lr;
}

void Adam::step(ParameterSet& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.values().rows(), p.value.values().cols()));
      v_.push_back(Matrix::Zero(p.value.values().rows(), p.value.values().cols()));
    }
  }
  if (m_.size() != params.size()) throw ShapeError("adam: parameter count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& w = params[i].value.values();
    const auto& g = params[i].grad.values();
    if (g.rows() != w.rows() || g.cols() != w.cols() || m_[i].rows() != w.rows() || m_[i].cols() != w.cols())
      throw ShapeError("adam: shape mismatch for parameter '" + params[i].name + "'");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double lr = i < lr_override_.size() && lr_override_[i] ? *lr_override_[i] : cfg_.learning_rate;
    auto& w = params[i].value.values();
    const auto& g = params[i].grad.values();
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
    w.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.epsilon);
  }
}

}  // namespace gcs::ad
