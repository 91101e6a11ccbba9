#include "mulsa/nn/adam.hpp"

#include <cmath>

namespace mulsa::nn {

Adam::Adam(ParameterStore& store, AdamConfig config) : params_(store.all()), config_(config) {
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

double Adam::step() {
  double sq = 0.0;
  for (const Parameter* p : params_) sq += p->grad.cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  float clip = 1.0f;
  if (config_.grad_clip > 0.0 && norm > config_.grad_clip) {
    clip = static_cast<float>(config_.grad_clip / norm);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const float lr = static_cast<float>(config_.learning_rate * std::sqrt(bc2) / bc1);
  const float b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
  const float eps = static_cast<float>(config_.epsilon * std::sqrt(bc2));
  const float wd = static_cast<float>(config_.weight_decay * config_.learning_rate);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    const auto g = p.grad.array() * clip;
    m_[i].array() = b1 * m_[i].array() + (1.0f - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (1.0f - b2) * g.square();
    if (wd != 0.0f) p.value.array() -= wd * p.value.array();
    p.value.array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
  }
  return norm;
}

}  // namespace mulsa::nn
