#include "mulsa/nn/tensor.hpp"

#include <cmath>

#include "mulsa/common/error.hpp"

namespace mulsa::nn {

Parameter& ParameterStore::add(const std::string& name, int rows, int cols) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.push_back({name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void init_normal(Matrix& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal() * stddev);
}

void init_uniform(Matrix& m, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
}

void init_he(Matrix& m, Rng& rng, int fan_in) { init_normal(m, rng, std::sqrt(2.0 / fan_in)); }

Matrix flatten(const FeatureMap& x) {
  const int plane = x.plane();
  Matrix out(x.batch, static_cast<Eigen::Index>(x.channels) * plane);
  for (int b = 0; b < x.batch; ++b) {
    for (int c = 0; c < x.channels; ++c) {
      out.row(b).segment(static_cast<Eigen::Index>(c) * plane, plane) =
          x.data.row(c).segment(static_cast<Eigen::Index>(b) * plane, plane);
    }
  }
  return out;
}

FeatureMap unflatten(const Matrix& rows, int channels, int height, int width) {
  const int plane = height * width;
  if (rows.cols() != static_cast<Eigen::Index>(channels) * plane) {
    throw ShapeError("unflatten: row width " + std::to_string(rows.cols()) + " != " +
                     std::to_string(channels * plane));
  }
  FeatureMap x(channels, static_cast<int>(rows.rows()), height, width);
  for (int b = 0; b < x.batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      x.data.row(c).segment(static_cast<Eigen::Index>(b) * plane, plane) =
          rows.row(b).segment(static_cast<Eigen::Index>(c) * plane, plane);
    }
  }
  return x;
}

}  // namespace mulsa::nn
