#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "mulsa/common/rng.hpp"

namespace mulsa::nn {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Batched feature maps stored channel-major: data is channels x (batch*height*width),
// column index = (b * height + y) * width + x.
struct FeatureMap {
  int channels = 0;
  int batch = 0;
  int height = 0;
  int width = 0;
  Matrix data;

  FeatureMap() = default;
  FeatureMap(int c, int b, int h, int w)
      : channels(c), batch(b), height(h), width(w),
        data(Matrix::Zero(c, static_cast<Eigen::Index>(b) * h * w)) {}

  int plane() const { return height * width; }
  bool same_shape(const FeatureMap& o) const {
    return channels == o.channels && batch == o.batch && height == o.height && width == o.width;
  }
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Owns all trainable tensors of a model under stable, unique names. References
// returned by add() stay valid for the store's lifetime.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, int rows, int cols);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

// Initializers.
void init_normal(Matrix& m, Rng& rng, double stddev);
void init_uniform(Matrix& m, Rng& rng, double bound);
// He-normal for a layer with the given fan-in.
void init_he(Matrix& m, Rng& rng, int fan_in);

// Converts between feature maps and per-sample rows ([batch, channels*h*w],
// channel-major within a row).
Matrix flatten(const FeatureMap& x);
FeatureMap unflatten(const Matrix& rows, int channels, int height, int width);

}  // namespace mulsa::nn
