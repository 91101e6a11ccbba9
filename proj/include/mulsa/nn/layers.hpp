#pragma once

#include <string>
#include <vector>

#include "mulsa/nn/tensor.hpp"

namespace mulsa::nn {

// Every layer exposes forward(x, cache) and backward(dy, cache). A null cache
// means inference only; backward accumulates into Parameter::grad and returns
// the gradient with respect to the layer input.

class Conv2d {
 public:
  struct Cache {
    Matrix cols;
    int batch = 0, height = 0, width = 0;
  };

  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
         int kernel, int stride, int padding);

  void init(Rng& rng);
  FeatureMap forward(const FeatureMap& x, Cache* cache) const;
  // Returns an empty map when want_input_grad is false.
  FeatureMap backward(const FeatureMap& dy, const Cache& cache, bool want_input_grad = true);

  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Parameter& weight() { return *weight_; }
  Parameter& bias() { return *bias_; }

 private:
  Parameter* weight_ = nullptr;  // out x (in*k*k)
  Parameter* bias_ = nullptr;    // out x 1
  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, padding_ = 0;
};

// In-place-style elementwise ReLU on feature maps and row matrices.
struct ReluCache {
  Matrix output;
};
FeatureMap relu_forward(FeatureMap x, ReluCache* cache);
FeatureMap relu_backward(FeatureMap dy, const ReluCache& cache);
Matrix relu_forward(Matrix x, ReluCache* cache);
Matrix relu_backward(Matrix dy, const ReluCache& cache);

class MaxPool2d {
 public:
  struct Cache {
    std::vector<int> argmax;
    int batch = 0, height = 0, width = 0;
  };
  MaxPool2d(int kernel = 3, int stride = 2, int padding = 1)
      : kernel_(kernel), stride_(stride), padding_(padding) {}
  FeatureMap forward(const FeatureMap& x, Cache* cache) const;
  FeatureMap backward(const FeatureMap& dy, const Cache& cache) const;
  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }

 private:
  int kernel_, stride_, padding_;
};

// Basic residual block: relu(conv3x3(relu(conv3x3(x))) + shortcut(x)).
class ResidualBlock {
 public:
  struct Cache {
    Conv2d::Cache c1, c2, proj;
    ReluCache r1, r2;
  };
  ResidualBlock() = default;
  ResidualBlock(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
                int stride);
  void init(Rng& rng);
  FeatureMap forward(const FeatureMap& x, Cache* cache) const;
  FeatureMap backward(const FeatureMap& dy, const Cache& cache);
  int out_size(int in) const { return conv1_.out_size(in); }
  int out_channels() const { return conv2_.out_channels(); }

 private:
  Conv2d conv1_, conv2_, proj_;
  bool has_proj_ = false;
};

// Mean over spatial positions: [channels, b*h*w] -> [batch, channels].
struct GapCache {
  int height = 0, width = 0;
};
Matrix global_avg_pool(const FeatureMap& x, GapCache* cache);
FeatureMap global_avg_pool_backward(const Matrix& dy, int channels, const GapCache& cache);

// y = x W + b with x: [rows, in], W: [in, out].
class Linear {
 public:
  struct Cache {
    Matrix input;
  };
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in_features, int out_features);
  void init(Rng& rng);                  // He-normal
  void init_scaled(Rng& rng, double s);  // normal with the given std, zero bias
  Matrix forward(const Matrix& x, Cache* cache) const;
  Matrix backward(const Matrix& dy, const Cache& cache, bool want_input_grad = true);
  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Parameter& weight() { return *weight_; }
  Parameter& bias() { return *bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  int in_ = 0, out_ = 0;
};

// Normalizes each row over its columns.
class LayerNorm {
 public:
  struct Cache {
    Matrix xhat;
    Eigen::VectorXf inv_std;
  };
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int dim, float eps = 1e-5f);
  void init();
  Matrix forward(const Matrix& x, Cache* cache) const;
  Matrix backward(const Matrix& dy, const Cache& cache);

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
  int dim_ = 0;
  float eps_ = 1e-5f;
};

// Scaled dot-product multi-head self-attention over groups of `tokens`
// consecutive rows (one group per sample).
class MultiHeadAttention {
 public:
  struct Cache {
    Matrix input, q, k, v, heads_out;
    std::vector<Matrix> weights;  // [sample * heads + head], tokens x tokens
  };
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, int dim, int heads);
  void init(Rng& rng);
  // If weights_out is non-null it receives the per-sample, per-head attention
  // matrices (same layout as Cache::weights).
  Matrix forward(const Matrix& x, int tokens, Cache* cache,
                 std::vector<Matrix>* weights_out = nullptr) const;
  Matrix backward(const Matrix& dy, int tokens, const Cache& cache);
  int heads() const { return heads_; }
  int dim() const { return dim_; }

  Linear& query() { return wq_; }
  Linear& key() { return wk_; }
  Linear& value() { return wv_; }
  Linear& output() { return wo_; }

 private:
  Linear wq_, wk_, wv_, wo_;
  int dim_ = 0, heads_ = 1;
};

// Post-norm transformer encoder layer:
//   h = LN1(x + MHA(x)); y = LN2(h + W2 relu(W1 h)).
class TransformerLayer {
 public:
  struct Cache {
    MultiHeadAttention::Cache attn;
    LayerNorm::Cache ln1, ln2;
    Linear::Cache ff1, ff2;
    ReluCache relu;
  };
  TransformerLayer() = default;
  TransformerLayer(ParameterStore& store, const std::string& name, int dim, int heads,
                   int ff_dim);
  void init(Rng& rng);
  Matrix forward(const Matrix& x, int tokens, Cache* cache,
                 std::vector<Matrix>* weights_out = nullptr) const;
  Matrix backward(const Matrix& dy, int tokens, const Cache& cache);

  MultiHeadAttention& attention() { return attn_; }

 private:
  MultiHeadAttention attn_;
  LayerNorm ln1_, ln2_;
  Linear ff1_, ff2_;
};

// Single-layer LSTM unrolled over a sequence of [batch, in] inputs.
class Lstm {
 public:
  struct Step {
    Matrix x, h_prev, c_prev, i, f, g, o, c, tanh_c;
  };
  struct Cache {
    std::vector<Step> steps;
  };
  Lstm() = default;
  Lstm(ParameterStore& store, const std::string& name, int in_features, int hidden);
  void init(Rng& rng);
  // Returns all hidden states h_1..h_T.
  std::vector<Matrix> forward(const std::vector<Matrix>& xs, Cache* cache) const;
  // dh_last is the gradient of the final hidden state; returns per-step input gradients.
  std::vector<Matrix> backward(const Matrix& dh_last, const Cache& cache);
  int hidden() const { return hidden_; }

 private:
  Parameter* wx_ = nullptr;  // in x 4H, gate order i f g o
  Parameter* wh_ = nullptr;  // H x 4H
  Parameter* b_ = nullptr;   // 1 x 4H
  int in_ = 0, hidden_ = 0;
};

// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

// Mean softmax cross-entropy; fills dlogits (same shape) if non-null.
double cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* dlogits);

// Argmax with ties resolved to the lowest index.
int argmax(const float* values, int n);

}  // namespace mulsa::nn
