#include "mulsa/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mulsa/common/error.hpp"

namespace mulsa::nn {
namespace {

void im2col(const FeatureMap& x, int k, int stride, int pad, int ho, int wo, Matrix& cols) {
  const int hw = x.plane();
  const Eigen::Index out_plane = static_cast<Eigen::Index>(ho) * wo;
  cols.resize(static_cast<Eigen::Index>(x.channels) * k * k, out_plane * x.batch);
  for (int c = 0; c < x.channels; ++c) {
    const float* src = x.data.row(c).data();
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        float* dst = cols.row((static_cast<Eigen::Index>(c) * k + ki) * k + kj).data();
        for (int b = 0; b < x.batch; ++b) {
          const float* plane = src + static_cast<std::size_t>(b) * hw;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * stride - pad + ki;
            if (ih < 0 || ih >= x.height) {
              std::fill(dst, dst + wo, 0.0f);
              dst += wo;
              continue;
            }
            const float* line = plane + static_cast<std::size_t>(ih) * x.width;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * stride - pad + kj;
              *dst++ = (iw >= 0 && iw < x.width) ? line[iw] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const Matrix& cols, int k, int stride, int pad, int ho, int wo, FeatureMap& dx) {
  const int hw = dx.plane();
  for (int c = 0; c < dx.channels; ++c) {
    float* dst = dx.data.row(c).data();
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const float* src = cols.row((static_cast<Eigen::Index>(c) * k + ki) * k + kj).data();
        for (int b = 0; b < dx.batch; ++b) {
          float* plane = dst + static_cast<std::size_t>(b) * hw;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * stride - pad + ki;
            if (ih < 0 || ih >= dx.height) {
              src += wo;
              continue;
            }
            float* line = plane + static_cast<std::size_t>(ih) * dx.width;
            for (int ow = 0; ow < wo; ++ow, ++src) {
              const int iw = ow * stride - pad + kj;
              if (iw >= 0 && iw < dx.width) line[iw] += *src;
            }
          }
        }
      }
    }
  }
}

float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
               int kernel, int stride, int padding)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), padding_(padding) {
  weight_ = &store.add(name + ".weight", out_channels, in_channels * kernel * kernel);
  bias_ = &store.add(name + ".bias", out_channels, 1);
}

void Conv2d::init(Rng& rng) {
  init_he(weight_->value, rng, in_ * kernel_ * kernel_);
  bias_->value.setZero();
}

FeatureMap Conv2d::forward(const FeatureMap& x, Cache* cache) const {
  if (x.channels != in_) {
    throw ShapeError("conv expects " + std::to_string(in_) + " input channels, got " +
                     std::to_string(x.channels));
  }
  const int ho = out_size(x.height), wo = out_size(x.width);
  if (ho <= 0 || wo <= 0) throw ShapeError("conv input too small");
  Matrix local;
  Matrix& cols = cache ? cache->cols : local;
  im2col(x, kernel_, stride_, padding_, ho, wo, cols);
  FeatureMap y;
  y.channels = out_;
  y.batch = x.batch;
  y.height = ho;
  y.width = wo;
  y.data.noalias() = weight_->value * cols;
  y.data.colwise() += bias_->value.col(0);
  if (cache) {
    cache->batch = x.batch;
    cache->height = x.height;
    cache->width = x.width;
  }
  return y;
}

FeatureMap Conv2d::backward(const FeatureMap& dy, const Cache& cache, bool want_input_grad) {
  weight_->grad.noalias() += dy.data * cache.cols.transpose();
  bias_->grad.col(0) += dy.data.rowwise().sum();
  if (!want_input_grad) return {};
  const Matrix dcols = weight_->value.transpose() * dy.data;
  FeatureMap dx(in_, cache.batch, cache.height, cache.width);
  col2im(dcols, kernel_, stride_, padding_, dy.height, dy.width, dx);
  return dx;
}

// ---------------------------------------------------------------- ReLU

FeatureMap relu_forward(FeatureMap x, ReluCache* cache) {
  x.data = x.data.cwiseMax(0.0f);
  if (cache) cache->output = x.data;
  return x;
}

FeatureMap relu_backward(FeatureMap dy, const ReluCache& cache) {
  dy.data = (cache.output.array() > 0.0f).select(dy.data, 0.0f);
  return dy;
}

Matrix relu_forward(Matrix x, ReluCache* cache) {
  x = x.cwiseMax(0.0f);
  if (cache) cache->output = x;
  return x;
}

Matrix relu_backward(Matrix dy, const ReluCache& cache) {
  return (cache.output.array() > 0.0f).select(dy, 0.0f);
}

// ---------------------------------------------------------------- MaxPool2d

FeatureMap MaxPool2d::forward(const FeatureMap& x, Cache* cache) const {
  const int ho = out_size(x.height), wo = out_size(x.width);
  FeatureMap y(x.channels, x.batch, ho, wo);
  if (cache) {
    cache->argmax.assign(static_cast<std::size_t>(y.data.size()), -1);
    cache->batch = x.batch;
    cache->height = x.height;
    cache->width = x.width;
  }
  for (int c = 0; c < x.channels; ++c) {
    for (int b = 0; b < x.batch; ++b) {
      for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow) {
          float best = -std::numeric_limits<float>::infinity();
          int best_idx = -1;
          for (int ki = 0; ki < kernel_; ++ki) {
            const int ih = oh * stride_ - padding_ + ki;
            if (ih < 0 || ih >= x.height) continue;
            for (int kj = 0; kj < kernel_; ++kj) {
              const int iw = ow * stride_ - padding_ + kj;
              if (iw < 0 || iw >= x.width) continue;
              const int idx = (b * x.height + ih) * x.width + iw;
              const float v = x.data(c, idx);
              if (v > best) {
                best = v;
                best_idx = idx;
              }
            }
          }
          const int o = (b * ho + oh) * wo + ow;
          y.data(c, o) = best;
          if (cache) cache->argmax[static_cast<std::size_t>(c) * y.data.cols() + o] = best_idx;
        }
      }
    }
  }
  return y;
}

FeatureMap MaxPool2d::backward(const FeatureMap& dy, const Cache& cache) const {
  FeatureMap dx(dy.channels, cache.batch, cache.height, cache.width);
  for (int c = 0; c < dy.channels; ++c) {
    for (Eigen::Index o = 0; o < dy.data.cols(); ++o) {
      const int idx = cache.argmax[static_cast<std::size_t>(c) * dy.data.cols() + o];
      if (idx >= 0) dx.data(c, idx) += dy.data(c, o);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ResidualBlock

ResidualBlock::ResidualBlock(ParameterStore& store, const std::string& name, int in_channels,
                             int out_channels, int stride)
    : conv1_(store, name + ".conv1", in_channels, out_channels, 3, stride, 1),
      conv2_(store, name + ".conv2", out_channels, out_channels, 3, 1, 1),
      has_proj_(stride != 1 || in_channels != out_channels) {
  if (has_proj_) proj_ = Conv2d(store, name + ".proj", in_channels, out_channels, 1, stride, 0);
}

void ResidualBlock::init(Rng& rng) {
  conv1_.init(rng);
  // No normalization layers, so the residual branch starts damped.
  conv2_.init(rng);
  conv2_.weight().value *= 0.5f;
  if (has_proj_) proj_.init(rng);
}

FeatureMap ResidualBlock::forward(const FeatureMap& x, Cache* cache) const {
  FeatureMap h = relu_forward(conv1_.forward(x, cache ? &cache->c1 : nullptr),
                              cache ? &cache->r1 : nullptr);
  FeatureMap z = conv2_.forward(h, cache ? &cache->c2 : nullptr);
  if (has_proj_) {
    z.data += proj_.forward(x, cache ? &cache->proj : nullptr).data;
  } else {
    z.data += x.data;
  }
  return relu_forward(std::move(z), cache ? &cache->r2 : nullptr);
}

FeatureMap ResidualBlock::backward(const FeatureMap& dy, const Cache& cache) {
  const FeatureMap dz = relu_backward(dy, cache.r2);
  FeatureMap dh = relu_backward(conv2_.backward(dz, cache.c2), cache.r1);
  FeatureMap dx = conv1_.backward(dh, cache.c1);
  if (has_proj_) {
    dx.data += proj_.backward(dz, cache.proj).data;
  } else {
    dx.data += dz.data;
  }
  return dx;
}

// ---------------------------------------------------------------- pooling

Matrix global_avg_pool(const FeatureMap& x, GapCache* cache) {
  const int plane = x.plane();
  Matrix y(x.batch, x.channels);
  for (int c = 0; c < x.channels; ++c) {
    for (int b = 0; b < x.batch; ++b) {
      y(b, c) = x.data.row(c).segment(static_cast<Eigen::Index>(b) * plane, plane).mean();
    }
  }
  if (cache) {
    cache->height = x.height;
    cache->width = x.width;
  }
  return y;
}

FeatureMap global_avg_pool_backward(const Matrix& dy, int channels, const GapCache& cache) {
  FeatureMap dx(channels, static_cast<int>(dy.rows()), cache.height, cache.width);
  const int plane = dx.plane();
  for (int c = 0; c < channels; ++c) {
    for (int b = 0; b < dx.batch; ++b) {
      dx.data.row(c).segment(static_cast<Eigen::Index>(b) * plane, plane).setConstant(dy(b, c) / plane);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(ParameterStore& store, const std::string& name, int in_features, int out_features)
    : in_(in_features), out_(out_features) {
  weight_ = &store.add(name + ".weight", in_features, out_features);
  bias_ = &store.add(name + ".bias", 1, out_features);
}

void Linear::init(Rng& rng) {
  init_he(weight_->value, rng, in_);
  bias_->value.setZero();
}

void Linear::init_scaled(Rng& rng, double s) {
  init_normal(weight_->value, rng, s);
  bias_->value.setZero();
}

Matrix Linear::forward(const Matrix& x, Cache* cache) const {
  if (x.cols() != in_) {
    throw ShapeError("linear expects " + std::to_string(in_) + " features, got " +
                     std::to_string(x.cols()));
  }
  Matrix y = x * weight_->value;
  y.rowwise() += bias_->value.row(0);
  if (cache) cache->input = x;
  return y;
}

Matrix Linear::backward(const Matrix& dy, const Cache& cache, bool want_input_grad) {
  weight_->grad.noalias() += cache.input.transpose() * dy;
  bias_->grad.row(0) += dy.colwise().sum();
  if (!want_input_grad) return {};
  return dy * weight_->value.transpose();
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int dim, float eps)
    : dim_(dim), eps_(eps) {
  gamma_ = &store.add(name + ".gamma", 1, dim);
  beta_ = &store.add(name + ".beta", 1, dim);
  init();
}

void LayerNorm::init() {
  gamma_->value.setOnes();
  beta_->value.setZero();
}

Matrix LayerNorm::forward(const Matrix& x, Cache* cache) const {
  const Eigen::Index rows = x.rows();
  Matrix xhat(rows, dim_);
  Eigen::VectorXf inv(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const float mean = x.row(r).mean();
    const float var = (x.row(r).array() - mean).square().mean();
    inv(r) = 1.0f / std::sqrt(var + eps_);
    xhat.row(r) = (x.row(r).array() - mean) * inv(r);
  }
  Matrix y = xhat.array().rowwise() * gamma_->value.row(0).array();
  y.rowwise() += beta_->value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

Matrix LayerNorm::backward(const Matrix& dy, const Cache& cache) {
  gamma_->grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  beta_->grad.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gamma_->value.row(0).array();
  Matrix dx(dy.rows(), dim_);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const float s1 = dxhat.row(r).sum();
    const float s2 = dxhat.row(r).dot(cache.xhat.row(r));
    dx.row(r) = (cache.inv_std(r) / dim_) *
                (dim_ * dxhat.row(r).array() - s1 - cache.xhat.row(r).array() * s2);
  }
  return dx;
}

// ---------------------------------------------------------------- attention

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, int dim,
                                       int heads)
    : wq_(store, name + ".q", dim, dim), wk_(store, name + ".k", dim, dim),
      wv_(store, name + ".v", dim, dim), wo_(store, name + ".o", dim, dim),
      dim_(dim), heads_(heads) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

void MultiHeadAttention::init(Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dim_));
  wq_.init_scaled(rng, s);
  wk_.init_scaled(rng, s);
  wv_.init_scaled(rng, s);
  wo_.init_scaled(rng, s);
}

Matrix MultiHeadAttention::forward(const Matrix& x, int tokens, Cache* cache,
                                   std::vector<Matrix>* weights_out) const {
  if (tokens <= 0 || x.rows() % tokens != 0) throw ShapeError("attention rows not a multiple of tokens");
  const int samples = static_cast<int>(x.rows() / tokens);
  const int hd = dim_ / heads_;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  Matrix q = wq_.forward(x, nullptr);
  Matrix k = wk_.forward(x, nullptr);
  Matrix v = wv_.forward(x, nullptr);
  Matrix heads_out(x.rows(), dim_);
  std::vector<Matrix> weights;
  const bool keep = cache != nullptr || weights_out != nullptr;
  if (keep) weights.reserve(static_cast<std::size_t>(samples) * heads_);
  for (int b = 0; b < samples; ++b) {
    for (int h = 0; h < heads_; ++h) {
      const auto qh = q.block(b * tokens, h * hd, tokens, hd);
      const auto kh = k.block(b * tokens, h * hd, tokens, hd);
      const auto vh = v.block(b * tokens, h * hd, tokens, hd);
      Matrix s = (qh * kh.transpose()) * scale;
      Matrix a = softmax_rows(s);
      heads_out.block(b * tokens, h * hd, tokens, hd).noalias() = a * vh;
      if (keep) weights.push_back(std::move(a));
    }
  }
  Matrix y = wo_.forward(heads_out, nullptr);
  if (weights_out) *weights_out = weights;
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->heads_out = std::move(heads_out);
    cache->weights = std::move(weights);
  }
  return y;
}

Matrix MultiHeadAttention::backward(const Matrix& dy, int tokens, const Cache& cache) {
  const int samples = static_cast<int>(dy.rows() / tokens);
  const int hd = dim_ / heads_;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  const Matrix dheads = wo_.backward(dy, Linear::Cache{cache.heads_out});
  Matrix dq(dy.rows(), dim_), dk(dy.rows(), dim_), dv(dy.rows(), dim_);
  for (int b = 0; b < samples; ++b) {
    for (int h = 0; h < heads_; ++h) {
      const Matrix& a = cache.weights[static_cast<std::size_t>(b) * heads_ + h];
      const auto qh = cache.q.block(b * tokens, h * hd, tokens, hd);
      const auto kh = cache.k.block(b * tokens, h * hd, tokens, hd);
      const auto vh = cache.v.block(b * tokens, h * hd, tokens, hd);
      const auto doh = dheads.block(b * tokens, h * hd, tokens, hd);
      const Matrix da = doh * vh.transpose();
      dv.block(b * tokens, h * hd, tokens, hd).noalias() = a.transpose() * doh;
      const Eigen::VectorXf row_dot = (da.array() * a.array()).rowwise().sum();
      Matrix ds = a.array() * (da.colwise() - row_dot).array();
      ds *= scale;
      dq.block(b * tokens, h * hd, tokens, hd).noalias() = ds * kh;
      dk.block(b * tokens, h * hd, tokens, hd).noalias() = ds.transpose() * qh;
    }
  }
  const Linear::Cache in{cache.input};
  Matrix dx = wq_.backward(dq, in);
  dx += wk_.backward(dk, in);
  dx += wv_.backward(dv, in);
  return dx;
}

// ---------------------------------------------------------------- transformer

TransformerLayer::TransformerLayer(ParameterStore& store, const std::string& name, int dim,
                                   int heads, int ff_dim)
    : attn_(store, name + ".attn", dim, heads), ln1_(store, name + ".ln1", dim),
      ln2_(store, name + ".ln2", dim), ff1_(store, name + ".ff1", dim, ff_dim),
      ff2_(store, name + ".ff2", ff_dim, dim) {}

void TransformerLayer::init(Rng& rng) {
  attn_.init(rng);
  ln1_.init();
  ln2_.init();
  ff1_.init(rng);
  ff2_.init_scaled(rng, 1.0 / std::sqrt(static_cast<double>(ff2_.in_features())));
}

Matrix TransformerLayer::forward(const Matrix& x, int tokens, Cache* cache,
                                 std::vector<Matrix>* weights_out) const {
  Matrix a = attn_.forward(x, tokens, cache ? &cache->attn : nullptr, weights_out);
  a += x;
  const Matrix h = ln1_.forward(a, cache ? &cache->ln1 : nullptr);
  Matrix f = ff2_.forward(relu_forward(ff1_.forward(h, cache ? &cache->ff1 : nullptr),
                                       cache ? &cache->relu : nullptr),
                          cache ? &cache->ff2 : nullptr);
  f += h;
  Matrix y = ln2_.forward(f, cache ? &cache->ln2 : nullptr);
  if (!y.allFinite()) throw NumericError("non-finite activations in transformer layer");
  return y;
}

Matrix TransformerLayer::backward(const Matrix& dy, int tokens, const Cache& cache) {
  const Matrix df = ln2_.backward(dy, cache.ln2);
  Matrix dh = ff1_.backward(relu_backward(ff2_.backward(df, cache.ff2), cache.relu), cache.ff1);
  dh += df;
  const Matrix da = ln1_.backward(dh, cache.ln1);
  Matrix dx = attn_.backward(da, tokens, cache.attn);
  dx += da;
  return dx;
}

// ---------------------------------------------------------------- LSTM

Lstm::Lstm(ParameterStore& store, const std::string& name, int in_features, int hidden)
    : in_(in_features), hidden_(hidden) {
  wx_ = &store.add(name + ".wx", in_features, 4 * hidden);
  wh_ = &store.add(name + ".wh", hidden, 4 * hidden);
  b_ = &store.add(name + ".bias", 1, 4 * hidden);
}

void Lstm::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  init_uniform(wx_->value, rng, bound);
  init_uniform(wh_->value, rng, bound);
  b_->value.setZero();
  b_->value.block(0, hidden_, 1, hidden_).setOnes();
}

std::vector<Matrix> Lstm::forward(const std::vector<Matrix>& xs, Cache* cache) const {
  if (xs.empty()) throw ShapeError("lstm over an empty sequence");
  const Eigen::Index batch = xs.front().rows();
  const int H = hidden_;
  Matrix h = Matrix::Zero(batch, H), c = Matrix::Zero(batch, H);
  std::vector<Matrix> out;
  if (cache) cache->steps.clear();
  for (const Matrix& x : xs) {
    if (x.cols() != in_) throw ShapeError("lstm input width mismatch");
    Matrix z = x * wx_->value;
    z.noalias() += h * wh_->value;
    z.rowwise() += b_->value.row(0);
    Step s;
    s.i = z.middleCols(0, H).unaryExpr(&sigmoid);
    s.f = z.middleCols(H, H).unaryExpr(&sigmoid);
    s.g = z.middleCols(2 * H, H).array().tanh().matrix();
    s.o = z.middleCols(3 * H, H).unaryExpr(&sigmoid);
    s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
    s.tanh_c = s.c.array().tanh().matrix();
    Matrix h_new = s.o.cwiseProduct(s.tanh_c);
    if (cache) {
      s.x = x;
      s.h_prev = h;
      s.c_prev = c;
    }
    c = s.c;
    h = h_new;
    out.push_back(h_new);
    if (cache) cache->steps.push_back(std::move(s));
  }
  return out;
}

std::vector<Matrix> Lstm::backward(const Matrix& dh_last, const Cache& cache) {
  const int H = hidden_;
  const std::size_t T = cache.steps.size();
  std::vector<Matrix> dxs(T);
  Matrix dh = dh_last;
  Matrix dc = Matrix::Zero(dh.rows(), H);
  for (std::size_t t = T; t-- > 0;) {
    const Step& s = cache.steps[t];
    const Matrix d_o = dh.cwiseProduct(s.tanh_c);
    dc += dh.cwiseProduct(s.o).cwiseProduct((1.0f - s.tanh_c.array().square()).matrix());
    const Matrix di = dc.cwiseProduct(s.g);
    const Matrix dg = dc.cwiseProduct(s.i);
    const Matrix df = dc.cwiseProduct(s.c_prev);
    Matrix dz(dh.rows(), 4 * H);
    dz.middleCols(0, H) = di.array() * s.i.array() * (1.0f - s.i.array());
    dz.middleCols(H, H) = df.array() * s.f.array() * (1.0f - s.f.array());
    dz.middleCols(2 * H, H) = dg.array() * (1.0f - s.g.array().square());
    dz.middleCols(3 * H, H) = d_o.array() * s.o.array() * (1.0f - s.o.array());
    wx_->grad.noalias() += s.x.transpose() * dz;
    wh_->grad.noalias() += s.h_prev.transpose() * dz;
    b_->grad.row(0) += dz.colwise().sum();
    dxs[t] = dz * wx_->value.transpose();
    dh = dz * wh_->value.transpose();
    dc = dc.cwiseProduct(s.f);
  }
  return dxs;
}

// ---------------------------------------------------------------- losses

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const float mx = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

double cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* dlogits) {
  const Eigen::Index n = logits.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("label count mismatch");
  double loss = 0.0;
  if (dlogits) dlogits->resize(n, logits.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const int y = labels[r];
    if (y < 0 || y >= logits.cols()) throw ShapeError("label out of range");
    double mx = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) sum += std::exp(logits(r, c) - mx);
    const double lse = mx + std::log(sum);
    loss += lse - logits(r, y);
    if (dlogits) {
      for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        (*dlogits)(r, c) = static_cast<float>(std::exp(logits(r, c) - lse) / n);
      }
      (*dlogits)(r, y) -= 1.0f / n;
    }
  }
  return loss / n;
}

int argmax(const float* values, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace mulsa::nn
