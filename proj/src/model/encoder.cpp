#include "mulsa/model/encoder.hpp"

#include <algorithm>

#include "mulsa/common/error.hpp"

namespace mulsa::model {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kVisual: return "V";
    case Modality::kAudio: return "A";
    case Modality::kTactile: return "T";
  }
  return "?";
}

Modality modality_from_string(std::string_view name) {
  if (name == "V" || name == "v" || name == "visual") return Modality::kVisual;
  if (name == "A" || name == "a" || name == "audio") return Modality::kAudio;
  if (name == "T" || name == "t" || name == "tactile") return Modality::kTactile;
  throw ConfigError("unknown modality: " + std::string(name));
}

std::vector<Modality> parse_modalities(std::string_view list) {
  bool on[kModalityCount] = {false, false, false};
  const bool compact = !list.empty() && list.find_first_not_of("VAT") == std::string_view::npos;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) on[static_cast<int>(modality_from_string(token))] = true;
    token.clear();
  };
  for (char c : list) {
    if (compact) {
      token = std::string(1, c);
      flush();
    } else if (c == '+' || c == ',' || c == ' ') {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();
  std::vector<Modality> out;
  for (int i = 0; i < kModalityCount; ++i) {
    if (on[i]) out.push_back(static_cast<Modality>(i));
  }
  if (out.empty()) throw ConfigError("at least one modality must be active");
  return out;
}

std::string modalities_to_string(const std::vector<Modality>& ms) {
  std::string s;
  for (Modality m : ms) {
    if (!s.empty()) s += "+";
    s += to_string(m);
  }
  return s;
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"topology", c.topology}, {"feature_dim", c.feature_dim},
       {"input_channels", c.input_channels}, {"height", c.height}, {"width", c.width}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.topology = j.at("topology").get<std::string>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.input_channels = j.at("input_channels").get<int>();
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
}

Encoder::Encoder(const EncoderConfig& config, nn::ParameterStore& store, const std::string& name)
    : config_(config), name_(name) {
  if (config.feature_dim <= 0) throw ConfigError("encoder feature_dim must be positive");
  int c = config.input_channels, h = config.height, w = config.width;
  auto conv = [&](const std::string& n, int out, int k, int s, int p) {
    nn::Conv2d layer(store, name + "." + n, c, out, k, s, p);
    h = layer.out_size(h);
    w = layer.out_size(w);
    c = out;
    stages_.emplace_back(std::move(layer));
  };
  auto block = [&](const std::string& n, int out, int s) {
    nn::ResidualBlock b(store, name + "." + n, c, out, s);
    h = b.out_size(h);
    w = b.out_size(w);
    c = out;
    stages_.emplace_back(std::move(b));
  };

  if (config.topology == "small") {
    // Images enter as 3x96x128 and spectrograms as 1x64x50; the patchify stem
    // is sized so both end near a 6x8 grid.
    const int stem = config.input_channels == 1 ? 2 : 4;
    conv("stem", 8, stem, stem, 0);
    stages_.emplace_back(Relu{});
    conv("conv2", 16, 3, 2, 1);
    stages_.emplace_back(Relu{});
    conv("conv3", 16, 3, 2, 1);
    stages_.emplace_back(Relu{});
    block("block", 16, 1);
    global_pool_ = false;
    has_head_ = true;
  } else if (config.topology == "paper_resnet18") {
    conv("conv1", 64, 7, 2, 3);
    stages_.emplace_back(Relu{});
    nn::MaxPool2d pool(3, 2, 1);
    h = pool.out_size(h);
    w = pool.out_size(w);
    stages_.emplace_back(pool);
    const int widths[4] = {64, 128, 256, 512};
    for (int l = 0; l < 4; ++l) {
      block("layer" + std::to_string(l + 1) + ".0", widths[l], l == 0 ? 1 : 2);
      block("layer" + std::to_string(l + 1) + ".1", widths[l], 1);
    }
    global_pool_ = true;
    has_head_ = config.feature_dim != 512;
  } else {
    throw ConfigError("unknown encoder topology: " + config.topology);
  }
  if (h <= 0 || w <= 0) throw ConfigError("encoder input too small for topology " + config.topology);
  out_channels_ = c;
  out_height_ = h;
  out_width_ = w;
  const int flat = global_pool_ ? c : c * h * w;
  if (has_head_) head_ = nn::Linear(store, name + ".head", flat, config.feature_dim);
}

void Encoder::init(Rng& rng) {
  for (auto& s : stages_) {
    if (auto* c = std::get_if<nn::Conv2d>(&s)) c->init(rng);
    if (auto* b = std::get_if<nn::ResidualBlock>(&s)) b->init(rng);
  }
  if (has_head_) head_.init_scaled(rng, 1.0 / std::sqrt(static_cast<double>(head_.in_features())));
}

nn::Matrix Encoder::forward(const nn::FeatureMap& x, Cache* cache) const {
  if (x.channels != config_.input_channels || x.height != config_.height || x.width != config_.width) {
    throw ShapeError(name_ + " expects " + std::to_string(config_.input_channels) + "x" +
                     std::to_string(config_.height) + "x" + std::to_string(config_.width) +
                     " input, got " + std::to_string(x.channels) + "x" + std::to_string(x.height) +
                     "x" + std::to_string(x.width));
  }
  if (cache) cache->stages.clear();
  nn::FeatureMap h = x;
  for (const auto& s : stages_) {
    if (const auto* c = std::get_if<nn::Conv2d>(&s)) {
      if (cache) {
        cache->stages.emplace_back(nn::Conv2d::Cache{});
        h = c->forward(h, &std::get<nn::Conv2d::Cache>(cache->stages.back()));
      } else {
        h = c->forward(h, nullptr);
      }
    } else if (const auto* p = std::get_if<nn::MaxPool2d>(&s)) {
      if (cache) {
        cache->stages.emplace_back(nn::MaxPool2d::Cache{});
        h = p->forward(h, &std::get<nn::MaxPool2d::Cache>(cache->stages.back()));
      } else {
        h = p->forward(h, nullptr);
      }
    } else if (const auto* b = std::get_if<nn::ResidualBlock>(&s)) {
      if (cache) {
        cache->stages.emplace_back(nn::ResidualBlock::Cache{});
        h = b->forward(h, &std::get<nn::ResidualBlock::Cache>(cache->stages.back()));
      } else {
        h = b->forward(h, nullptr);
      }
    } else {
      if (cache) {
        cache->stages.emplace_back(nn::ReluCache{});
        h = nn::relu_forward(std::move(h), &std::get<nn::ReluCache>(cache->stages.back()));
      } else {
        h = nn::relu_forward(std::move(h), nullptr);
      }
    }
  }
  if (cache) {
    cache->channels = h.channels;
    cache->height = h.height;
    cache->width = h.width;
  }
  nn::Matrix flat = global_pool_ ? nn::global_avg_pool(h, cache ? &cache->gap : nullptr) : nn::flatten(h);
  if (!has_head_) return flat;
  return head_.forward(flat, cache ? &cache->head : nullptr);
}

void Encoder::backward(const nn::Matrix& dy, Cache& cache) {
  nn::Matrix dflat = has_head_ ? head_.backward(dy, cache.head) : dy;
  nn::FeatureMap dh = global_pool_
                          ? nn::global_avg_pool_backward(dflat, cache.channels, cache.gap)
                          : nn::unflatten(dflat, cache.channels, cache.height, cache.width);
  for (std::size_t i = stages_.size(); i-- > 0;) {
    auto& s = stages_[i];
    auto& sc = cache.stages[i];
    if (auto* c = std::get_if<nn::Conv2d>(&s)) {
      dh = c->backward(dh, std::get<nn::Conv2d::Cache>(sc), i != 0);
    } else if (auto* p = std::get_if<nn::MaxPool2d>(&s)) {
      dh = p->backward(dh, std::get<nn::MaxPool2d::Cache>(sc));
    } else if (auto* b = std::get_if<nn::ResidualBlock>(&s)) {
      dh = b->backward(dh, std::get<nn::ResidualBlock::Cache>(sc));
    } else {
      dh = nn::relu_backward(std::move(dh), std::get<nn::ReluCache>(sc));
    }
  }
}

}  // namespace mulsa::model
