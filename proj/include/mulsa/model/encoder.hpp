#pragma once

#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mulsa/nn/layers.hpp"

namespace mulsa::model {

// Canonical token order is V, A, T.
enum class Modality { kVisual = 0, kAudio = 1, kTactile = 2 };
inline constexpr int kModalityCount = 3;

std::string to_string(Modality m);  // "V", "A", "T"
Modality modality_from_string(std::string_view name);
// Parses "V+A+T", "VAT", "V,T" style lists; result is in canonical order.
std::vector<Modality> parse_modalities(std::string_view list);
std::string modalities_to_string(const std::vector<Modality>& ms);

struct EncoderConfig {
  std::string topology = "small";  // small | paper_resnet18
  int feature_dim = 64;
  int input_channels = 3;
  int height = 96;
  int width = 128;

  bool operator==(const EncoderConfig&) const = default;
};
void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// Per-slot convolutional feature extractor. Input is a batch of single-slot
// images; output is one D-dimensional row per image.
class Encoder {
 public:
  struct Relu {};
  struct Flatten {};
  using Stage = std::variant<nn::Conv2d, nn::MaxPool2d, nn::ResidualBlock, Relu>;
  using StageCache =
      std::variant<nn::Conv2d::Cache, nn::MaxPool2d::Cache, nn::ResidualBlock::Cache, nn::ReluCache>;
  struct Cache {
    std::vector<StageCache> stages;
    nn::GapCache gap;
    nn::Linear::Cache head;
    int channels = 0, height = 0, width = 0;
  };

  Encoder(const EncoderConfig& config, nn::ParameterStore& store, const std::string& name);

  void init(Rng& rng);
  nn::Matrix forward(const nn::FeatureMap& x, Cache* cache) const;
  void backward(const nn::Matrix& dy, Cache& cache);

  const EncoderConfig& config() const { return config_; }
  const std::string& name() const { return name_; }

 private:
  EncoderConfig config_;
  std::string name_;
  std::vector<Stage> stages_;
  bool global_pool_ = false;
  bool has_head_ = true;
  nn::Linear head_;
  int out_channels_ = 0, out_height_ = 0, out_width_ = 0;
};

}  // namespace mulsa::model
