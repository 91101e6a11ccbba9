#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mulsa/model/encoder.hpp"
#include "mulsa/sensordata/action.hpp"

namespace mulsa::model {

enum class FusionVariant { kMulsa, kDirectConcat, kRecurrent };
std::string to_string(FusionVariant v);
FusionVariant fusion_variant_from_string(std::string_view name);

struct FusionConfig {
  FusionVariant variant = FusionVariant::kMulsa;
  std::vector<Modality> modalities{Modality::kVisual, Modality::kAudio, Modality::kTactile};
  int slots = 6;
  int feature_dim = 64;
  int layers = 1;
  int heads = 8;
  int ff_dim = 256;
  std::vector<int> mlp_hidden{128, 64};
  bool use_positional_embeddings = true;
  int class_count = 27;
  int recurrent_hidden = 64;

  int head_dim() const { return feature_dim / heads; }
  int token_count() const { return static_cast<int>(modalities.size()) * slots; }
  bool has(Modality m) const;
  // Position of a modality within the active list, or -1.
  int index_of(Modality m) const;
  void validate() const;
  bool operator==(const FusionConfig&) const = default;
};
void to_json(nlohmann::json& j, const FusionConfig& c);
void from_json(const nlohmann::json& j, FusionConfig& c);

struct PolicyConfig {
  Task task = Task::kPacking;
  FusionConfig fusion;
  EncoderConfig visual{"small", 64, 3, 96, 128};
  EncoderConfig audio{"small", 64, 1, 64, 50};
  EncoderConfig tactile{"small", 64, 3, 96, 128};

  const EncoderConfig& encoder(Modality m) const;
  // Consistent defaults for a task, topology (small | paper_resnet18), variant
  // and modality subset.
  static PolicyConfig make(Task task, const std::string& topology = "small",
                           FusionVariant variant = FusionVariant::kMulsa,
                           std::vector<Modality> modalities = {Modality::kVisual, Modality::kAudio,
                                                               Modality::kTactile});
  bool operator==(const PolicyConfig&) const = default;
};
void to_json(nlohmann::json& j, const PolicyConfig& c);
void from_json(const nlohmann::json& j, PolicyConfig& c);

// Model input for a batch: images of each modality are stored sample-major,
// image index = sample * slots + slot. Inactive modalities may be left empty.
struct PolicyInput {
  int batch = 0;
  int slots = 0;
  std::array<nn::FeatureMap, kModalityCount> maps;

  nn::FeatureMap& operator[](Modality m) { return maps[static_cast<int>(m)]; }
  const nn::FeatureMap& operator[](Modality m) const { return maps[static_cast<int>(m)]; }
};

// Per-modality token features, [batch*slots, D] rows (sample-major).
using ModalityFeatures = std::array<nn::Matrix, kModalityCount>;

// Post-softmax attention weights for one sample.
struct AttentionTrace {
  int layers = 0;
  int heads = 0;
  int tokens = 0;
  std::vector<Modality> token_modality;
  std::vector<int> token_slot;
  std::vector<nn::Matrix> weights;  // [layer * heads + head], tokens x tokens

  bool empty() const { return weights.empty(); }
  const nn::Matrix& at(int layer, int head) const { return weights[static_cast<std::size_t>(layer) * heads + head]; }
};

// Per-modality share (V, A, T) of attention mass received by that modality's
// keys, averaged over layers, heads and query rows. Inactive modalities score 0.
std::array<double, kModalityCount> aggregate_modality_attention(const AttentionTrace& trace);

struct PolicyOutput {
  nn::Matrix logits;                  // [batch, classes]
  std::vector<int> actions;           // argmax, ties to the lowest index
  std::vector<AttentionTrace> traces;  // per sample; empty unless requested (mulsa only)
};

class Policy {
 public:
  struct Tape {
    int batch = 0;
    std::array<Encoder::Cache, kModalityCount> encoders;
    std::vector<nn::TransformerLayer::Cache> layers;
    nn::Lstm::Cache lstm;
    std::vector<nn::Linear::Cache> mlp;
    std::vector<nn::ReluCache> mlp_relu;
  };

  explicit Policy(PolicyConfig config);
  Policy(const Policy&) = delete;
  Policy& operator=(const Policy&) = delete;

  void init(std::uint64_t seed);

  const PolicyConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  PolicyOutput forward(const PolicyInput& input, Tape* tape = nullptr, bool with_trace = false) const;
  void backward(const nn::Matrix& dlogits, Tape& tape);

  // Individual stages.
  ModalityFeatures encode(const PolicyInput& input, Tape* tape) const;
  // [batch*token_count, D] in canonical order with learned embeddings added
  // (when enabled for the mulsa variant).
  nn::Matrix build_tokens(const ModalityFeatures& features, int batch) const;
  nn::Matrix self_attention(const nn::Matrix& tokens, Tape* tape,
                            std::vector<AttentionTrace>* traces) const;
  // MLP head on [batch, in] fused rows.
  nn::Matrix classify(const nn::Matrix& fused, Tape* tape) const;
  // Per-token modality and slot in canonical order.
  std::vector<Modality> token_modalities() const;
  std::vector<int> token_slots() const;

  Encoder& encoder(Modality m) { return *encoders_[static_cast<int>(m)]; }
  nn::TransformerLayer& transformer_layer(int i) { return layers_[static_cast<std::size_t>(i)]; }

 private:
  nn::Matrix fuse(const ModalityFeatures& features, int batch, Tape* tape,
                  std::vector<AttentionTrace>* traces) const;

  PolicyConfig config_;
  nn::ParameterStore store_;
  std::array<std::optional<Encoder>, kModalityCount> encoders_;
  nn::Parameter* modality_embedding_ = nullptr;
  nn::Parameter* time_embedding_ = nullptr;
  std::vector<nn::TransformerLayer> layers_;
  nn::Lstm lstm_;
  std::vector<nn::Linear> mlp_;
};

}  // namespace mulsa::model
