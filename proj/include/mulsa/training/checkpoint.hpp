#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mulsa/model/policy.hpp"
#include "mulsa/model/preprocess.hpp"

namespace mulsa::training {

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double val_loss = 0.0;      // NaN-free; zero when there is no validation split
  double val_accuracy = 0.0;
  bool operator==(const EpochMetrics&) const = default;
};
void to_json(nlohmann::json& j, const EpochMetrics& m);
void from_json(const nlohmann::json& j, EpochMetrics& m);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  model::PolicyConfig policy;
  nlohmann::json train_config = nlohmann::json::object();
  model::NormalizationStats stats;
  model::PreprocessConfig preprocess;
  long long step = 0;
  std::vector<EpochMetrics> history;
  std::map<std::string, nn::Matrix> tensors;

  // Copies every parameter of `policy`.
  static Checkpoint capture(const model::Policy& policy);
  // Builds a policy and loads all tensors; every parameter must be present
  // with a matching shape.
  std::unique_ptr<model::Policy> make_policy() const;
};

// Container layout (all integers little-endian):
//   "MULSACKP" | u32 version | u64 header length | JSON header
//   | u32 tensor count | per tensor: u32 name length, name, u32 rank, u32 dims[rank], f32 data
//   | u64 FNV-1a of everything before it
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin = "");

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a of the serialized form.
std::uint64_t checkpoint_hash(const Checkpoint& checkpoint);

}  // namespace mulsa::training
