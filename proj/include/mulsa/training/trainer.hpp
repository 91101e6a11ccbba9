#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mulsa/nn/adam.hpp"
#include "mulsa/training/checkpoint.hpp"
#include "mulsa/training/dataset.hpp"

namespace mulsa::training {

struct TrainConfig {
  std::string dataset;  // dataset manifest path
  model::PolicyConfig policy;
  int batch_size = 32;
  int epochs = 50;
  nn::AdamConfig optimizer;  // learning_rate 1e-4
  std::uint64_t seed = 0;
  model::PreprocessConfig preprocess;
  double val_fraction = 0.0;
  // Frozen statistics; computed from the training set when absent.
  std::optional<model::NormalizationStats> stats;

  void validate() const;
};
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainProgress {
  EpochMetrics metrics;
  double seconds = 0.0;
};

// Behavioral cloning with mean cross-entropy. Deterministic given the seed:
// the epoch order comes from (seed, epoch) and each sample's crop offset from
// (seed, epoch, sample index).
Checkpoint train(const TrainConfig& config, const WindowDataset& dataset,
                 const std::function<void(const TrainProgress&)>& on_epoch = {});

// Loads the manifest named in the config, caching only the modalities the
// policy uses.
Checkpoint train(const TrainConfig& config, const std::function<void(const std::string&)>& log = {});

}  // namespace mulsa::training
