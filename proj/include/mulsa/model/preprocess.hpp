#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "mulsa/common/rng.hpp"
#include "mulsa/model/policy.hpp"
#include "mulsa/sensordata/window.hpp"

namespace mulsa::model {

struct PreprocessConfig {
  int down_height = 105;
  int down_width = 140;
  int crop_height = 96;
  int crop_width = 128;
  double pixel_mean = 0.5;
  double pixel_std = 0.25;

  void validate() const;
  bool operator==(const PreprocessConfig&) const = default;
};
void to_json(nlohmann::json& j, const PreprocessConfig& c);
void from_json(const nlohmann::json& j, PreprocessConfig& c);

// Scalar log-mel standardization computed over a training set.
struct NormalizationStats {
  double audio_mean = 0.0;
  double audio_std = 1.0;
  bool operator==(const NormalizationStats&) const = default;
};
void to_json(nlohmann::json& j, const NormalizationStats& s);
void from_json(const nlohmann::json& j, NormalizationStats& s);

struct CropOffset {
  int top = 0;
  int left = 0;
  bool operator==(const CropOffset&) const = default;
};

enum class AugmentMode { kTrain, kEval };

CropOffset center_crop_offset(const PreprocessConfig& c);
// Uniform over the (down - crop + 1) offset grid in each axis.
CropOffset random_crop_offset(const PreprocessConfig& c, Rng& rng);

// Area-downsamples both image modalities, then crops all frames of both with
// one offset (random in train mode, centered in eval mode). Spectrograms pass
// through unchanged. Frames already at the downsampled size are not resized.
ObservationWindow augment(const ObservationWindow& window, AugmentMode mode, Rng* rng,
                          const PreprocessConfig& config = {}, CropOffset* offset_out = nullptr);

Image downsample(const Image& frame, const PreprocessConfig& config = {});

// Writes a cropped-size image into image slot `index` of a feature map with
// pixel standardization.
void write_image(const Image& image, nn::FeatureMap& map, int index, const PreprocessConfig& config);
// Crops from a downsampled frame directly into the map (no intermediate image).
void write_image_cropped(const Image& down, CropOffset offset, nn::FeatureMap& map, int index,
                         const PreprocessConfig& config);
void write_mel(const float* values, int n_mels, int n_frames, nn::FeatureMap& map, int index,
               const NormalizationStats& stats);

// Allocates an input for `batch` samples of `slots` slots with the active
// modalities of `config`.
PolicyInput allocate_input(const PolicyConfig& config, int batch);

// Converts cropped windows (output of augment) into a model batch.
PolicyInput make_input(const std::vector<const ObservationWindow*>& windows, const PolicyConfig& config,
                       const NormalizationStats& stats, const PreprocessConfig& pre = {});

}  // namespace mulsa::model
