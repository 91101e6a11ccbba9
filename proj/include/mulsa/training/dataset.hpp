#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mulsa/audio/mel.hpp"
#include "mulsa/model/preprocess.hpp"
#include "mulsa/sensordata/episode.hpp"

namespace mulsa::training {

struct DatasetOptions {
  int slots = kWindowSlots;
  double stride = kWindowStride;
  audio::MelParams mel;
  model::PreprocessConfig preprocess;
  // Modalities whose inputs are cached; others cannot be filled.
  std::vector<model::Modality> modalities{model::Modality::kVisual, model::Modality::kAudio,
                                          model::Modality::kTactile};
};

// Windowed behavioral-cloning samples, one per recorded episode step. Image
// frames are kept area-downsampled; spectrograms are computed once per
// distinct segment.
class WindowDataset {
 public:
  static constexpr int kMaxSlots = 16;

  struct Sample {
    int episode = 0;
    int step = 0;
    int label = 0;
    std::array<int, kMaxSlots> visual{};   // frame index per slot
    std::array<int, kMaxSlots> tactile{};
    std::array<int, kMaxSlots> audio{};    // spectrogram index per slot
  };

  WindowDataset() = default;
  explicit WindowDataset(DatasetOptions options);

  // Loads every episode of a dataset manifest. Episodes that fail to load or
  // disagree with the first episode's task are skipped and counted.
  static WindowDataset load(const std::filesystem::path& manifest, DatasetOptions options = {},
                            const std::function<void(const std::string&)>& log = {});

  void add_episode(const Episode& episode);

  std::size_t size() const { return samples_.size(); }
  std::size_t episode_count() const { return episodes_.size(); }
  int skipped() const { return skipped_; }
  Task task() const { return task_; }
  const DatasetOptions& options() const { return options_; }
  const Sample& sample(std::size_t i) const { return samples_[i]; }
  int label(std::size_t i) const { return samples_[i].label; }
  std::vector<int> label_histogram(int class_count) const;
  bool has(model::Modality m) const;

  // Mean and standard deviation of all log-mel values over distinct segments.
  model::NormalizationStats audio_stats() const;

  // Writes sample i into batch position `batch_index` of `input`, cropping
  // every image slot of both modalities at `offset`. Only the maps present in
  // `input` are written.
  void fill(std::size_t i, model::PolicyInput& input, int batch_index, model::CropOffset offset,
            const model::NormalizationStats& stats) const;

  // Downsampled (uncropped) window of sample i, for inspection and tests.
  ObservationWindow window(std::size_t i) const;


 private:
  struct EpisodeData {
    std::string name;
    std::vector<Image> visual;
    std::vector<Image> tactile;
    std::vector<audio::MelSpectrogram> mels;
    std::vector<double> times;
  };

  DatasetOptions options_;
  Task task_ = Task::kPacking;
  bool task_set_ = false;
  std::vector<EpisodeData> episodes_;
  std::vector<Sample> samples_;
  int skipped_ = 0;
};

}  // namespace mulsa::training
