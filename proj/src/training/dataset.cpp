#include "mulsa/training/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mulsa/common/error.hpp"

namespace mulsa::training {

using model::Modality;

WindowDataset::WindowDataset(DatasetOptions options) : options_(std::move(options)) {
  options_.preprocess.validate();
  options_.mel.validate();
  if (options_.slots <= 0 || options_.slots > kMaxSlots) {
    throw ConfigError("window slots must be in [1, " + std::to_string(kMaxSlots) + "]");
  }
  if (!(options_.stride > 0.0)) throw ConfigError("window stride must be positive");
}

bool WindowDataset::has(Modality m) const {
  return std::find(options_.modalities.begin(), options_.modalities.end(), m) != options_.modalities.end();
}

WindowDataset WindowDataset::load(const std::filesystem::path& manifest, DatasetOptions options,
                                  const std::function<void(const std::string&)>& log) {
  WindowDataset ds(std::move(options));
  for (const auto& dir : load_dataset_manifest(manifest)) {
    try {
      const Episode ep = load_episode(dir);
      if (ds.task_set_ && ep.metadata.task != ds.task_) {
        throw ConfigError("episode task " + to_string(ep.metadata.task) + " differs from dataset task " +
                          to_string(ds.task_));
      }
      ds.add_episode(ep);
    } catch (const Error& e) {
      ++ds.skipped_;
      if (log) log("skipping episode " + dir.string() + ": " + e.what());
    }
  }
  if (log && ds.skipped_ > 0) log(std::to_string(ds.skipped_) + " episode(s) skipped");
  return ds;
}

void WindowDataset::add_episode(const Episode& episode) {
  if (episode.steps.empty()) throw NoDataError("episode has no steps");
  if (task_set_ && episode.metadata.task != task_) throw ConfigError("episode task differs from dataset task");
  const int classes = episode.action_spec.class_count();
  for (const auto& s : episode.steps) {
    if (s.action.class_index < 0 || s.action.class_index >= classes) {
      throw FormatError("action class " + std::to_string(s.action.class_index) + " out of range");
    }
  }

  EpisodeData data;
  data.name = episode.metadata.scenario;
  std::vector<double> times;
  times.reserve(episode.steps.size());
  for (const auto& s : episode.steps) times.push_back(s.observation.timestamp());
  const bool want_v = has(Modality::kVisual);
  const bool want_t = has(Modality::kTactile);
  const bool want_a = has(Modality::kAudio);
  for (const auto& s : episode.steps) {
    if (want_v) data.visual.push_back(model::downsample(s.observation.visual.image, options_.preprocess));
    if (want_t) data.tactile.push_back(model::downsample(s.observation.tactile.image, options_.preprocess));
  }
  std::vector<double> tactile_times;
  for (const auto& s : episode.steps) tactile_times.push_back(s.observation.tactile.timestamp);

  const AudioTrack track = episode.audio_track();
  std::map<std::int64_t, int> memo;
  const int episode_index = static_cast<int>(episodes_.size());
  std::vector<Sample> added;
  for (std::size_t k = 0; k < episode.steps.size(); ++k) {
    Sample smp;
    smp.episode = episode_index;
    smp.step = static_cast<int>(k);
    smp.label = episode.steps[k].action.class_index;
    const auto ends = window_slot_end_times(times[k], options_.slots, options_.stride);
    for (int n = 0; n < options_.slots; ++n) {
      smp.visual[n] = static_cast<int>(nearest_frame_index(times, ends[n]));
      smp.tactile[n] = static_cast<int>(nearest_frame_index(tactile_times, ends[n]));
      if (want_a) {
        const std::int64_t key = sample_index_at(ends[n], track.sample_rate);
        auto it = memo.find(key);
        if (it == memo.end()) {
          data.mels.push_back(
              segment_spectrogram(extract_audio_segment(track, ends[n], options_.stride), options_.mel));
          it = memo.emplace(key, static_cast<int>(data.mels.size()) - 1).first;
        }
        smp.audio[n] = it->second;
      }
    }
    added.push_back(smp);
  }
  data.times = std::move(times);
  episodes_.push_back(std::move(data));
  samples_.insert(samples_.end(), added.begin(), added.end());
  if (!task_set_) {
    task_ = episode.metadata.task;
    task_set_ = true;
  }
}

std::vector<int> WindowDataset::label_histogram(int class_count) const {
  std::vector<int> hist(static_cast<std::size_t>(class_count), 0);
  for (const auto& s : samples_) {
    if (s.label < 0 || s.label >= class_count) throw ConfigError("label exceeds class count");
    ++hist[static_cast<std::size_t>(s.label)];
  }
  return hist;
}

model::NormalizationStats WindowDataset::audio_stats() const {
  double n = 0.0, mean = 0.0, m2 = 0.0;
  for (const auto& ep : episodes_) {
    for (const auto& mel : ep.mels) {
      for (float v : mel.values) {
        n += 1.0;
        const double d = v - mean;
        mean += d / n;
        m2 += d * (v - mean);
      }
    }
  }
  model::NormalizationStats s;
  if (n < 2.0) return s;
  s.audio_mean = mean;
  s.audio_std = std::sqrt(m2 / (n - 1.0));
  if (!(s.audio_std > 1e-8)) s.audio_std = 1.0;
  return s;
}

void WindowDataset::fill(std::size_t i, model::PolicyInput& input, int batch_index, model::CropOffset offset,
                         const model::NormalizationStats& stats) const {
  const Sample& smp = samples_.at(i);
  const EpisodeData& ep = episodes_[static_cast<std::size_t>(smp.episode)];
  if (input.slots != options_.slots) throw ShapeError("input slot count differs from the dataset");
  for (int n = 0; n < input.slots; ++n) {
    const int idx = batch_index * input.slots + n;
    auto& v = input[Modality::kVisual];
    if (v.channels > 0) {
      if (ep.visual.empty()) throw ConfigError("visual frames were not cached");
      model::write_image_cropped(ep.visual[smp.visual[n]], offset, v, idx, options_.preprocess);
    }
    auto& t = input[Modality::kTactile];
    if (t.channels > 0) {
      if (ep.tactile.empty()) throw ConfigError("tactile frames were not cached");
      model::write_image_cropped(ep.tactile[smp.tactile[n]], offset, t, idx, options_.preprocess);
    }
    auto& a = input[Modality::kAudio];
    if (a.channels > 0) {
      if (ep.mels.empty()) throw ConfigError("spectrograms were not cached");
      const auto& mel = ep.mels[static_cast<std::size_t>(smp.audio[n])];
      model::write_mel(mel.values.data(), mel.n_mels, mel.n_frames, a, idx, stats);
    }
  }
}

ObservationWindow WindowDataset::window(std::size_t i) const {
  const Sample& smp = samples_.at(i);
  const EpisodeData& ep = episodes_[static_cast<std::size_t>(smp.episode)];
  ObservationWindow w;
  w.slot_end_times =
      window_slot_end_times(ep.times[static_cast<std::size_t>(smp.step)], options_.slots, options_.stride);
  for (int n = 0; n < options_.slots; ++n) {
    if (!ep.visual.empty()) w.visual.push_back(ep.visual[smp.visual[n]]);
    if (!ep.tactile.empty()) w.tactile.push_back(ep.tactile[smp.tactile[n]]);
    if (!ep.mels.empty()) w.audio.push_back(ep.mels[static_cast<std::size_t>(smp.audio[n])]);
  }
  return w;
}

}  // namespace mulsa::training
