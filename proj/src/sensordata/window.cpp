#include "mulsa/sensordata/window.hpp"

#include <algorithm>
#include <cmath>

#include "mulsa/audio/resample.hpp"
#include "mulsa/common/error.hpp"

namespace mulsa {

std::vector<double> window_slot_end_times(double t, int slots, double stride) {
  std::vector<double> ends(slots);
  for (int i = 0; i < slots; ++i) ends[i] = t - (slots - 1 - i) * stride;
  return ends;
}

std::size_t nearest_frame_index(std::span<const double> timestamps, double time) {
  if (timestamps.empty()) throw NoDataError("no frames available");
  const auto it = std::lower_bound(timestamps.begin(), timestamps.end(), time);
  if (it == timestamps.begin()) return 0;
  if (it == timestamps.end()) return timestamps.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - timestamps.begin());
  const std::size_t lo = hi - 1;
  return (time - timestamps[lo] <= timestamps[hi] - time) ? lo : hi;
}

std::int64_t sample_index_at(double time, int sample_rate) {
  return static_cast<std::int64_t>(std::llround(time * sample_rate));
}

AudioChunk extract_audio_segment(const AudioTrack& track, double end_time, double duration) {
  const std::int64_t end = sample_index_at(end_time, track.sample_rate);
  const std::int64_t begin = end - sample_index_at(duration, track.sample_rate);
  AudioChunk out;
  out.sample_rate = track.sample_rate;
  out.start_timestamp = static_cast<double>(begin) / track.sample_rate;
  out.samples.assign(static_cast<std::size_t>(end - begin), 0);
  const std::int64_t lo = std::max(begin, track.first_index);
  const std::int64_t hi = std::min(end, track.end_index());
  for (std::int64_t k = lo; k < hi; ++k) {
    out.samples[static_cast<std::size_t>(k - begin)] =
        track.samples[static_cast<std::size_t>(k - track.first_index)];
  }
  return out;
}

audio::MelSpectrogram segment_spectrogram(const AudioChunk& segment, const audio::MelParams& params) {
  return audio::mel_spectrogram(audio::resample(segment, params.target_rate), params);
}

SensorStreams::SensorStreams(double retention_seconds, int audio_rate)
    : retention_(retention_seconds), audio_rate_(audio_rate) {}

void SensorStreams::push(const Observation& obs) {
  auto visual = std::make_shared<const VisualFrame>(obs.visual);
  auto tactile = std::make_shared<const TactileFrame>(obs.tactile);
  std::lock_guard lock(mutex_);
  visual_.push_back(std::move(visual));
  tactile_.push_back(std::move(tactile));
  if (!obs.audio.samples.empty()) {
    if (obs.audio.sample_rate != audio_rate_) {
      throw RateMismatchError("stream expects " + std::to_string(audio_rate_) + " Hz audio");
    }
    const std::int64_t start = sample_index_at(obs.audio.start_timestamp, audio_rate_);
    if (!audio_started_) {
      audio_first_ = start;
      audio_started_ = true;
    }
    const std::int64_t end = audio_first_ + static_cast<std::int64_t>(audio_.size());
    // Gaps are filled with silence; overlaps keep the earlier samples.
    for (std::int64_t k = end; k < start; ++k) audio_.push_back(0);
    const std::int64_t skip = std::max<std::int64_t>(0, end - start);
    for (std::size_t i = static_cast<std::size_t>(skip); i < obs.audio.samples.size(); ++i) {
      audio_.push_back(obs.audio.samples[i]);
    }
  }
  const double horizon = obs.timestamp() - retention_;
  while (visual_.size() > 1 && visual_[1]->timestamp <= horizon) visual_.pop_front();
  while (tactile_.size() > 1 && tactile_[1]->timestamp <= horizon) tactile_.pop_front();
  const std::int64_t keep_from = sample_index_at(horizon, audio_rate_);
  while (!audio_.empty() && audio_first_ < keep_from) {
    audio_.pop_front();
    ++audio_first_;
  }
}

void SensorStreams::clear() {
  std::lock_guard lock(mutex_);
  visual_.clear();
  tactile_.clear();
  audio_.clear();
  audio_first_ = 0;
  audio_started_ = false;
}

bool SensorStreams::empty() const {
  std::lock_guard lock(mutex_);
  return visual_.empty();
}

StreamSnapshot SensorStreams::snapshot() const {
  std::lock_guard lock(mutex_);
  StreamSnapshot snap;
  snap.visual.assign(visual_.begin(), visual_.end());
  snap.tactile.assign(tactile_.begin(), tactile_.end());
  snap.audio.sample_rate = audio_rate_;
  snap.audio.first_index = audio_first_;
  snap.audio.samples.assign(audio_.begin(), audio_.end());
  return snap;
}

ObservationWindow assemble_window(const StreamSnapshot& streams, double t, int slots, double stride,
                                  const audio::MelParams& params) {
  if (streams.visual.empty() || streams.tactile.empty()) {
    throw NoDataError("assemble_window: empty visual/tactile stream");
  }
  if (slots <= 0) throw ConfigError("window needs at least one slot");
  std::vector<double> vt(streams.visual.size());
  std::vector<double> tt(streams.tactile.size());
  for (std::size_t i = 0; i < vt.size(); ++i) vt[i] = streams.visual[i]->timestamp;
  for (std::size_t i = 0; i < tt.size(); ++i) tt[i] = streams.tactile[i]->timestamp;

  ObservationWindow w;
  w.slot_end_times = window_slot_end_times(t, slots, stride);
  for (double end : w.slot_end_times) {
    w.visual.push_back(streams.visual[nearest_frame_index(vt, end)]->image);
    w.tactile.push_back(streams.tactile[nearest_frame_index(tt, end)]->image);
    w.audio.push_back(segment_spectrogram(extract_audio_segment(streams.audio, end, stride), params));
  }
  return w;
}

}  // namespace mulsa
