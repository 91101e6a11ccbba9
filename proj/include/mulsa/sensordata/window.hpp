#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "mulsa/audio/mel.hpp"
#include "mulsa/sensordata/observation.hpp"

namespace mulsa {

// The stacked model input: N slots per modality, oldest first.
struct ObservationWindow {
  std::vector<Image> visual;
  std::vector<Image> tactile;
  std::vector<audio::MelSpectrogram> audio;
  std::vector<double> slot_end_times;

  int slots() const { return static_cast<int>(slot_end_times.size()); }
  bool operator==(const ObservationWindow&) const = default;
};

// Contiguous mono PCM addressed by a global sample index: sample k was
// captured at time k / sample_rate.
struct AudioTrack {
  int sample_rate = kCaptureAudioRate;
  std::int64_t first_index = 0;
  std::vector<std::int16_t> samples;

  std::int64_t end_index() const { return first_index + static_cast<std::int64_t>(samples.size()); }
};

// Slot i (0-based, oldest first) ends at t - (N - 1 - i) * stride.
std::vector<double> window_slot_end_times(double t, int slots, double stride);

// Index of the frame whose timestamp is nearest `time`; ties go to the earlier
// frame and queries before the first frame return 0.
std::size_t nearest_frame_index(std::span<const double> timestamps, double time);

// Samples covering (end - duration, end]; anything outside the track is
// silence.
AudioChunk extract_audio_segment(const AudioTrack& track, double end_time, double duration);

std::int64_t sample_index_at(double time, int sample_rate);

// Resample a capture-rate segment to the mel rate and compute its spectrogram.
audio::MelSpectrogram segment_spectrogram(const AudioChunk& segment,
                                          const audio::MelParams& params = {});

struct StreamSnapshot {
  std::vector<std::shared_ptr<const VisualFrame>> visual;
  std::vector<std::shared_ptr<const TactileFrame>> tactile;
  AudioTrack audio;
};

// Per-modality ring buffers fed by a single writer (the tick loop); readers
// take immutable snapshots.
class SensorStreams {
 public:
  explicit SensorStreams(double retention_seconds = 4.0, int audio_rate = kCaptureAudioRate);

  void push(const Observation& observation);
  void clear();
  StreamSnapshot snapshot() const;
  bool empty() const;

 private:
  double retention_;
  int audio_rate_;
  mutable std::mutex mutex_;
  std::deque<std::shared_ptr<const VisualFrame>> visual_;
  std::deque<std::shared_ptr<const TactileFrame>> tactile_;
  std::int64_t audio_first_ = 0;
  std::deque<std::int16_t> audio_;
  bool audio_started_ = false;
};

ObservationWindow assemble_window(const StreamSnapshot& streams, double t, int slots = kWindowSlots,
                                  double stride = kWindowStride,
                                  const audio::MelParams& params = {});

}  // namespace mulsa
