#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mulsa/common/image.hpp"

namespace mulsa {

inline constexpr int kCaptureAudioRate = 44100;
inline constexpr double kPolicyPeriod = 0.1;  // 10 Hz
inline constexpr int kWindowSlots = 6;
inline constexpr double kWindowStride = 0.5;

inline constexpr int kVisualHeight = 240;
inline constexpr int kVisualWidth = 320;
inline constexpr int kTactileHeight = 300;
inline constexpr int kTactileWidth = 400;

struct VisualFrame {
  Image image;
  double timestamp = 0.0;
  bool operator==(const VisualFrame&) const = default;
};

struct TactileFrame {
  Image image;
  double timestamp = 0.0;
  bool operator==(const TactileFrame&) const = default;
};

struct AudioChunk {
  std::vector<std::int16_t> samples;
  int sample_rate = kCaptureAudioRate;
  double start_timestamp = 0.0;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  double end_timestamp() const { return start_timestamp + duration(); }
  bool operator==(const AudioChunk&) const = default;
};

// One synchronized capture. `audio` holds the samples captured since the
// previous tick; the trailing window is reassembled from the stream buffer.
// `aux` carries simulator ground truth for metrics and is never part of a
// policy input.
struct Observation {
  VisualFrame visual;
  TactileFrame tactile;
  AudioChunk audio;
  std::map<std::string, double> aux;

  double timestamp() const { return visual.timestamp; }
  bool operator==(const Observation&) const = default;
};

}  // namespace mulsa
