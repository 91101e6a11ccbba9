#pragma once

#include <span>
#include <vector>

#include "mulsa/sensordata/observation.hpp"

namespace mulsa::audio {

struct MelParams {
  int target_rate = 16000;
  int window_length = 400;  // 25 ms Hann
  int hop_length = 160;     // 10 ms
  int n_mels = 64;
  int fft_size = 512;
  double log_floor = 1e-10;
  double f_min = 0.0;
  double f_max = 8000.0;
  double segment_seconds = 0.5;

  int segment_samples() const;
  // Centered framing yields segment_samples / hop + 1 frames; the trailing
  // frame is dropped so a 0.5 s segment maps to exactly 50 columns.
  int frame_count() const;
  int bin_count() const { return fft_size / 2 + 1; }
  void validate() const;

  bool operator==(const MelParams&) const = default;
};

// Log-mel energies, row-major with mel bands outer and frames inner.
struct MelSpectrogram {
  int n_mels = 0;
  int n_frames = 0;
  int sample_rate_used = 0;
  MelParams params;
  std::vector<float> values;

  float at(int mel, int frame) const { return values[static_cast<std::size_t>(mel) * n_frames + frame]; }
  bool operator==(const MelSpectrogram&) const = default;
};

// Periodic Hann window of `length` samples.
std::vector<double> hann_window(int length);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular HTK-scale filters, row-major [n_mels][bin_count].
std::vector<float> mel_filterbank(const MelParams& params);
// Center frequency of each mel band.
std::vector<double> mel_center_frequencies(const MelParams& params);

// Power spectra of the centered (reflect-padded) STFT: [frame][bin], before
// the trailing frame is dropped.
std::vector<std::vector<double>> stft_power(std::span<const float> signal, const MelParams& params);

// Samples are scaled by 1/32768. Input must be at params.target_rate; shorter
// segments are zero-padded.
MelSpectrogram mel_spectrogram(const AudioChunk& segment, const MelParams& params = {});
MelSpectrogram mel_spectrogram(std::span<const float> segment, const MelParams& params = {});

}  // namespace mulsa::audio
