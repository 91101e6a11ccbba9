#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mulsa {

struct WavData {
  int sample_rate = 0;
  std::vector<std::int16_t> samples;  // mono
};

// Canonical 44-byte RIFF header, mono, 16-bit little-endian PCM.
void write_wav(const std::string& path, int sample_rate, const std::vector<std::int16_t>& samples);
WavData read_wav(const std::string& path);

}  // namespace mulsa
