#pragma once

#include <span>
#include <vector>

#include "mulsa/sensordata/observation.hpp"

namespace mulsa::audio {

// Band-limited rate conversion with a Kaiser-windowed sinc kernel evaluated on
// a polyphase table. The output holds round(n * target / source) samples and
// starts at the same timestamp as the input. Equal rates return the input
// unchanged.
AudioChunk resample(const AudioChunk& chunk, int target_rate);

// Float variant used by the chunk overload.
std::vector<float> resample(std::span<const float> input, int source_rate, int target_rate);

}  // namespace mulsa::audio
