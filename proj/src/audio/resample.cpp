#include "mulsa/audio/resample.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>

#include "mulsa/common/error.hpp"

namespace mulsa::audio {
namespace {

constexpr int kZeroCrossings = 16;
constexpr double kRolloff = 0.94;
constexpr double kKaiserBeta = 8.6;
constexpr long kMaxPhaseTable = 4096;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = 3.14159265358979323846 * x;
  return std::sin(px) / px;
}

class Kernel {
 public:
  Kernel(int source_rate, int target_rate) {
    cutoff_ = kRolloff * std::min(1.0, static_cast<double>(target_rate) / source_rate);
    half_width_ = kZeroCrossings / cutoff_;
    norm_ = std::cyl_bessel_i(0.0, kKaiserBeta);
  }

  double operator()(double t) const {
    const double r = t / half_width_;
    if (std::abs(r) >= 1.0) return 0.0;
    const double w = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / norm_;
    return cutoff_ * sinc(cutoff_ * t) * w;
  }

  int taps_each_side() const { return static_cast<int>(std::ceil(half_width_)); }

 private:
  double cutoff_;
  double half_width_;
  double norm_;
};

// Phase tables depend only on the rate pair; building one costs tens of
// thousands of Bessel evaluations, so they are shared across calls.
std::shared_ptr<const std::vector<float>> phase_table(int source_rate, int target_rate, const Kernel& kernel,
                                                      long up, int side) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const std::vector<float>>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{source_rate, target_rate}];
  if (!slot) {
    const int taps = 2 * side;
    auto table = std::make_shared<std::vector<float>>(static_cast<std::size_t>(up) * taps);
    for (long phase = 0; phase < up; ++phase) {
      const double frac = static_cast<double>(phase) / up;
      for (int t = 0; t < taps; ++t) {
        const int offset = t - side + 1;  // input index relative to base
        (*table)[phase * taps + t] = static_cast<float>(kernel(frac - offset));
      }
    }
    slot = std::move(table);
  }
  return slot;
}

}  // namespace

std::vector<float> resample(std::span<const float> input, int source_rate, int target_rate) {
  if (source_rate <= 0 || target_rate <= 0) {
    throw ConfigError("sample rates must be positive");
  }
  if (input.empty()) return {};
  if (source_rate == target_rate) return {input.begin(), input.end()};

  const long g = std::gcd(source_rate, target_rate);
  const long up = target_rate / g;    // output phases
  const long down = source_rate / g;  // input advance per `up` outputs
  const long n = static_cast<long>(input.size());
  const long out_len = (n * up + down / 2) / down;

  const Kernel kernel(source_rate, target_rate);
  const int side = kernel.taps_each_side();
  const int taps = 2 * side;

  // Output j sits at input position j * down / up = base + phase / up.
  std::shared_ptr<const std::vector<float>> table;
  const bool use_table = up <= kMaxPhaseTable;
  if (use_table) table = phase_table(source_rate, target_rate, kernel, up, side);

  std::vector<float> out(out_len);
  std::vector<float> direct(taps);
  for (long j = 0; j < out_len; ++j) {
    const long pos = j * down;
    const long base = pos / up;
    const long phase = pos % up;
    const float* w = nullptr;
    if (use_table) {
      w = table->data() + phase * taps;
    } else {
      const double frac = static_cast<double>(phase) / up;
      for (int t = 0; t < taps; ++t) direct[t] = static_cast<float>(kernel(frac - (t - side + 1)));
      w = direct.data();
    }
    double acc = 0.0;
    const long first = base - side + 1;
    const int t0 = static_cast<int>(std::max(0L, -first));
    const int t1 = static_cast<int>(std::min<long>(taps, n - first));
    for (int t = t0; t < t1; ++t) acc += static_cast<double>(w[t]) * input[first + t];
    out[j] = static_cast<float>(acc);
  }
  return out;
}

AudioChunk resample(const AudioChunk& chunk, int target_rate) {
  if (chunk.sample_rate <= 0 || target_rate <= 0) {
    throw ConfigError("sample rates must be positive");
  }
  if (chunk.sample_rate == target_rate) return chunk;
  std::vector<float> x(chunk.samples.begin(), chunk.samples.end());
  const auto y = resample(x, chunk.sample_rate, target_rate);
  AudioChunk out;
  out.sample_rate = target_rate;
  out.start_timestamp = chunk.start_timestamp;
  out.samples.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out.samples[i] = static_cast<std::int16_t>(std::clamp(std::lround(y[i]), -32768L, 32767L));
  }
  return out;
}

}  // namespace mulsa::audio
