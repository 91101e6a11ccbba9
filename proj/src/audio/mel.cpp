#include "mulsa/audio/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>

#include "mulsa/common/error.hpp"

namespace mulsa::audio {
namespace {

constexpr double kPi = 3.14159265358979323846;

// FFTW plan creation is not thread-safe; plans are cached per size and
// executed through the new-array interface.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void power(double* in, fftw_complex* out, double* power_out) const {
    fftw_execute_dft_r2c(plan_, in, out);
    for (int k = 0; k <= n_ / 2; ++k) power_out[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

const RealFft& fft_for(int n) {
  static std::mutex mutex;
  static std::vector<std::pair<int, std::unique_ptr<RealFft>>> cache;
  std::lock_guard lock(mutex);
  for (const auto& [size, fft] : cache) {
    if (size == n) return *fft;
  }
  cache.emplace_back(n, std::make_unique<RealFft>(n));
  return *cache.back().second;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

int MelParams::segment_samples() const {
  return static_cast<int>(std::lround(segment_seconds * target_rate));
}

int MelParams::frame_count() const { return segment_samples() / hop_length; }

void MelParams::validate() const {
  if (target_rate <= 0 || window_length <= 0 || hop_length <= 0 || n_mels <= 0) {
    throw ConfigError("mel parameters must be positive");
  }
  if (hop_length > window_length) throw ConfigError("hop must not exceed window length");
  if (fft_size < window_length) throw ConfigError("fft_size must cover the window");
  if (n_mels > bin_count()) throw ConfigError("n_mels exceeds frequency bin count");
  if (!(log_floor > 0.0)) throw ConfigError("log_floor must be positive");
}

std::vector<double> hann_window(int length) {
  std::vector<double> w(length);
  for (int n = 0; n < length; ++n) w[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / length);
  return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges(const MelParams& p) {
  const double m0 = hz_to_mel(p.f_min);
  const double m1 = hz_to_mel(p.f_max);
  std::vector<double> edges(p.n_mels + 2);
  for (int i = 0; i < p.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(m0 + (m1 - m0) * i / (p.n_mels + 1));
  }
  return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const MelParams& params) {
  const auto edges = mel_edges(params);
  return {edges.begin() + 1, edges.end() - 1};
}

std::vector<float> mel_filterbank(const MelParams& params) {
  params.validate();
  const int bins = params.bin_count();
  const auto edges = mel_edges(params);
  std::vector<float> fb(static_cast<std::size_t>(params.n_mels) * bins, 0.0f);
  for (int k = 0; k < bins; ++k) {
    const double f = (params.target_rate / 2.0) * k / (bins - 1);
    for (int m = 0; m < params.n_mels; ++m) {
      const double down = (f - edges[m]) / (edges[m + 1] - edges[m]);
      const double up = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
      fb[static_cast<std::size_t>(m) * bins + k] =
          static_cast<float>(std::max(0.0, std::min(down, up)));
    }
  }
  return fb;
}

std::vector<std::vector<double>> stft_power(std::span<const float> signal, const MelParams& params) {
  params.validate();
  const int n = static_cast<int>(signal.size());
  if (n == 0) throw ShapeError("stft of an empty signal");
  const int nfft = params.fft_size;
  const int pad = nfft / 2;
  const int frames = 1 + n / params.hop_length;
  const int win_offset = (nfft - params.window_length) / 2;
  const auto window = hann_window(params.window_length);

  const RealFft& fft = fft_for(nfft);
  double* buf = fftw_alloc_real(nfft);
  fftw_complex* spec = fftw_alloc_complex(nfft / 2 + 1);
  std::vector<std::vector<double>> power(frames, std::vector<double>(nfft / 2 + 1));
  for (int f = 0; f < frames; ++f) {
    const int start = f * params.hop_length - pad;
    std::fill(buf, buf + nfft, 0.0);
    for (int i = 0; i < params.window_length; ++i) {
      const int src = reflect_index(start + win_offset + i, n);
      buf[win_offset + i] = signal[src] * window[i];
    }
    fft.power(buf, spec, power[f].data());
  }
  fftw_free(buf);
  fftw_free(spec);
  return power;
}

MelSpectrogram mel_spectrogram(std::span<const float> segment, const MelParams& params) {
  params.validate();
  const int expected = params.segment_samples();
  if (static_cast<int>(segment.size()) > expected) {
    throw ShapeError("mel segment has " + std::to_string(segment.size()) +
                     " samples, expected at most " + std::to_string(expected));
  }
  std::vector<float> padded(expected, 0.0f);
  std::copy(segment.begin(), segment.end(), padded.begin());

  const auto power = stft_power(padded, params);
  const auto fb = mel_filterbank(params);
  const int bins = params.bin_count();

  MelSpectrogram out;
  out.n_mels = params.n_mels;
  out.n_frames = params.frame_count();
  out.sample_rate_used = params.target_rate;
  out.params = params;
  out.values.resize(static_cast<std::size_t>(out.n_mels) * out.n_frames);
  const double floor = params.log_floor;
  for (int m = 0; m < out.n_mels; ++m) {
    const float* row = fb.data() + static_cast<std::size_t>(m) * bins;
    for (int t = 0; t < out.n_frames; ++t) {
      double e = 0.0;
      for (int k = 0; k < bins; ++k) e += static_cast<double>(row[k]) * power[t][k];
      out.values[static_cast<std::size_t>(m) * out.n_frames + t] =
          static_cast<float>(std::log(std::max(e, floor)));
    }
  }
  return out;
}

MelSpectrogram mel_spectrogram(const AudioChunk& segment, const MelParams& params) {
  if (segment.sample_rate != params.target_rate) {
    throw RateMismatchError("mel_spectrogram expects " + std::to_string(params.target_rate) +
                            " Hz input, got " + std::to_string(segment.sample_rate) + " Hz");
  }
  std::vector<float> x(segment.samples.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = segment.samples[i] / 32768.0f;
  return mel_spectrogram(x, params);
}

}  // namespace mulsa::audio
