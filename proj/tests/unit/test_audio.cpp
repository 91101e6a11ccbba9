#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "mulsa/audio/mel.hpp"
#include "mulsa/audio/resample.hpp"
#include "mulsa/common/error.hpp"
#include "mulsa/common/rng.hpp"

namespace mulsa::audio {
namespace {

constexpr double kPi = std::numbers::pi;

// Oracle: reflect-padded centered frame, periodic Hann of length 400 centered
// in a 512-point frame, naive O(n^2) DFT.
std::vector<double> oracle_frame_power(const std::vector<float>& x, int frame) {
  const int nfft = 512, win = 400, hop = 160, pad = nfft / 2;
  const int n = static_cast<int>(x.size());
  auto sample = [&](int i) -> double {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return x[i];
  };
  std::vector<double> buf(nfft, 0.0);
  const int off = (nfft - win) / 2;
  for (int j = 0; j < win; ++j) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * j / win);
    buf[off + j] = w * sample(frame * hop + off + j - pad);
  }
  std::vector<double> power(nfft / 2 + 1);
  for (int k = 0; k <= nfft / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (int j = 0; j < nfft; ++j) acc += buf[j] * std::polar(1.0, -2.0 * kPi * k * j / nfft);
    power[k] = std::norm(acc);
  }
  return power;
}

double oracle_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

// Oracle filterbank: triangles on HTK-mel-spaced edges, peak 1, no area
// normalization.
std::vector<std::vector<double>> oracle_filterbank() {
  const int n_mels = 64, bins = 257;
  const double sr = 16000.0;
  std::vector<double> edges(n_mels + 2);
  const double m0 = oracle_mel(0.0), m1 = oracle_mel(8000.0);
  for (int i = 0; i < n_mels + 2; ++i) {
    const double m = m0 + (m1 - m0) * i / (n_mels + 1);
    edges[i] = 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
  }
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(bins, 0.0));
  for (int m = 0; m < n_mels; ++m) {
    for (int k = 0; k < bins; ++k) {
      const double f = k * sr / 512.0;
      const double up = (f - edges[m]) / (edges[m + 1] - edges[m]);
      const double down = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
      fb[m][k] = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

std::vector<float> tone(double hz, int rate, int n, double amp = 0.5) {
  std::vector<float> x(n);
  for (int i = 0; i < n; ++i) x[i] = static_cast<float>(amp * std::sin(2.0 * kPi * hz * i / rate));
  return x;
}

TEST(MelTest, ShapeForHalfSecond) {
  MelParams p;
  EXPECT_EQ(p.segment_samples(), 8000);
  EXPECT_EQ(p.frame_count(), 50);
  const auto mel = mel_spectrogram(std::vector<float>(8000, 0.0f));
  EXPECT_EQ(mel.n_mels, 64);
  EXPECT_EQ(mel.n_frames, 50);
  EXPECT_EQ(mel.sample_rate_used, 16000);
  EXPECT_EQ(mel.values.size(), 64u * 50u);
}

TEST(MelTest, FilterbankMatchesOracle) {
  const auto fb = mel_filterbank(MelParams{});
  const auto ref = oracle_filterbank();
  ASSERT_EQ(fb.size(), 64u * 257u);
  for (int m = 0; m < 64; ++m) {
    for (int k = 0; k < 257; ++k) ASSERT_NEAR(fb[m * 257 + k], ref[m][k], 1e-5) << m << "," << k;
  }
}

TEST(MelTest, StftPowerMatchesNaiveDft) {
  Rng rng(11);
  std::vector<float> x(8000);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  const auto power = stft_power(x, MelParams{});
  ASSERT_EQ(power.size(), 51u);
  for (int frame : {0, 1, 25, 49, 50}) {
    const auto ref = oracle_frame_power(x, frame);
    for (int k = 0; k < 257; ++k) {
      ASSERT_NEAR(std::sqrt(power[frame][k]), std::sqrt(ref[k]), 1e-6 * std::sqrt(ref[k])) << frame << "," << k;
    }
  }
}

TEST(MelTest, LogMelMatchesOraclePipeline) {
  Rng rng(12);
  std::vector<float> x(8000);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-0.3, 0.3));
  const auto mel = mel_spectrogram(x);
  const auto fb = oracle_filterbank();
  for (int frame : {0, 17, 49}) {
    const auto pw = oracle_frame_power(x, frame);
    for (int m = 0; m < 64; ++m) {
      double e = 0.0;
      for (int k = 0; k < 257; ++k) e += fb[m][k] * pw[k];
      ASSERT_NEAR(mel.at(m, frame), std::log(std::max(e, 1e-10)), 1e-3) << m << "," << frame;
    }
  }
}

TEST(MelTest, SilenceIsLogFloor) {
  const auto mel = mel_spectrogram(std::vector<float>(8000, 0.0f));
  for (float v : mel.values) ASSERT_FLOAT_EQ(v, static_cast<float>(std::log(1e-10)));
}

TEST(MelTest, ToneEnergyPeaksAtMatchingBand) {
  const auto centers = mel_center_frequencies(MelParams{});
  for (double hz : {300.0, 1000.0, 3000.0}) {
    const auto mel = mel_spectrogram(tone(hz, 16000, 8000));
    int best = 0;
    for (int m = 1; m < 64; ++m) {
      if (mel.at(m, 25) > mel.at(best, 25)) best = m;
    }
    const double width = (best + 1 < 64 ? centers[best + 1] : 8000.0) - centers[std::max(best - 1, 0)];
    EXPECT_LT(std::abs(centers[best] - hz), width) << hz;
  }
}

TEST(MelTest, RejectsWrongRateAndOverlongInput) {
  AudioChunk c;
  c.sample_rate = 44100;
  c.samples.assign(100, 0);
  EXPECT_THROW(mel_spectrogram(c), RateMismatchError);
  EXPECT_THROW(mel_spectrogram(std::vector<float>(9000, 0.0f)), ShapeError);
}

TEST(ResampleTest, LengthAndTonePreserved) {
  const auto x = tone(440.0, 44100, 22050);
  const auto y = resample(x, 44100, 16000);
  ASSERT_EQ(y.size(), 8000u);
  // Naive DFT magnitude peak over the steady middle of the signal.
  const int start = 1000, n = 6000;
  int best_k = 0;
  double best = 0.0;
  for (int k = 1; k < n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (int j = 0; j < n; ++j) acc += static_cast<double>(y[start + j]) * std::polar(1.0, -2.0 * kPi * k * j / n);
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_k = k;
    }
  }
  const double peak_hz = best_k * 16000.0 / n;
  EXPECT_NEAR(peak_hz, 440.0, 16000.0 / n);
  // Amplitude is kept in the passband.
  float mx = 0.0f;
  for (int j = start; j < start + n; ++j) mx = std::max(mx, std::abs(y[j]));
  EXPECT_NEAR(mx, 0.5, 0.01);
}

TEST(ResampleTest, AboveNyquistIsAttenuated) {
  const auto x = tone(10000.0, 44100, 22050);
  const auto y = resample(x, 44100, 16000);
  double rms = 0.0;
  for (int j = 1000; j < 7000; ++j) rms += static_cast<double>(y[j]) * y[j];
  rms = std::sqrt(rms / 6000.0);
  EXPECT_LT(rms, 0.01);
}

TEST(ResampleTest, ChunkOverloadKeepsTimestampAndIdentity) {
  AudioChunk c;
  c.sample_rate = 44100;
  c.start_timestamp = 1.25;
  c.samples.assign(4410, 1000);
  const auto r = resample(c, 16000);
  EXPECT_EQ(r.sample_rate, 16000);
  EXPECT_EQ(r.samples.size(), 1600u);
  EXPECT_DOUBLE_EQ(r.start_timestamp, 1.25);
  EXPECT_EQ(resample(c, 44100), c);
}

}  // namespace
}  // namespace mulsa::audio
