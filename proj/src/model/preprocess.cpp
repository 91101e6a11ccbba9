#include "mulsa/model/preprocess.hpp"

#include "mulsa/common/error.hpp"

namespace mulsa::model {

void PreprocessConfig::validate() const {
  if (crop_height > down_height || crop_width > down_width || crop_height <= 0 || crop_width <= 0) {
    throw ConfigError("crop must fit within the downsampled size");
  }
}

void to_json(nlohmann::json& j, const PreprocessConfig& c) {
  j = {{"down_height", c.down_height}, {"down_width", c.down_width},
       {"crop_height", c.crop_height}, {"crop_width", c.crop_width},
       {"pixel_mean", c.pixel_mean},   {"pixel_std", c.pixel_std}};
}

void from_json(const nlohmann::json& j, PreprocessConfig& c) {
  c.down_height = j.at("down_height").get<int>();
  c.down_width = j.at("down_width").get<int>();
  c.crop_height = j.at("crop_height").get<int>();
  c.crop_width = j.at("crop_width").get<int>();
  c.pixel_mean = j.at("pixel_mean").get<double>();
  c.pixel_std = j.at("pixel_std").get<double>();
}

void to_json(nlohmann::json& j, const NormalizationStats& s) {
  j = {{"audio_mean", s.audio_mean}, {"audio_std", s.audio_std}};
}

void from_json(const nlohmann::json& j, NormalizationStats& s) {
  s.audio_mean = j.at("audio_mean").get<double>();
  s.audio_std = j.at("audio_std").get<double>();
}

CropOffset center_crop_offset(const PreprocessConfig& c) {
  return {(c.down_height - c.crop_height) / 2, (c.down_width - c.crop_width) / 2};
}

CropOffset random_crop_offset(const PreprocessConfig& c, Rng& rng) {
  CropOffset o;
  o.top = static_cast<int>(rng.uniform_int(0, c.down_height - c.crop_height));
  o.left = static_cast<int>(rng.uniform_int(0, c.down_width - c.crop_width));
  return o;
}

Image downsample(const Image& frame, const PreprocessConfig& config) {
  if (frame.height == config.down_height && frame.width == config.down_width) return frame;
  return area_resize(frame, config.down_height, config.down_width);
}

ObservationWindow augment(const ObservationWindow& window, AugmentMode mode, Rng* rng,
                          const PreprocessConfig& config, CropOffset* offset_out) {
  config.validate();
  CropOffset off = center_crop_offset(config);
  if (mode == AugmentMode::kTrain) {
    if (!rng) throw ConfigError("train-mode augmentation needs a random source");
    off = random_crop_offset(config, *rng);
  }
  if (offset_out) *offset_out = off;
  ObservationWindow out;
  out.audio = window.audio;
  out.slot_end_times = window.slot_end_times;
  for (const Image& f : window.visual) {
    out.visual.push_back(crop(downsample(f, config), off.top, off.left, config.crop_height, config.crop_width));
  }
  for (const Image& f : window.tactile) {
    out.tactile.push_back(crop(downsample(f, config), off.top, off.left, config.crop_height, config.crop_width));
  }
  return out;
}

void write_image(const Image& image, nn::FeatureMap& map, int index, const PreprocessConfig& config) {
  write_image_cropped(image, {0, 0}, map, index, config);
}

void write_image_cropped(const Image& down, CropOffset offset, nn::FeatureMap& map, int index,
                         const PreprocessConfig& config) {
  if (down.channels != map.channels || map.height != config.crop_height || map.width != config.crop_width ||
      offset.top + map.height > down.height || offset.left + map.width > down.width) {
    throw ShapeError("image " + std::to_string(down.height) + "x" + std::to_string(down.width) + "x" +
                     std::to_string(down.channels) + " does not fit model input " +
                     std::to_string(map.channels) + "x" + std::to_string(map.height) + "x" +
                     std::to_string(map.width));
  }
  const float scale = static_cast<float>(1.0 / (255.0 * config.pixel_std));
  const float shift = static_cast<float>(config.pixel_mean / config.pixel_std);
  const std::size_t base = static_cast<std::size_t>(index) * map.plane();
  for (int c = 0; c < map.channels; ++c) {
    float* dst = map.data.row(c).data() + base;
    for (int y = 0; y < map.height; ++y) {
      const std::uint8_t* src = down.at(offset.top + y, offset.left) + c;
      for (int x = 0; x < map.width; ++x) dst[y * map.width + x] = src[x * down.channels] * scale - shift;
    }
  }
}

void write_mel(const float* values, int n_mels, int n_frames, nn::FeatureMap& map, int index,
               const NormalizationStats& stats) {
  if (map.channels != 1 || map.height != n_mels || map.width != n_frames) {
    throw ShapeError("spectrogram " + std::to_string(n_mels) + "x" + std::to_string(n_frames) +
                     " does not fit model input " + std::to_string(map.height) + "x" +
                     std::to_string(map.width));
  }
  const float mean = static_cast<float>(stats.audio_mean);
  const float inv = static_cast<float>(1.0 / stats.audio_std);
  float* dst = map.data.row(0).data() + static_cast<std::size_t>(index) * map.plane();
  for (int i = 0; i < n_mels * n_frames; ++i) dst[i] = (values[i] - mean) * inv;
}

PolicyInput allocate_input(const PolicyConfig& config, int batch) {
  PolicyInput in;
  in.batch = batch;
  in.slots = config.fusion.slots;
  for (Modality m : config.fusion.modalities) {
    const EncoderConfig& e = config.encoder(m);
    in[m] = nn::FeatureMap(e.input_channels, batch * in.slots, e.height, e.width);
  }
  return in;
}

PolicyInput make_input(const std::vector<const ObservationWindow*>& windows, const PolicyConfig& config,
                       const NormalizationStats& stats, const PreprocessConfig& pre) {
  PolicyInput in = allocate_input(config, static_cast<int>(windows.size()));
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const ObservationWindow& w = *windows[b];
    if (w.slots() != in.slots) throw ShapeError("window slot count differs from the policy");
    for (int n = 0; n < in.slots; ++n) {
      const int idx = static_cast<int>(b) * in.slots + n;
      if (config.fusion.has(Modality::kVisual)) write_image(w.visual[n], in[Modality::kVisual], idx, pre);
      if (config.fusion.has(Modality::kTactile)) write_image(w.tactile[n], in[Modality::kTactile], idx, pre);
      if (config.fusion.has(Modality::kAudio)) {
        const auto& mel = w.audio[n];
        write_mel(mel.values.data(), mel.n_mels, mel.n_frames, in[Modality::kAudio], idx, stats);
      }
    }
  }
  return in;
}

}  // namespace mulsa::model
