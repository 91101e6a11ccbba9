#include "mulsa/sensordata/episode.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mulsa/common/error.hpp"
#include "mulsa/common/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mulsa {

std::string to_string(EpisodeSource source) {
  switch (source) {
    case EpisodeSource::kScripted: return "scripted";
    case EpisodeSource::kTeleop: return "teleop";
    case EpisodeSource::kRollout: return "rollout";
  }
  return "scripted";
}

EpisodeSource episode_source_from_string(std::string_view name) {
  if (name == "scripted") return EpisodeSource::kScripted;
  if (name == "teleop") return EpisodeSource::kTeleop;
  if (name == "rollout") return EpisodeSource::kRollout;
  throw FormatError("unknown episode source '" + std::string(name) + "'");
}

AudioTrack Episode::audio_track() const {
  AudioTrack track;
  bool started = false;
  for (const auto& step : steps) {
    const auto& chunk = step.observation.audio;
    if (chunk.samples.empty()) continue;
    const auto start = sample_index_at(chunk.start_timestamp, chunk.sample_rate);
    if (!started) {
      track.sample_rate = chunk.sample_rate;
      track.first_index = start;
      started = true;
    }
    const auto end = track.end_index();
    for (std::int64_t k = end; k < start; ++k) track.samples.push_back(0);
    const auto skip = static_cast<std::size_t>(std::max<std::int64_t>(0, end - start));
    track.samples.insert(track.samples.end(), chunk.samples.begin() + std::min(skip, chunk.samples.size()),
                         chunk.samples.end());
  }
  return track;
}

namespace {

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.png", index);
  return buf;
}

std::size_t count_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) return 0;
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) ++n;
  }
  return n;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing file", path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt JSON: ") + e.what(), path.string());
  }
}

}  // namespace

void save_episode(const Episode& episode, const fs::path& directory) {
  fs::create_directories(directory / "visual");
  fs::create_directories(directory / "tactile");

  json steps = json::array();
  std::vector<std::int16_t> pcm;
  int rate = kCaptureAudioRate;
  std::ofstream aux(directory / "aux.jsonl", std::ios::trunc);
  if (!aux) throw FormatError("cannot write aux.jsonl", (directory / "aux.jsonl").string());
  for (std::size_t i = 0; i < episode.steps.size(); ++i) {
    const auto& step = episode.steps[i];
    const auto& obs = step.observation;
    if (step.action.class_index != encode_action(step.action.values, episode.action_spec)) {
      throw InvalidActionError("step " + std::to_string(i) + " action index/values disagree");
    }
    write_png((directory / "visual" / frame_name(i)).string(), obs.visual.image);
    write_png((directory / "tactile" / frame_name(i)).string(), obs.tactile.image);
    if (!obs.audio.samples.empty()) rate = obs.audio.sample_rate;
    steps.push_back({{"timestamp", step.timestamp},
                     {"action", step.action.class_index},
                     {"visual_timestamp", obs.visual.timestamp},
                     {"tactile_timestamp", obs.tactile.timestamp},
                     {"audio_offset", pcm.size()},
                     {"audio_count", obs.audio.samples.size()},
                     {"audio_start", obs.audio.start_timestamp},
                     {"audio_rate", obs.audio.sample_rate}});
    pcm.insert(pcm.end(), obs.audio.samples.begin(), obs.audio.samples.end());
    aux << json(obs.aux).dump() << '\n';
  }
  write_wav((directory / "audio.wav").string(), rate, pcm);

  json manifest = {{"format_version", kEpisodeFormatVersion},
                   {"task", to_string(episode.metadata.task)},
                   {"scenario", episode.metadata.scenario},
                   {"seed", episode.metadata.seed},
                   {"source", to_string(episode.metadata.source)},
                   {"initial_condition", episode.metadata.initial_condition},
                   {"action_spec", episode.action_spec},
                   {"outcome", episode.outcome},
                   {"step_count", episode.steps.size()},
                   {"steps", steps}};
  std::ofstream out(directory / "manifest.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest", (directory / "manifest.json").string());
  out << manifest.dump(1) << '\n';
}

json load_episode_manifest(const fs::path& directory) {
  return read_json_file(directory / "manifest.json");
}

Episode load_episode(const fs::path& directory) {
  const fs::path manifest_path = directory / "manifest.json";
  const json manifest = read_json_file(manifest_path);
  Episode ep;
  try {
    if (manifest.at("format_version").get<int>() != kEpisodeFormatVersion) {
      throw FormatError("unsupported episode format version", manifest_path.string());
    }
    ep.metadata.task = task_from_string(manifest.at("task").get<std::string>());
    ep.metadata.scenario = manifest.at("scenario").get<std::string>();
    ep.metadata.seed = manifest.at("seed").get<std::uint64_t>();
    ep.metadata.source = episode_source_from_string(manifest.at("source").get<std::string>());
    ep.metadata.initial_condition = manifest.at("initial_condition");
    ep.action_spec = manifest.at("action_spec").get<ActionSpec>();
    ep.outcome = manifest.at("outcome");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what(), manifest_path.string());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what(), manifest_path.string());
  }

  const auto step_count = manifest.value("step_count", static_cast<std::size_t>(0));
  const json& steps = manifest.at("steps");
  if (!steps.is_array() || steps.size() != step_count) {
    throw FormatError("manifest step list does not match step_count", manifest_path.string());
  }
  for (const char* sub : {"visual", "tactile"}) {
    const auto n = count_files(directory / sub);
    if (n != step_count) {
      throw FormatError("manifest declares " + std::to_string(step_count) + " steps but " + sub +
                            "/ holds " + std::to_string(n) + " files",
                        (directory / sub).string());
    }
  }

  const WavData wav = read_wav((directory / "audio.wav").string());
  std::vector<json> aux_rows;
  {
    std::ifstream aux(directory / "aux.jsonl");
    if (!aux) throw FormatError("missing aux.jsonl", (directory / "aux.jsonl").string());
    std::string line;
    while (std::getline(aux, line)) {
      if (line.empty()) continue;
      try {
        aux_rows.push_back(json::parse(line));
      } catch (const json::exception&) {
        throw FormatError("corrupt aux row", (directory / "aux.jsonl").string());
      }
    }
  }
  if (aux_rows.size() != step_count) {
    throw FormatError("aux.jsonl row count does not match step_count",
                      (directory / "aux.jsonl").string());
  }

  ep.steps.resize(step_count);
  for (std::size_t i = 0; i < step_count; ++i) {
    const json& s = steps[i];
    EpisodeStep& step = ep.steps[i];
    step.timestamp = s.at("timestamp").get<double>();
    step.action = Action::from_index(s.at("action").get<int>(), ep.action_spec);
    step.observation.visual.image = read_png((directory / "visual" / frame_name(i)).string());
    step.observation.visual.timestamp = s.at("visual_timestamp").get<double>();
    step.observation.tactile.image = read_png((directory / "tactile" / frame_name(i)).string());
    step.observation.tactile.timestamp = s.at("tactile_timestamp").get<double>();
    const auto offset = s.at("audio_offset").get<std::size_t>();
    const auto count = s.at("audio_count").get<std::size_t>();
    if (offset + count > wav.samples.size()) {
      throw FormatError("step " + std::to_string(i) + " audio range exceeds audio.wav",
                        (directory / "audio.wav").string());
    }
    auto& chunk = step.observation.audio;
    chunk.sample_rate = s.at("audio_rate").get<int>();
    chunk.start_timestamp = s.at("audio_start").get<double>();
    chunk.samples.assign(wav.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                         wav.samples.begin() + static_cast<std::ptrdiff_t>(offset + count));
    step.observation.aux = aux_rows[i].get<std::map<std::string, double>>();
  }
  return ep;
}

void save_dataset_manifest(const fs::path& path, const std::vector<fs::path>& episodes,
                           const json& extra) {
  json j = extra;
  json list = json::array();
  const fs::path base = path.parent_path();
  for (const auto& e : episodes) {
    list.push_back(e.is_absolute() ? fs::relative(e, base.empty() ? fs::current_path() : fs::absolute(base)).string()
                                   : e.string());
  }
  j["episodes"] = list;
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write dataset manifest", path.string());
  out << j.dump(1) << '\n';
}

std::vector<fs::path> load_dataset_manifest(const fs::path& path) {
  const json j = read_json_file(path);
  std::vector<fs::path> out;
  const fs::path base = path.parent_path();
  try {
    for (const auto& e : j.at("episodes")) {
      fs::path p = e.get<std::string>();
      out.push_back(p.is_absolute() ? p : base / p);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed dataset manifest: ") + e.what(), path.string());
  }
  return out;
}

}  // namespace mulsa
