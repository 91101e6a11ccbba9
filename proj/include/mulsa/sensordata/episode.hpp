#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mulsa/sensordata/action.hpp"
#include "mulsa/sensordata/observation.hpp"
#include "mulsa/sensordata/window.hpp"

namespace mulsa {

enum class EpisodeSource { kScripted, kTeleop, kRollout };

std::string to_string(EpisodeSource source);
EpisodeSource episode_source_from_string(std::string_view name);

struct EpisodeStep {
  Observation observation;
  Action action;
  double timestamp = 0.0;
  bool operator==(const EpisodeStep&) const = default;
};

struct EpisodeMetadata {
  Task task = Task::kPacking;
  std::string scenario;
  std::uint64_t seed = 0;
  EpisodeSource source = EpisodeSource::kScripted;
  nlohmann::json initial_condition = nlohmann::json::object();
  bool operator==(const EpisodeMetadata&) const = default;
};

struct Episode {
  EpisodeMetadata metadata;
  ActionSpec action_spec;
  std::vector<EpisodeStep> steps;
  nlohmann::json outcome = nlohmann::json::object();

  bool operator==(const Episode&) const = default;

  // Concatenated audio of all steps as a global-index track (steps must be
  // contiguous in time, as produced by the simulators).
  AudioTrack audio_track() const;
};

inline constexpr int kEpisodeFormatVersion = 1;

// Directory layout:
//   manifest.json          task, scenario, seed, source, spec, outcome, steps
//   visual/%06d.png        one RGB frame per step
//   tactile/%06d.png       one RGB frame per step
//   audio.wav              mono 16-bit PCM, all step chunks concatenated
//   aux.jsonl              one JSON object per step
void save_episode(const Episode& episode, const std::filesystem::path& directory);
Episode load_episode(const std::filesystem::path& directory);

// Loads only the manifest (no frames/audio); cheap metadata access.
nlohmann::json load_episode_manifest(const std::filesystem::path& directory);

// Dataset manifest: {"episodes": ["relative/or/absolute/dir", ...], ...}.
void save_dataset_manifest(const std::filesystem::path& path,
                           const std::vector<std::filesystem::path>& episodes,
                           const nlohmann::json& extra = nlohmann::json::object());
std::vector<std::filesystem::path> load_dataset_manifest(const std::filesystem::path& path);

}  // namespace mulsa
