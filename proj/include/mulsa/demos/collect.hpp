#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mulsa/demos/experts.hpp"
#include "mulsa/sensordata/episode.hpp"
#include "mulsa/sim/environment.hpp"

namespace mulsa::demos {

struct CollectOptions {
  Task task = Task::kPacking;
  std::vector<std::string> scenarios;  // empty means all of the task's scenarios
  int episodes_per_scenario = 10;
  std::uint64_t seed = 0;
  double noise_rate = 0.05;
  std::string scenario_file;
};

struct CollectResult {
  std::vector<std::filesystem::path> episodes;
  std::filesystem::path manifest;
  int failed = 0;
};

// Seed of the i-th episode of a scenario within a collection.
std::uint64_t episode_seed(std::uint64_t collection_seed, int scenario_index, int episode_index);

// Runs one expert episode. Every step pairs the observation with the action
// taken from it; the terminal observation is not recorded.
Episode run_expert_episode(sim::Environment& env, const std::string& scenario, std::uint64_t seed,
                           double noise_rate);

// Writes <out>/<scenario>/ep_%04d directories and <out>/dataset.json.
// Simulator failures are recorded as failed episodes, not raised.
CollectResult collect(const CollectOptions& options, const std::filesystem::path& out,
                      const std::function<void(const std::string&)>& log = {});

}  // namespace mulsa::demos
