#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mulsa/common/rng.hpp"
#include "mulsa/sensordata/action.hpp"
#include "mulsa/sensordata/observation.hpp"

namespace mulsa::sim {

// One simulator session. reset() returns the observation at t = 0; step()
// advances one 10 Hz tick. Observations carry the audio captured during the
// preceding tick.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual Task task() const = 0;
  virtual const ActionSpec& action_spec() const = 0;
  virtual std::vector<std::string> scenarios() const = 0;

  virtual Observation reset(const std::string& scenario, std::uint64_t seed) = 0;
  virtual Observation step(const Action& action) = 0;

  virtual bool terminated() const = 0;
  virtual int step_count() const = 0;
  virtual nlohmann::json outcome() const = 0;
  virtual nlohmann::json initial_condition() const = 0;
  // Ground-truth state, for logging and the teleop telemetry stream.
  virtual nlohmann::json state_json() const = 0;
};

// Builds the simulator for `task` from an optional scenario file (empty path
// means built-in defaults).
std::unique_ptr<Environment> make_environment(Task task, const std::string& scenario_file = "");

// Deterministic per-episode noise seed.
inline std::uint64_t noise_seed(std::uint64_t seed, int tick) {
  return mix_seed(mix_seed(seed, 0x6e6f697365ULL), static_cast<std::uint64_t>(tick));
}

}  // namespace mulsa::sim
