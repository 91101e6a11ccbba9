#include "mulsa/sim/environment.hpp"

#include <fstream>

#include "mulsa/common/error.hpp"
#include "mulsa/sim/packing.hpp"
#include "mulsa/sim/pouring.hpp"

namespace mulsa::sim {

std::unique_ptr<Environment> make_environment(Task task, const std::string& scenario_file) {
  nlohmann::json j = nlohmann::json::object();
  if (!scenario_file.empty()) {
    std::ifstream in(scenario_file);
    if (!in) throw ConfigError("cannot open scenario file " + scenario_file);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("scenario file " + scenario_file + ": " + e.what());
    }
  }
  try {
    if (task == Task::kPouring) return std::make_unique<PouringSim>(j.get<PouringConfig>());
    return std::make_unique<PackingSim>(j.get<PackingConfig>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario file " + scenario_file + ": " + e.what());
  }
}

}  // namespace mulsa::sim
