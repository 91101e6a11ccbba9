#pragma once

#include <cstdint>
#include <memory>

#include "mulsa/common/rng.hpp"
#include "mulsa/sensordata/action.hpp"
#include "mulsa/sim/environment.hpp"
#include "mulsa/sim/packing.hpp"
#include "mulsa/sim/pouring.hpp"

namespace mulsa::demos {

struct ExpertConfig {
  Task task = Task::kPacking;
  double noise_rate = 0.05;  // probability of a uniformly random class per tick
  std::uint64_t seed = 0;

  void validate() const;
};

// Scripted experts read the simulator's ground truth.
Action packing_expert(const sim::PackingSim& sim, const sim::PackingState& s);

// Once the expert starts retreating it keeps retreating.
struct PouringPhase {
  bool retreating = false;
};
Action pouring_expert(const sim::PouringSim& sim, const sim::PouringState& s, PouringPhase& phase);

// Final fixed-cup mass if the cup retreats from `s` starting this tick.
int pouring_mass_after_retreat(const sim::PouringConfig& cfg, sim::PouringState s);

class Expert {
 public:
  explicit Expert(ExpertConfig config);

  // Clean action with probability 1 - noise_rate, otherwise a random class.
  Action act(const sim::Environment& env);
  bool last_was_noise() const { return last_noise_; }

 private:
  ExpertConfig config_;
  Rng rng_;
  bool last_noise_ = false;
  PouringPhase pouring_phase_;
};

}  // namespace mulsa::demos
