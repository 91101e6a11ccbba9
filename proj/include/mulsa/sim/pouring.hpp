#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mulsa/sim/environment.hpp"

namespace mulsa::sim {

// Cup position is on a grid of x_step meters, the cup angle on a grid of
// phi_step degrees. Masses are integer milligrams so conservation is exact.
struct PouringConfig {
  double x_step = 0.005;
  double phi_step_deg = 2.0;
  int max_steps = 300;
  int target_mg = 40000;
  int full_mass_mg = 100000;
  double phi_crit_full_deg = 35.0;
  double phi_crit_empty_deg = 70.0;
  double flow_rate = 0.25;  // grams per degree above critical per tick
  int align_tol = 2;        // |cup_x - fixed_cup_x| < align_tol steps pours into the fixed cup
  double retreat_angle_deg = 5.0;
  int shift_max = 4;        // fixed cup offset in steps
  int fixed_nominal_x = 0;
  std::array<int, 2> start_x = {-18, -10};
  int x_half = 24;
  int phi_max_steps = 60;
  int cup_mass_mg = 20000;

  // Audio synthesis.
  double f_base = 1000.0;
  double k_pitch = 60.0;  // Hz per gram in the fixed cup
  double grain_amplitude = 0.15;
  double grain_decay = 0.004;
  double grains_per_gram = 8.0;
  double spill_frequency = 180.0;
  double spill_amplitude = 0.1;
  double epsilon = 0.002;

  static PouringConfig defaults() { return {}; }
  double phi_crit_deg(int mass_in_hand_mg) const;
  // Milligrams leaving the held cup at angle phi with the given in-hand mass.
  int flow_mg(int phi_steps, int mass_in_hand_mg) const;
};

void to_json(nlohmann::json& j, const PouringConfig& c);
void from_json(const nlohmann::json& j, PouringConfig& c);

struct PouringState {
  int cup_x = 0;
  int phi = 0;  // steps of phi_step_deg
  int mass_in_hand = 0;
  int mass_in_fixed = 0;
  int mass_spilled = 0;
  int initial_mass = 60000;
  int fixed_cup_x = 0;
  int step_count = 0;
  bool poured = false;
  bool terminated = false;

  double scale_reading_g() const { return mass_in_fixed / 1000.0; }
  bool operator==(const PouringState&) const = default;
};

struct PouringOutcome {
  double weight_error = 0.0;  // grams
  int steps_used = 0;
};

class PouringSim final : public Environment {
 public:
  explicit PouringSim(PouringConfig config = PouringConfig::defaults());

  Task task() const override { return Task::kPouring; }
  const ActionSpec& action_spec() const override { return spec_; }
  std::vector<std::string> scenarios() const override { return {"60g", "100g"}; }

  Observation reset(const std::string& scenario, std::uint64_t seed) override;
  Observation step(const Action& action) override;
  bool terminated() const override { return state_.terminated; }
  int step_count() const override { return state_.step_count; }
  nlohmann::json outcome() const override;
  nlohmann::json initial_condition() const override;
  nlohmann::json state_json() const override;

  const PouringState& state() const { return state_; }
  const PouringConfig& config() const { return config_; }
  PouringOutcome pouring_outcome() const;

  PouringState initial_state(int initial_mass_g, std::uint64_t seed) const;
  PouringState transition(const PouringState& s, const std::array<int, 2>& action) const;

  Image render_visual(const PouringState& s) const;
  Image render_tactile(const PouringState& s) const;
  AudioChunk synth_audio(const PouringState& s, const PouringState& prev, std::uint64_t seed) const;
  Observation observe(const PouringState& s, const PouringState& prev) const;

  // Torque about the grasp, in gram-lever units; drives the tactile shear.
  double grasp_torque(const PouringState& s) const;
  double pitch_hz(int mass_in_fixed_mg) const;

 private:
  PouringConfig config_;
  ActionSpec spec_;
  PouringState state_;
  std::uint64_t seed_ = 0;
};

int pouring_initial_mass_g(const std::string& scenario);

}  // namespace mulsa::sim
