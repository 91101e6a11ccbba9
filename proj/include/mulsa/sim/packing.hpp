#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mulsa/sim/environment.hpp"

namespace mulsa::sim {

enum class PackingScenario { kHardSlanted, kSoftSlanted, kLeftFlat, kBackFlat };
enum class TiltDirection { kNone, kLeft, kRight, kBack, kFront };
enum class ContactKind { kNone, kBump, kWall, kFloor };
enum class PackingFailure { kNone, kTimeout, kStuckOnHard, kOutOfBounds };

std::string to_string(PackingScenario s);
PackingScenario packing_scenario_from_string(const std::string& name);
std::string to_string(TiltDirection d);
TiltDirection tilt_direction_from_string(const std::string& name);
std::string to_string(ContactKind c);
std::string to_string(PackingFailure f);

// Axis-aligned block of grid columns, occupying z in [0, top).
struct Block {
  char axis = 'x';  // the block spans [min, max] along this axis, the whole interior along the other
  int min = 0;
  int max = 0;
  int top = 0;
};

struct BumpConfig {
  std::string bump_type;  // "slanted" or "flat"
  bool hard = true;
  Block bump_pose;
  TiltDirection tilt = TiltDirection::kNone;
  double tilt_magnitude = 0.0;  // radians
  // Rigid supports that are not rendered in any modality.
  std::vector<Block> ledges;
};

// Geometry is on an integer grid of step_size meters. The peg is a single
// column whose bottom sits at `z`.
struct PackingConfig {
  double step_size = 0.005;
  int max_steps = 200;
  int workspace_half = 30;  // x, y in [-30, 30]
  int workspace_top = 40;   // z in [0, 40]
  int interior_half = 4;    // interior |x|, |y| <= 4, walls at 5
  int wall_height = 12;
  int peg_length = 10;
  int k_soft = 3;
  int k_hard = 5;
  double max_tilt = 0.5;
  std::array<int, 2> start_xy = {-12, 12};
  std::array<int, 2> start_z = {16, 28};
  std::array<int, 3> pre_insertion = {-2, 2, 14};

  // Audio synthesis.
  double A_hard = 0.5;
  double A_soft = 0.06;
  double epsilon = 0.002;
  double tau_hard = 0.015;
  double tau_soft = 0.03;
  double scrape_gain = 0.02;

  std::map<std::string, BumpConfig> bumps;

  static PackingConfig defaults();
  const BumpConfig& bump(PackingScenario s) const;
};

void to_json(nlohmann::json& j, const Block& b);
void from_json(const nlohmann::json& j, Block& b);
void to_json(nlohmann::json& j, const PackingConfig& c);
void from_json(const nlohmann::json& j, PackingConfig& c);

struct PackingState {
  std::array<int, 3> cell = {0, 0, 0};
  TiltDirection tilt = TiltDirection::kNone;
  double tilt_magnitude = 0.0;
  PackingScenario scenario = PackingScenario::kHardSlanted;
  ContactKind contact = ContactKind::kNone;
  bool contact_soft = false;
  double contact_force = 0.0;
  int step_count = 0;
  int push_count = 0;
  bool passed_bump = false;
  bool stuck = false;
  bool success = false;
  PackingFailure failure = PackingFailure::kNone;
  bool terminated = false;

  std::array<double, 3> position(double step_size) const;
  bool operator==(const PackingState&) const = default;
};

struct PackingOutcome {
  bool success = false;
  int steps_used = 0;
  PackingFailure failure_mode = PackingFailure::kNone;
};

class PackingSim final : public Environment {
 public:
  explicit PackingSim(PackingConfig config = PackingConfig::defaults());

  Task task() const override { return Task::kPacking; }
  const ActionSpec& action_spec() const override { return spec_; }
  std::vector<std::string> scenarios() const override;

  Observation reset(const std::string& scenario, std::uint64_t seed) override;
  Observation step(const Action& action) override;
  bool terminated() const override { return state_.terminated; }
  int step_count() const override { return state_.step_count; }
  nlohmann::json outcome() const override;
  nlohmann::json initial_condition() const override;
  nlohmann::json state_json() const override;

  const PackingState& state() const { return state_; }
  const PackingConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  PackingOutcome packing_outcome() const;

  PackingState initial_state(PackingScenario scenario, std::uint64_t seed) const;
  // Pure transition; does not touch the session.
  PackingState transition(const PackingState& s, const std::array<int, 3>& action) const;

  // Height of the obstacles under a column as seen by a peg in state `s`.
  int column_height(const PackingState& s, int x, int y) const;
  bool in_interior(int x, int y) const;

  Image render_visual(const PackingState& s) const;
  Image render_tactile(const PackingState& s) const;
  AudioChunk synth_audio(const PackingState& s, const PackingState& prev, std::uint64_t seed) const;
  Observation observe(const PackingState& s, const PackingState& prev) const;

 private:
  PackingConfig config_;
  ActionSpec spec_;
  PackingState state_;
  std::uint64_t seed_ = 0;
};

}  // namespace mulsa::sim
