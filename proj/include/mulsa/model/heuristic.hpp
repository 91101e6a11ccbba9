#pragma once

#include <array>

#include "mulsa/sensordata/action.hpp"

namespace mulsa::model {

struct HeuristicDecision {
  Action action;
  bool handover = false;
};

// Saturating move toward a fixed pre-insertion pose, one step per axis per
// tick. Control passes to the learned policy once every axis is within
// `tolerance` of the target.
HeuristicDecision heuristic_visual_policy(const std::array<double, 3>& peg_position,
                                          const std::array<double, 3>& target, double tolerance,
                                          const ActionSpec& spec = ActionSpec::packing());

}  // namespace mulsa::model
