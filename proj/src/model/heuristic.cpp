#include "mulsa/model/heuristic.hpp"

#include <cmath>

namespace mulsa::model {

HeuristicDecision heuristic_visual_policy(const std::array<double, 3>& peg_position,
                                          const std::array<double, 3>& target, double tolerance,
                                          const ActionSpec& spec) {
  std::vector<int> v(3, 0);
  bool within = true;
  for (int k = 0; k < 3; ++k) {
    const double err = target[k] - peg_position[k];
    if (std::abs(err) > tolerance) {
      within = false;
      v[k] = err > 0 ? 1 : -1;
    }
  }
  return {Action::from_values(v, spec), within};
}

}  // namespace mulsa::model
