#include "mulsa/sensordata/action.hpp"

#include <nlohmann/json.hpp>

#include "mulsa/common/error.hpp"

namespace mulsa {

std::string to_string(Task task) { return task == Task::kPacking ? "packing" : "pouring"; }

Task task_from_string(std::string_view name) {
  if (name == "packing") return Task::kPacking;
  if (name == "pouring") return Task::kPouring;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

int ActionSpec::class_count() const {
  int n = 1;
  for (int i = 0; i < dim_count(); ++i) n *= 3;
  return n;
}

ActionSpec ActionSpec::packing() {
  return ActionSpec{Task::kPacking, {"x", "y", "z"}, {0.005, 0.005, 0.005}};
}

ActionSpec ActionSpec::pouring() {
  // x: 5 mm per tick; phi: 2 degrees per tick.
  return ActionSpec{Task::kPouring, {"x", "phi"}, {0.005, 2.0 * 3.14159265358979323846 / 180.0}};
}

ActionSpec ActionSpec::for_task(Task task) {
  return task == Task::kPacking ? packing() : pouring();
}

int encode_action(std::span<const int> values, const ActionSpec& spec) {
  if (static_cast<int>(values.size()) != spec.dim_count()) {
    throw InvalidActionError("action has " + std::to_string(values.size()) +
                             " components, spec expects " + std::to_string(spec.dim_count()));
  }
  int index = 0;
  for (int v : values) {
    if (v < -1 || v > 1) {
      throw InvalidActionError("action component " + std::to_string(v) +
                               " outside {-1, 0, +1}");
    }
    index = index * 3 + (v + 1);
  }
  return index;
}

std::vector<int> decode_action(int class_index, const ActionSpec& spec) {
  if (class_index < 0 || class_index >= spec.class_count()) {
    throw InvalidActionError("class index " + std::to_string(class_index) +
                             " outside [0, " + std::to_string(spec.class_count()) + ")");
  }
  std::vector<int> values(spec.dim_count());
  for (int k = spec.dim_count() - 1; k >= 0; --k) {
    values[k] = class_index % 3 - 1;
    class_index /= 3;
  }
  return values;
}

Action Action::from_values(std::vector<int> values, const ActionSpec& spec) {
  const int index = encode_action(values, spec);
  return Action{std::move(values), index};
}

Action Action::from_index(int class_index, const ActionSpec& spec) {
  return Action{decode_action(class_index, spec), class_index};
}

Action Action::zero(const ActionSpec& spec) {
  return from_values(std::vector<int>(spec.dim_count(), 0), spec);
}

void to_json(nlohmann::json& j, const ActionSpec& spec) {
  j = nlohmann::json{{"task", to_string(spec.task)},
                     {"dims", spec.dims},
                     {"step_sizes", spec.step_sizes},
                     {"class_count", spec.class_count()}};
}

void from_json(const nlohmann::json& j, ActionSpec& spec) {
  spec.task = task_from_string(j.at("task").get<std::string>());
  spec.dims = j.at("dims").get<std::vector<std::string>>();
  spec.step_sizes = j.at("step_sizes").get<std::vector<double>>();
  if (spec.dims.size() != spec.step_sizes.size()) {
    throw FormatError("action spec dims/step_sizes length mismatch");
  }
}

}  // namespace mulsa
