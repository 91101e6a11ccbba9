#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mulsa {

enum class Task { kPacking, kPouring };

std::string to_string(Task task);
Task task_from_string(std::string_view name);

// Discrete displacement command space: each dimension takes -1, 0 or +1, and
// the full vector is addressed by a single base-3 class index.
struct ActionSpec {
  Task task = Task::kPacking;
  std::vector<std::string> dims;
  std::vector<double> step_sizes;  // meters or radians per tick

  int dim_count() const { return static_cast<int>(dims.size()); }
  int class_count() const;

  static ActionSpec packing();
  static ActionSpec pouring();
  static ActionSpec for_task(Task task);

  bool operator==(const ActionSpec&) const = default;
};

// class_index = sum_k (values[k] + 1) * 3^(dims - 1 - k)
int encode_action(std::span<const int> values, const ActionSpec& spec);
std::vector<int> decode_action(int class_index, const ActionSpec& spec);

struct Action {
  std::vector<int> values;
  int class_index = 0;

  static Action from_values(std::vector<int> values, const ActionSpec& spec);
  static Action from_index(int class_index, const ActionSpec& spec);
  static Action zero(const ActionSpec& spec);

  bool operator==(const Action&) const = default;
};

void to_json(nlohmann::json& j, const ActionSpec& spec);
void from_json(const nlohmann::json& j, ActionSpec& spec);

}  // namespace mulsa
