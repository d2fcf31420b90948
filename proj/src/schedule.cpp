#include "incrseg/schedule.hpp"

#include <numeric>
#include <set>

#include "incrseg/error.hpp"

namespace incrseg {

const char* to_string(Protocol protocol) {
  return protocol == Protocol::overlapped ? "overlapped" : "disjoint";
}

Protocol parse_protocol(const std::string& text) {
  if (text == "overlapped") return Protocol::overlapped;
  if (text == "disjoint") return Protocol::disjoint;
  throw Error(ErrorCode::ConfigError, "unknown protocol '" + text + "'");
}

std::vector<int> TaskSchedule::classes_at(int step) const {
  if (step < 0 || step >= num_steps()) {
    throw Error(ErrorCode::ContractError, "step " + std::to_string(step) + " outside schedule");
  }
  const int begin = std::accumulate(step_sizes.begin(), step_sizes.begin() + step, 0);
  return {class_order.begin() + begin, class_order.begin() + begin + step_sizes[step]};
}

std::vector<int> TaskSchedule::classes_through(int step) const {
  return {class_order.begin(), class_order.begin() + learned_count(step)};
}

std::vector<int> TaskSchedule::classes_before(int step) const {
  if (step <= 0) return {};
  return classes_through(step - 1);
}

int TaskSchedule::learned_count(int step) const {
  if (step < 0 || step >= num_steps()) {
    throw Error(ErrorCode::ContractError, "step " + std::to_string(step) + " outside schedule");
  }
  return std::accumulate(step_sizes.begin(), step_sizes.begin() + step + 1, 0);
}

int TaskSchedule::step_of(int class_id) const {
  int seen = 0;
  for (int s = 0; s < num_steps(); ++s) {
    for (int i = 0; i < step_sizes[s]; ++i) {
      if (class_order[seen + i] == class_id) return s;
    }
    seen += step_sizes[s];
  }
  return -1;
}

TaskSchedule build_schedule(std::vector<int> class_order, std::vector<int> step_sizes, Protocol protocol) {
  if (step_sizes.empty()) throw Error(ErrorCode::ScheduleMismatch, "schedule has no steps");
  for (int size : step_sizes) {
    if (size <= 0) throw Error(ErrorCode::ScheduleMismatch, "step sizes must be positive");
  }
  const int total = std::accumulate(step_sizes.begin(), step_sizes.end(), 0);
  if (total != static_cast<int>(class_order.size())) {
    throw Error(ErrorCode::ScheduleMismatch, "step sizes sum to " + std::to_string(total) + " but " +
                                                 std::to_string(class_order.size()) + " classes are ordered");
  }
  std::set<int> seen;
  for (int id : class_order) {
    if (id == kBackground || id < 0) {
      throw Error(ErrorCode::ContractError, "class ID " + std::to_string(id) + " is reserved or negative");
    }
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateClass, "class " + std::to_string(id) + " repeated");
  }
  return TaskSchedule{std::move(class_order), std::move(step_sizes), protocol};
}

namespace {

LabeledSample keep_only(const LabeledSample& sample, const std::vector<int>& keep) {
  const std::set<int> allowed(keep.begin(), keep.end());
  LabeledSample out = sample;
  for (int& v : out.mask) {
    if (!allowed.count(v)) v = kBackground;
  }
  return out;
}

}  // namespace

LabeledSample remap_labels(const LabeledSample& sample, const TaskSchedule& schedule, int step) {
  return keep_only(sample, schedule.classes_at(step));
}

LabeledSample mask_unseen_classes(const LabeledSample& sample, const TaskSchedule& schedule, int step) {
  return keep_only(sample, schedule.classes_through(step));
}

std::vector<std::size_t> select_step_samples(const std::vector<LabeledSample>& samples,
                                             const TaskSchedule& schedule, int step) {
  const auto current = schedule.classes_at(step);
  const auto learned = schedule.classes_through(step);
  const std::set<int> current_set(current.begin(), current.end());
  const std::set<int> learned_set(learned.begin(), learned.end());
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bool has_current = false;
    bool only_learned = true;
    for (int v : samples[i].mask) {
      if (current_set.count(v)) has_current = true;
      if (v != kBackground && !learned_set.count(v)) only_learned = false;
    }
    if (!has_current) continue;
    if (schedule.protocol == Protocol::disjoint && !only_learned) continue;
    picked.push_back(i);
  }
  return picked;
}

}  // namespace incrseg
