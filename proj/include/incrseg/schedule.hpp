#pragma once

#include <string>
#include <vector>

#include "incrseg/tensor.hpp"

namespace incrseg {

inline constexpr int kBackground = 0;

enum class Protocol { overlapped, disjoint };

const char* to_string(Protocol protocol);
Protocol parse_protocol(const std::string& text);

// Ordered class partitions per incremental step. Step 0 is the initial step.
struct TaskSchedule {
  std::vector<int> class_order;  // excludes background
  std::vector<int> step_sizes;
  Protocol protocol = Protocol::overlapped;

  int num_steps() const { return static_cast<int>(step_sizes.size()); }
  int num_classes() const { return static_cast<int>(class_order.size()); }

  // C^t: classes introduced at `step`.
  std::vector<int> classes_at(int step) const;
  // C^{0:t}: every class learned up to and including `step`.
  std::vector<int> classes_through(int step) const;
  // C^{0:t-1}: classes learned before `step` (empty at step 0).
  std::vector<int> classes_before(int step) const;
  // Number of foreground classes known after `step`.
  int learned_count(int step) const;
  // Step at which `class_id` is introduced, or -1 when it is not scheduled.
  int step_of(int class_id) const;
};

TaskSchedule build_schedule(std::vector<int> class_order, std::vector<int> step_sizes, Protocol protocol);

struct LabeledSample {
  std::string name;
  Tensor image;  // C×H×W
  int height = 0;
  int width = 0;
  std::vector<int> mask;  // H×W class IDs, 0 = background

  int label_at(int y, int x) const { return mask[static_cast<std::size_t>(y) * width + x]; }
};

// Zeroes every pixel whose class is not introduced at `step`.
LabeledSample remap_labels(const LabeledSample& sample, const TaskSchedule& schedule, int step);

// Maps classes learned up to `step` to themselves and everything else to
// background. Used for evaluation after a step.
LabeledSample mask_unseen_classes(const LabeledSample& sample, const TaskSchedule& schedule, int step);

// Indices of the samples that form the training set of `step` under the
// schedule protocol. Overlapped: the image holds at least one pixel of C^t.
// Disjoint: additionally every labelled pixel belongs to C^{0:t}.
std::vector<std::size_t> select_step_samples(const std::vector<LabeledSample>& samples,
                                             const TaskSchedule& schedule, int step);

}  // namespace incrseg
