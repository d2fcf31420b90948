#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "incrseg/error.hpp"
#include "incrseg/schedule.hpp"

using namespace incrseg;

namespace {

std::vector<int> range(int lo, int hi) {
  std::vector<int> v(static_cast<std::size_t>(hi - lo + 1));
  std::iota(v.begin(), v.end(), lo);
  return v;
}

LabeledSample mask_sample(int h, int w, std::vector<int> mask) {
  LabeledSample s;
  s.name = "s";
  s.height = h;
  s.width = w;
  s.image = Tensor(Shape{3, h, w});
  s.mask = std::move(mask);
  return s;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::ContractError;
}

}  // namespace

TEST_CASE("15-1 schedule over 20 classes") {
  const TaskSchedule s = build_schedule(range(1, 20), {15, 1, 1, 1, 1, 1}, Protocol::overlapped);
  CHECK(s.num_steps() == 6);
  CHECK(s.classes_at(0) == range(1, 15));
  CHECK(s.classes_at(5) == std::vector<int>{20});
  CHECK(s.classes_before(2) == range(1, 16));
  CHECK(s.classes_through(2) == range(1, 17));
  CHECK(s.learned_count(3) == 18);
  CHECK(s.step_of(16) == 1);
  CHECK(s.step_of(21) == -1);
}

TEST_CASE("single-class schedule") {
  const TaskSchedule s = build_schedule({1}, {1}, Protocol::overlapped);
  CHECK(s.num_steps() == 1);
  CHECK(s.classes_at(0) == std::vector<int>{1});
  CHECK(s.classes_before(0).empty());
}

TEST_CASE("class order is respected") {
  const TaskSchedule s = build_schedule({3, 1, 2}, {2, 1}, Protocol::disjoint);
  CHECK(s.classes_at(0) == std::vector<int>{3, 1});
  CHECK(s.classes_at(1) == std::vector<int>{2});
}

TEST_CASE("schedule validation errors") {
  CHECK(code_of([] { build_schedule({1, 2, 3}, {2, 2}, Protocol::overlapped); }) == ErrorCode::ScheduleMismatch);
  CHECK(code_of([] { build_schedule({1, 2, 2}, {2, 1}, Protocol::overlapped); }) == ErrorCode::DuplicateClass);
  CHECK(code_of([] { build_schedule({0, 1}, {1, 1}, Protocol::overlapped); }) == ErrorCode::ContractError);
  CHECK(code_of([] { build_schedule({1, 2}, {2, 0}, Protocol::overlapped); }) == ErrorCode::ScheduleMismatch);
  CHECK(code_of([] { build_schedule({}, {}, Protocol::overlapped); }) == ErrorCode::ScheduleMismatch);
}

TEST_CASE("steps partition the class order") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> order = range(1, 12);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> sizes;
    for (int left = 12; left > 0;) {
      const int k = std::uniform_int_distribution<int>(1, left)(rng);
      sizes.push_back(k);
      left -= k;
    }
    const TaskSchedule s = build_schedule(order, sizes, Protocol::overlapped);
    std::set<int> seen;
    for (int t = 0; t < s.num_steps(); ++t) {
      for (int c : s.classes_at(t)) {
        CHECK(seen.insert(c).second);
      }
    }
    CHECK(seen.size() == 12);
  }
}

TEST_CASE("remap_labels keeps only the current step") {
  const TaskSchedule s = build_schedule(range(1, 20), {15, 1, 1, 1, 1, 1}, Protocol::overlapped);
  const LabeledSample in = mask_sample(1, 4, {1, 16, 0, 16});
  CHECK(remap_labels(in, s, 1).mask == std::vector<int>{0, 16, 0, 16});

  const LabeledSample bg = mask_sample(2, 2, {0, 0, 0, 0});
  CHECK(remap_labels(bg, s, 3).mask == bg.mask);
}

TEST_CASE("remap_labels agrees with a per-pixel filter") {
  const TaskSchedule s = build_schedule({2, 1, 3}, {2, 1}, Protocol::overlapped);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> label(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> mask(36);
    for (int& v : mask) v = label(rng);
    const LabeledSample in = mask_sample(6, 6, mask);
    for (int step = 0; step < 2; ++step) {
      const std::vector<int> now = s.classes_at(step);
      const LabeledSample out = remap_labels(in, s, step);
      for (std::size_t i = 0; i < mask.size(); ++i) {
        const bool keep = std::find(now.begin(), now.end(), mask[i]) != now.end();
        CHECK(out.mask[i] == (keep ? mask[i] : 0));
      }
    }
  }
}

TEST_CASE("mask_unseen_classes hides future classes only") {
  const TaskSchedule s = build_schedule({1, 2, 3}, {1, 1, 1}, Protocol::overlapped);
  const LabeledSample in = mask_sample(1, 4, {1, 2, 3, 0});
  CHECK(mask_unseen_classes(in, s, 1).mask == std::vector<int>{1, 2, 0, 0});
}

TEST_CASE("step sample selection") {
  const TaskSchedule over = build_schedule({1, 2, 3}, {1, 1, 1}, Protocol::overlapped);
  const TaskSchedule disj = build_schedule({1, 2, 3}, {1, 1, 1}, Protocol::disjoint);
  const std::vector<LabeledSample> samples{
      mask_sample(1, 2, {1, 0}),  // 0: class 1 only
      mask_sample(1, 2, {1, 2}),  // 1: classes 1 and 2
      mask_sample(1, 2, {2, 3}),  // 2: classes 2 and 3
      mask_sample(1, 2, {3, 0}),  // 3: class 3 only
      mask_sample(1, 2, {0, 0}),  // 4: background only
  };
  CHECK(select_step_samples(samples, over, 0) == std::vector<std::size_t>{0, 1});
  CHECK(select_step_samples(samples, over, 1) == std::vector<std::size_t>{1, 2});
  CHECK(select_step_samples(samples, over, 2) == std::vector<std::size_t>{2, 3});

  CHECK(select_step_samples(samples, disj, 0) == std::vector<std::size_t>{0});
  CHECK(select_step_samples(samples, disj, 1) == std::vector<std::size_t>{1});
  CHECK(select_step_samples(samples, disj, 2) == std::vector<std::size_t>{2, 3});

  std::set<std::size_t> seen;
  for (int t = 0; t < 3; ++t) {
    for (std::size_t i : select_step_samples(samples, disj, t)) CHECK(seen.insert(i).second);
  }
}
