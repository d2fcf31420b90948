#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "incrseg/schedule.hpp"

namespace incrseg {

// Square count matrix over class IDs 0..K, rows = ground truth,
// columns = prediction.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_labels);

  int num_labels() const { return n_; }
  std::uint64_t at(int truth, int pred) const { return counts_[index(truth, pred)]; }
  std::uint64_t row_sum(int c) const;
  std::uint64_t col_sum(int c) const;
  std::uint64_t total() const;
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  void add(int truth, int pred, std::uint64_t count = 1);
  void accumulate(const std::vector<int>& truth, const std::vector<int>& pred);
  void merge(const ConfusionMatrix& other);

  // Builds a matrix from a row-major count list.
  static ConfusionMatrix from_counts(int num_labels, std::vector<std::uint64_t> counts);

  bool operator==(const ConfusionMatrix& other) const = default;

 private:
  std::size_t index(int truth, int pred) const;

  int n_ = 0;
  std::vector<std::uint64_t> counts_;
};

struct ClassIou {
  double iou = 0.0;
  bool defined = false;  // false when TP + FP + FN = 0
};

ClassIou class_iou(const ConfusionMatrix& cm, int class_id);

struct MiouResult {
  double value = 0.0;         // NaN when every class is excluded
  std::vector<int> excluded;  // classes with a zero denominator
  std::map<int, double> per_class;
};

MiouResult miou(const ConfusionMatrix& cm, const std::vector<int>& class_set);

struct GroupIous {
  double initial = 0.0;      // step-0 classes
  double incremented = 0.0;  // classes added after step 0; NaN at step 0
  double all = 0.0;          // every learned class
};

struct StepReport {
  int step = 0;
  std::map<int, double> per_class_iou;  // NaN for undefined classes
  GroupIous group_ious;
  std::vector<int> learned_so_far;  // foreground classes in learning order
};

// Group IoUs are means of the defined member IoUs. Background joins the
// initial and all groups when include_background is set.
std::vector<StepReport> stepwise_report(const std::vector<ConfusionMatrix>& history, const TaskSchedule& schedule,
                                        bool include_background = true);

StepReport step_report(const ConfusionMatrix& cm, const TaskSchedule& schedule, int step,
                       bool include_background = true);

// Report CSV with header step,class_or_group,iou.
void write_report_csv(const std::filesystem::path& path, const std::vector<StepReport>& reports);

struct ReportRow {
  int step = 0;
  std::string key;  // class ID or group name
  std::string iou;  // verbatim text from the file
};

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);
ConfusionMatrix read_confusion_csv(const std::filesystem::path& path);

// Shortest text that parses back to the same double; "nan" for NaN.
std::string format_double(double value);

// One point per step: number of learned foreground classes and group mIoU.
struct CurvePoint {
  int learned = 0;
  double initial = 0.0;
  double incremented = 0.0;
  double all = 0.0;
};

// Line chart of the three group series against the learned-class count.
void write_miou_plot(const std::filesystem::path& path, const std::vector<CurvePoint>& points);

}  // namespace incrseg
