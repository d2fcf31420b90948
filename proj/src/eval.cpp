#include "incrseg/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "incrseg/error.hpp"
#include "incrseg/png_io.hpp"

namespace incrseg {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

ConfusionMatrix::ConfusionMatrix(int num_labels) : n_(num_labels) {
  if (num_labels < 1) throw Error(ErrorCode::ContractError, "confusion matrix needs at least one label");
  counts_.assign(static_cast<std::size_t>(num_labels) * num_labels, 0);
}

std::size_t ConfusionMatrix::index(int truth, int pred) const {
  if (truth < 0 || truth >= n_ || pred < 0 || pred >= n_) {
    throw Error(ErrorCode::LabelRange, "label pair (" + std::to_string(truth) + "," + std::to_string(pred) +
                                           ") outside a " + std::to_string(n_) + "-label matrix");
  }
  return static_cast<std::size_t>(truth) * n_ + pred;
}

std::uint64_t ConfusionMatrix::row_sum(int c) const {
  std::uint64_t s = 0;
  for (int p = 0; p < n_; ++p) s += at(c, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int c) const {
  std::uint64_t s = 0;
  for (int t = 0; t < n_; ++t) s += at(t, c);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (std::uint64_t v : counts_) s += v;
  return s;
}

void ConfusionMatrix::add(int truth, int pred, std::uint64_t count) { counts_[index(truth, pred)] += count; }

void ConfusionMatrix::accumulate(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size()) throw Error(ErrorCode::ShapeError, "truth and prediction sizes differ");
  for (std::size_t i = 0; i < truth.size(); ++i) add(truth[i], pred[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw Error(ErrorCode::ShapeError, "cannot merge matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

ConfusionMatrix ConfusionMatrix::from_counts(int num_labels, std::vector<std::uint64_t> counts) {
  ConfusionMatrix cm(num_labels);
  if (counts.size() != cm.counts_.size()) {
    throw Error(ErrorCode::ShapeError, "expected " + std::to_string(cm.counts_.size()) + " counts, got " +
                                           std::to_string(counts.size()));
  }
  cm.counts_ = std::move(counts);
  return cm;
}

ClassIou class_iou(const ConfusionMatrix& cm, int class_id) {
  if (class_id < 0 || class_id >= cm.num_labels()) {
    throw Error(ErrorCode::ContractError, "class " + std::to_string(class_id) + " outside the matrix");
  }
  const std::uint64_t tp = cm.at(class_id, class_id);
  const std::uint64_t denom = cm.row_sum(class_id) + cm.col_sum(class_id) - tp;
  if (denom == 0) return {};
  return {static_cast<double>(tp) / static_cast<double>(denom), true};
}

MiouResult miou(const ConfusionMatrix& cm, const std::vector<int>& class_set) {
  if (class_set.empty()) throw Error(ErrorCode::ContractError, "mIoU over an empty class set");
  MiouResult out;
  double total = 0.0;
  int used = 0;
  for (int c : class_set) {
    const ClassIou r = class_iou(cm, c);
    if (!r.defined) {
      out.excluded.push_back(c);
      out.per_class[c] = kNaN;
      continue;
    }
    out.per_class[c] = r.iou;
    total += r.iou;
    ++used;
  }
  out.value = used > 0 ? total / used : kNaN;
  return out;
}

namespace {

double group_mean(const std::map<int, double>& per_class, const std::vector<int>& members) {
  double total = 0.0;
  int used = 0;
  for (int c : members) {
    auto it = per_class.find(c);
    if (it == per_class.end() || std::isnan(it->second)) continue;
    total += it->second;
    ++used;
  }
  return used > 0 ? total / used : kNaN;
}

}  // namespace

StepReport step_report(const ConfusionMatrix& cm, const TaskSchedule& schedule, int step, bool include_background) {
  if (step < 0 || step >= schedule.num_steps()) {
    throw Error(ErrorCode::ScheduleMismatch, "step " + std::to_string(step) + " outside the schedule");
  }
  StepReport report;
  report.step = step;
  report.learned_so_far = schedule.classes_through(step);

  std::vector<int> initial = schedule.classes_at(0);
  std::vector<int> incremented;
  for (int s = 1; s <= step; ++s) {
    for (int c : schedule.classes_at(s)) incremented.push_back(c);
  }
  std::vector<int> all = report.learned_so_far;
  if (include_background) {
    initial.insert(initial.begin(), kBackground);
    all.insert(all.begin(), kBackground);
  }

  std::vector<int> scored = report.learned_so_far;
  scored.insert(scored.begin(), kBackground);
  for (int c : scored) {
    const ClassIou r = class_iou(cm, c);
    report.per_class_iou[c] = r.defined ? r.iou : kNaN;
  }
  report.group_ious.initial = group_mean(report.per_class_iou, initial);
  report.group_ious.incremented = group_mean(report.per_class_iou, incremented);
  report.group_ious.all = group_mean(report.per_class_iou, all);
  return report;
}

std::vector<StepReport> stepwise_report(const std::vector<ConfusionMatrix>& history, const TaskSchedule& schedule,
                                        bool include_background) {
  if (history.size() > static_cast<std::size_t>(schedule.num_steps())) {
    throw Error(ErrorCode::ScheduleMismatch, std::to_string(history.size()) + " matrices for a " +
                                                 std::to_string(schedule.num_steps()) + "-step schedule");
  }
  std::vector<StepReport> out;
  for (std::size_t t = 0; t < history.size(); ++t) {
    out.push_back(step_report(history[t], schedule, static_cast<int>(t), include_background));
  }
  return out;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return in;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const std::vector<StepReport>& reports) {
  std::ofstream out = open_output(path);
  out << "step,class_or_group,iou\n";
  for (const StepReport& r : reports) {
    for (const auto& [c, iou] : r.per_class_iou) out << r.step << ',' << c << ',' << format_double(iou) << '\n';
    out << r.step << ",initial," << format_double(r.group_ious.initial) << '\n';
    out << r.step << ",incremented," << format_double(r.group_ious.incremented) << '\n';
    out << r.step << ",all," << format_double(r.group_ious.all) << '\n';
  }
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != "step,class_or_group,iou") {
    throw Error(ErrorCode::IoError, path.string() + " lacks the report header");
  }
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 3) throw Error(ErrorCode::IoError, "malformed report row '" + line + "'");
    rows.push_back({std::stoi(f[0]), f[1], f[2]});
  }
  return rows;
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  std::ofstream out = open_output(path);
  out << "truth";
  for (int p = 0; p < cm.num_labels(); ++p) out << ",pred_" << p;
  out << '\n';
  for (int t = 0; t < cm.num_labels(); ++t) {
    out << t;
    for (int p = 0; p < cm.num_labels(); ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
}

ConfusionMatrix read_confusion_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::IoError, path.string() + " is empty");
  const int n = static_cast<int>(split_csv(line).size()) - 1;
  std::vector<std::uint64_t> counts;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (static_cast<int>(f.size()) != n + 1) throw Error(ErrorCode::IoError, "malformed confusion row");
    for (int p = 1; p <= n; ++p) counts.push_back(std::stoull(f[p]));
    ++rows;
  }
  if (rows != n) throw Error(ErrorCode::IoError, path.string() + " is not square");
  return ConfusionMatrix::from_counts(n, std::move(counts));
}

namespace {

struct Canvas {
  RasterImage img;

  Canvas(int w, int h) : img{w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 255)} {}

  void set(int x, int y, const std::uint8_t* rgb) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    std::uint8_t* p = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
  }

  void dot(int x, int y, int r, const std::uint8_t* rgb) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) set(x + dx, y + dy, rgb);
    }
  }

  void line(double x0, double y0, double x1, double y1, int thickness, const std::uint8_t* rgb) {
    const int steps = static_cast<int>(std::ceil(std::max(std::fabs(x1 - x0), std::fabs(y1 - y0)))) + 1;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      dot(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))),
          thickness, rgb);
    }
  }
};

}  // namespace

void write_miou_plot(const std::filesystem::path& path, const std::vector<CurvePoint>& points) {
  if (points.empty()) throw Error(ErrorCode::ContractError, "no points to plot");
  constexpr int kW = 640, kH = 400, kLeft = 50, kRight = 20, kTop = 20, kBottom = 40;
  Canvas canvas(kW, kH);
  const std::uint8_t axis[3] = {0, 0, 0};
  const std::uint8_t grid[3] = {220, 220, 220};
  const std::uint8_t colours[3][3] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}};

  int lo = points.front().learned, hi = points.front().learned;
  for (const CurvePoint& p : points) {
    lo = std::min(lo, p.learned);
    hi = std::max(hi, p.learned);
  }
  if (hi == lo) ++hi;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](int learned) { return kLeft + pw * (learned - lo) / (hi - lo); };
  auto py = [&](double v) { return kTop + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  for (int k = 0; k <= 10; ++k) canvas.line(kLeft, py(k / 10.0), kW - kRight, py(k / 10.0), 0, grid);
  canvas.line(kLeft, kTop, kLeft, kH - kBottom, 0, axis);
  canvas.line(kLeft, kH - kBottom, kW - kRight, kH - kBottom, 0, axis);
  for (int c = lo; c <= hi; ++c) canvas.line(px(c), kH - kBottom, px(c), kH - kBottom + 5, 0, axis);

  for (int series = 0; series < 3; ++series) {
    auto value = [&](const CurvePoint& p) {
      return series == 0 ? p.initial : series == 1 ? p.incremented : p.all;
    };
    const CurvePoint* prev = nullptr;
    for (const CurvePoint& p : points) {
      if (std::isnan(value(p))) {
        prev = nullptr;
        continue;
      }
      if (prev) canvas.line(px(prev->learned), py(value(*prev)), px(p.learned), py(value(p)), 1, colours[series]);
      canvas.dot(static_cast<int>(px(p.learned)), static_cast<int>(py(value(p))), 3, colours[series]);
      prev = &p;
    }
  }
  write_png(path, canvas.img);
}

}  // namespace incrseg
