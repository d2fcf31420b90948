#include "incrseg/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "incrseg/checkpoint.hpp"
#include "incrseg/error.hpp"

namespace incrseg {

namespace fs = std::filesystem;

namespace {

fs::path step_dir(const fs::path& run_dir, int step) { return run_dir / ("step_" + std::to_string(step)); }

void log_line(const RunOptions& options, const std::string& text) {
  if (options.log) *options.log << text << std::endl;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  ExperimentData data;
  if (d.kind == DatasetConfig::Kind::synthetic) {
    data.train = generate_synthetic_dataset(d.seed, d.synthetic);
    SyntheticSpec val_spec = d.synthetic;
    val_spec.images_per_class = d.val_images_per_class;
    data.val = generate_synthetic_dataset(d.seed ^ 0x76616c6964617465ull, val_spec);
  } else {
    data.train = load_voc_format(d.train_root, cfg.schedule);
    data.val = load_voc_format(d.val_root, cfg.schedule);
  }
  return data;
}

fs::path run_directory(const ExperimentConfig& cfg, const RunOptions& options) {
  fs::path root = cfg.output_dir;
  if (const char* env = std::getenv("INCRSEG_OUT"); env && *env) root = env;
  if (options.output_root) root = *options.output_root;
  return root / config_hash(cfg);
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out = open_output(path);
  out << "iter,lr,seg,il_d,ol_d,dada_total,arcl,total,arcl_classes_used,arcl_skipped\n";
  for (const MetricsRow& r : rows) {
    out << r.iter << ',' << format_double(r.lr) << ',' << format_double(r.seg) << ',' << format_double(r.il_d) << ','
        << format_double(r.ol_d) << ',' << format_double(r.dada_total) << ',' << format_double(r.arcl) << ','
        << format_double(r.total) << ',' << r.arcl_classes_used << ',' << r.arcl_skipped << '\n';
  }
}

namespace {

// Latest step t such that steps 0..t all hold a checkpoint.
int last_complete_step(const fs::path& run_dir, int num_steps) {
  int last = -1;
  for (int t = 0; t < num_steps; ++t) {
    const fs::path dir = step_dir(run_dir, t);
    if (!fs::exists(dir / "model.ckpt") || !fs::exists(dir / "confusion.csv")) break;
    last = t;
  }
  return last;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  ExperimentReport report;
  report.config_hash = config_hash(cfg);
  report.run_dir = run_directory(cfg, options);
  const TaskSchedule& schedule = cfg.schedule;
  int steps = schedule.num_steps();
  if (options.max_steps) {
    if (*options.max_steps < 1) throw Error(ErrorCode::ConfigError, "--steps must be >= 1");
    steps = std::min(steps, *options.max_steps);
  }

  fs::create_directories(report.run_dir);
  const fs::path config_path = report.run_dir / "config.json";
  if (options.resume && fs::exists(config_path)) {
    const std::string stored = config_hash(load_config(config_path));
    if (stored != report.config_hash) {
      throw Error(ErrorCode::ResumeMismatch, "run directory holds config " + stored + ", current config is " +
                                                 report.config_hash);
    }
  }
  open_output(config_path) << std::setw(2) << to_json(cfg) << '\n';

  if (!options.resume) {
    for (const auto& entry : fs::directory_iterator(report.run_dir)) {
      if (entry.is_directory() && entry.path().filename().string().rfind("step_", 0) == 0) {
        fs::remove_all(entry.path());
      }
    }
  }

  TrainState state;
  if (options.resume) {
    const int last = last_complete_step(report.run_dir, steps);
    if (last >= 0) {
      const Checkpoint ckpt = load_checkpoint(step_dir(report.run_dir, last) / "model.ckpt");
      if (ckpt.config_hash != report.config_hash) {
        throw Error(ErrorCode::ResumeMismatch, "checkpoint of step " + std::to_string(last) + " belongs to config " +
                                                   ckpt.config_hash);
      }
      if (ckpt.step != last || ckpt.classes_learned != schedule.classes_through(last)) {
        throw Error(ErrorCode::ResumeMismatch, "checkpoint of step " + std::to_string(last) +
                                                   " does not match the schedule");
      }
      for (int t = 0; t <= last; ++t) {
        report.history.push_back(read_confusion_csv(step_dir(report.run_dir, t) / "confusion.csv"));
      }
      state.model = restore_model(ckpt);
      state.snapshot = freeze_snapshot(state.model, last);
      state.step = last + 1;
      report.resumed_after = last;
      log_line(options, "resuming after step " + std::to_string(last));
    }
  }
  if (state.step == 0) {
    state.model = TapModel(cfg.model, schedule.learned_count(0), init_seed(cfg.train.seed));
  }

  const ExperimentData data = state.step < steps ? load_experiment_data(cfg) : ExperimentData{};
  StepOptions step_options;
  step_options.include_background = cfg.eval.include_background;
  while (state.step < steps) {
    const int t = state.step;
    const fs::path dir = step_dir(report.run_dir, t);
    fs::create_directories(dir);
    fs::remove(dir / "model.ckpt");
    StepOutcome outcome = train_incremental_step(state, data.train, data.val, schedule, cfg.train, step_options);
    write_metrics_csv(dir / "metrics.csv", outcome.metrics);
    write_report_csv(dir / "report.csv", {outcome.report});
    write_confusion_csv(dir / "confusion.csv", outcome.confusion);
    save_checkpoint(dir / "model.ckpt", state.model, t, schedule.classes_through(t), report.config_hash);
    report.history.push_back(outcome.confusion);
    std::ostringstream line;
    line << "step " << t << ": initial " << format_double(outcome.report.group_ious.initial) << ", incremented "
         << format_double(outcome.report.group_ious.incremented) << ", all "
         << format_double(outcome.report.group_ious.all);
    log_line(options, line.str());
  }

  report.reports = stepwise_report(report.history, schedule, cfg.eval.include_background);
  write_report_csv(report.run_dir / "report.csv", report.reports);
  write_report_plot(load_report_table(report.run_dir), report.run_dir / "miou.png");
  return report;
}

ExperimentReport run_experiment(const fs::path& config_file, const RunOptions& options) {
  return run_experiment(load_config(config_file), options);
}

std::vector<ReportTableRow> load_report_table(const fs::path& run_dir) {
  std::map<int, fs::path> files;
  std::error_code ec;
  if (fs::is_directory(run_dir, ec)) {
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("step_", 0) != 0 || !fs::exists(entry.path() / "report.csv")) continue;
      try {
        files[std::stoi(name.substr(5))] = entry.path() / "report.csv";
      } catch (const std::exception&) {
        continue;
      }
    }
  }
  if (files.empty()) throw Error(ErrorCode::ContractError, "no step reports under " + run_dir.string());
  std::vector<ReportTableRow> rows;
  for (const auto& [step, path] : files) {
    ReportTableRow row;
    row.step = step;
    for (const ReportRow& r : read_report_csv(path)) {
      if (r.key == "initial") {
        row.initial = r.iou;
      } else if (r.key == "incremented") {
        row.incremented = r.iou;
      } else if (r.key == "all") {
        row.all = r.iou;
      } else if (r.key != "0") {
        ++row.learned;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

std::string render_report_table(const std::vector<ReportTableRow>& rows) {
  std::size_t w = 11;
  for (const auto& r : rows) w = std::max({w, r.initial.size(), r.incremented.size(), r.all.size()});
  std::ostringstream out;
  out << std::left << std::setw(6) << "step" << std::setw(9) << "learned" << std::setw(static_cast<int>(w) + 2)
      << "initial" << std::setw(static_cast<int>(w) + 2) << "incremented" << "all\n";
  for (const auto& r : rows) {
    out << std::setw(6) << r.step << std::setw(9) << r.learned << std::setw(static_cast<int>(w) + 2) << r.initial
        << std::setw(static_cast<int>(w) + 2) << r.incremented << r.all << '\n';
  }
  return out.str();
}

void write_report_plot(const std::vector<ReportTableRow>& rows, const fs::path& png_path) {
  std::vector<CurvePoint> points;
  for (const auto& r : rows) points.push_back({r.learned, std::stod(r.initial), std::stod(r.incremented), std::stod(r.all)});
  write_miou_plot(png_path, points);
}

void dump_thresholds(const ExperimentConfig& cfg, const fs::path& run_dir, int step, std::ostream& out) {
  const TaskSchedule& schedule = cfg.schedule;
  if (step < 1 || step >= schedule.num_steps()) {
    throw Error(ErrorCode::ContractError, "thresholds exist for steps 1.." + std::to_string(schedule.num_steps() - 1));
  }
  const Checkpoint ckpt = load_checkpoint(step_dir(run_dir, step - 1) / "model.ckpt");
  const TapModel snapshot = restore_model(ckpt).clone(false);
  const ExperimentData data = load_experiment_data(cfg);
  const ChannelMap channels(schedule);
  std::vector<LabeledSample> samples;
  for (std::size_t i : select_step_samples(data.train, schedule, step)) {
    samples.push_back(remap_labels(data.train[i], schedule, step));
  }
  DcplConfig dcpl = cfg.train.dcpl;
  dcpl.mode = PseudoLabelMode::dynamic;
  std::vector<int> old_channels;
  for (int c = 1; c <= schedule.learned_count(step - 1); ++c) old_channels.push_back(c);

  out << "batch,class_id,u_low,u_high,u_mean,n_c,tau,branch\n";
  const std::size_t bs = static_cast<std::size_t>(cfg.train.batch_size);
  for (std::size_t start = 0, b = 0; start < samples.size(); start += bs, ++b) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(samples.size(), start + bs); ++i) idx.push_back(i);
    const Batch batch = make_batch(samples, idx, std::vector<bool>(idx.size(), false), channels);
    const Tensor probs = ops::softmax_channels(snapshot.forward(batch.images, false).logits.value());
    std::vector<ThresholdRecord> records;
    pseudo_label_thresholds(probs, old_channels, dcpl, &records);
    for (const ThresholdRecord& r : records) {
      const bool def = r.stats.defined;
      out << b << ',' << channels.class_of(r.stats.class_id) << ','
          << (def ? format_double(r.stats.u_low) : "nan") << ',' << (def ? format_double(r.stats.u_high) : "nan")
          << ',' << (def ? format_double(r.stats.u_mean) : "nan") << ',' << r.stats.pixel_count << ','
          << format_double(r.threshold.tau) << ',' << to_string(r.threshold.branch) << '\n';
    }
  }
}

}  // namespace incrseg
