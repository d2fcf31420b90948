#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "incrseg/config.hpp"
#include "incrseg/eval.hpp"

namespace incrseg {

struct ExperimentData {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
};

// Synthetic splits use independent seeds derived from dataset.synthetic.seed.
ExperimentData load_experiment_data(const ExperimentConfig& cfg);

struct RunOptions {
  bool resume = false;
  std::optional<int> max_steps;  // run only the first max_steps steps
  std::optional<std::filesystem::path> output_root;
  std::ostream* log = nullptr;
};

struct ExperimentReport {
  std::filesystem::path run_dir;
  std::string config_hash;
  std::vector<ConfusionMatrix> history;
  std::vector<StepReport> reports;
  int resumed_after = -1;  // last step restored from disk, -1 for a fresh run
};

// Output root precedence: options.output_root, then $INCRSEG_OUT, then
// cfg.output_dir. The run directory is <root>/<config hash>.
std::filesystem::path run_directory(const ExperimentConfig& cfg, const RunOptions& options = {});

// Trains every step and writes, per step, step_<t>/{metrics.csv, report.csv,
// confusion.csv, model.ckpt}; the checkpoint is written last and marks the
// step complete. With options.resume, training restarts after the latest
// complete step on disk.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});
ExperimentReport run_experiment(const std::filesystem::path& config_file, const RunOptions& options = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

struct ReportTableRow {
  int step = 0;
  int learned = 0;  // foreground classes learned so far
  std::string initial;
  std::string incremented;
  std::string all;
};

// Reads step_<t>/report.csv for every step in run_dir. Values keep their
// CSV text. Throws CONTRACT_ERROR when the directory holds no report.
std::vector<ReportTableRow> load_report_table(const std::filesystem::path& run_dir);
std::string render_report_table(const std::vector<ReportTableRow>& rows);
void write_report_plot(const std::vector<ReportTableRow>& rows, const std::filesystem::path& png_path);

// Recomputes the dynamic pseudo-label thresholds that step `step` sees,
// batch by batch in dataset order without augmentation, using the
// checkpoint of step - 1 stored in run_dir. CSV columns:
// batch,class_id,u_low,u_high,u_mean,n_c,tau,branch.
void dump_thresholds(const ExperimentConfig& cfg, const std::filesystem::path& run_dir, int step, std::ostream& out);

}  // namespace incrseg
