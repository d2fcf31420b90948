#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "incrseg/error.hpp"
#include "incrseg/experiment.hpp"

namespace fs = std::filesystem;
using namespace incrseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::ScheduleMismatch:
    case ErrorCode::DuplicateClass:
    case ErrorCode::ResumeMismatch: return kExitUsage;
    case ErrorCode::NumericError: return kExitNumeric;
    default: return kExitFailure;
  }
}

int cmd_run(const fs::path& config_path, bool resume, std::optional<std::uint64_t> seed, std::optional<int> steps,
            std::optional<fs::path> out_root) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.train.seed = *seed;
  RunOptions options;
  options.resume = resume;
  options.max_steps = steps;
  options.output_root = out_root;
  options.log = &std::cerr;
  const ExperimentReport report = run_experiment(cfg, options);
  std::cout << report.run_dir.string() << '\n';
  return kExitOk;
}

int cmd_report(const fs::path& run_dir, bool plot, const fs::path& plot_path) {
  std::vector<ReportTableRow> rows;
  try {
    rows = load_report_table(run_dir);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ContractError) throw;
    std::cerr << "error: " << e.detail() << '\n';
    return kExitUsage;
  }
  std::cout << render_report_table(rows);
  if (plot) {
    const fs::path target = plot_path.empty() ? run_dir / "miou.png" : plot_path;
    write_report_plot(rows, target);
    std::cerr << "wrote " << target.string() << '\n';
  }
  return kExitOk;
}

struct GenDataArgs {
  fs::path out_dir;
  std::optional<fs::path> config;
  std::uint64_t seed = 0;
  SyntheticSpec spec;
  int val_per_class = 4;
};

int cmd_gen_data(const GenDataArgs& args) {
  ExperimentConfig cfg;
  if (args.config) {
    cfg = load_config(*args.config);
    if (cfg.dataset.kind != DatasetConfig::Kind::synthetic) {
      throw Error(ErrorCode::ConfigError, "dataset: gen-data needs a synthetic dataset section");
    }
  } else {
    cfg.dataset.seed = args.seed;
    cfg.dataset.synthetic = args.spec;
    cfg.dataset.val_images_per_class = args.val_per_class;
  }
  const ExperimentData data = load_experiment_data(cfg);
  save_voc_format(data.train, args.out_dir / "train");
  save_voc_format(data.val, args.out_dir / "val");
  std::cout << data.train.size() << " train and " << data.val.size() << " val images in " << args.out_dir.string()
            << '\n';
  return kExitOk;
}

int cmd_dump_thresholds(const fs::path& config_path, int step, std::optional<fs::path> run_dir,
                        std::optional<fs::path> out_path) {
  const ExperimentConfig cfg = load_config(config_path);
  const fs::path dir = run_dir ? *run_dir : run_directory(cfg);
  if (out_path) {
    std::ofstream out(*out_path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + out_path->string());
    dump_thresholds(cfg, dir, step, out);
  } else {
    dump_thresholds(cfg, dir, step, std::cout);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-incremental semantic segmentation experiments"};
  app.require_subcommand(1);

  fs::path config_path;
  bool resume = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<fs::path> out_root;
  auto* run = app.add_subcommand("run", "Train every step of an experiment config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_flag("--resume", resume, "Continue after the latest complete step");
  run->add_option("--seed", seed, "Override train.seed");
  run->add_option("--steps", steps, "Run only the first K steps")->check(CLI::PositiveNumber);
  run->add_option("--out", out_root, "Output root (overrides INCRSEG_OUT and output_dir)");

  fs::path run_dir;
  bool plot = false;
  fs::path plot_path;
  auto* report = app.add_subcommand("report", "Print the step-wise mIoU table of a run");
  report->add_option("run_dir", run_dir, "Run directory")->required();
  report->add_flag("--plot", plot, "Write the mIoU-vs-learned-classes chart");
  report->add_option("--plot-path", plot_path, "Chart location (default <run_dir>/miou.png)");

  GenDataArgs gen;
  auto* gen_data = app.add_subcommand("gen-data", "Write the synthetic dataset as PNG image/mask pairs");
  gen_data->add_option("out_dir", gen.out_dir, "Destination; train/ and val/ are created inside")->required();
  gen_data->add_option("--config", gen.config, "Take the dataset section of this config");
  gen_data->add_option("--seed", gen.seed, "Generator seed");
  gen_data->add_option("--classes", gen.spec.num_classes, "Number of foreground classes");
  gen_data->add_option("--per-class", gen.spec.images_per_class, "Training images per class");
  gen_data->add_option("--val-per-class", gen.val_per_class, "Validation images per class");
  gen_data->add_option("--height", gen.spec.height, "Image height");
  gen_data->add_option("--width", gen.spec.width, "Image width");
  gen_data->add_option("--max-shapes", gen.spec.max_shapes, "Shapes per image at most");

  fs::path dump_config;
  int dump_step = 1;
  std::optional<fs::path> dump_run_dir, dump_out;
  auto* dump = app.add_subcommand("dump-thresholds", "Write the per-batch pseudo-label thresholds of a step");
  dump->add_option("config", dump_config, "Experiment config (JSON)")->required();
  dump->add_option("--step", dump_step, "Incremental step (>= 1)")->required();
  dump->add_option("--run-dir", dump_run_dir, "Run directory (default from the config)");
  dump->add_option("--out", dump_out, "CSV destination (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(config_path, resume, seed, steps, out_root);
    if (*report) return cmd_report(run_dir, plot, plot_path);
    if (*gen_data) return cmd_gen_data(gen);
    if (*dump) return cmd_dump_thresholds(dump_config, dump_step, dump_run_dir, dump_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
