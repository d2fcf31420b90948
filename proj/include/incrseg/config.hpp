#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "incrseg/dataset.hpp"
#include "incrseg/model.hpp"
#include "incrseg/schedule.hpp"
#include "incrseg/trainer.hpp"

namespace incrseg {

struct DatasetConfig {
  enum class Kind { synthetic, voc_format };
  Kind kind = Kind::synthetic;
  // synthetic
  std::uint64_t seed = 0;
  SyntheticSpec synthetic;
  int val_images_per_class = 4;
  // voc_format
  std::filesystem::path train_root;
  std::filesystem::path val_root;
};

struct EvalConfig {
  bool include_background = true;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  TaskSchedule schedule;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir = "out";
};

// Validates and fills defaults. Errors are CONFIG_ERROR with a dotted field
// path such as "schedule.step_sizes"; unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

// Fully populated document; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& cfg);

// FNV-1a 64 of the canonical document without output_dir, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace incrseg
