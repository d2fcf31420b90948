#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "incrseg/model.hpp"

namespace incrseg {

// File layout: the 8-byte magic "INCRSEG1", a little-endian u64 header
// length, a JSON header, then every tensor as raw little-endian doubles in
// header order.
struct Checkpoint {
  int step = 0;
  std::vector<int> classes_learned;  // class IDs in learning order
  std::string config_hash;
  ModelConfig model_config;
  int num_classes = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const TapModel& model, int step,
                     const std::vector<int>& classes_learned, const std::string& config_hash);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the network described by a checkpoint.
TapModel restore_model(const Checkpoint& ckpt);

}  // namespace incrseg
