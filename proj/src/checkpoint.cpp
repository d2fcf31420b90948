#include "incrseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "incrseg/error.hpp"

namespace incrseg {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'I', 'N', 'C', 'R', 'S', 'E', 'G', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TapModel& model, int step,
                     const std::vector<int>& classes_learned, const std::string& config_hash) {
  const ModelConfig& m = model.config();
  json header = {{"step", step},
                 {"classes_learned", classes_learned},
                 {"config_hash", config_hash},
                 {"num_classes", model.num_classes()},
                 {"model",
                  {{"in_channels", m.in_channels},
                   {"stage_widths", m.stage_widths},
                   {"convs_per_stage", m.convs_per_stage},
                   {"first_tap_stage", m.first_tap_stage},
                   {"embed_channels", m.embed_channels},
                   {"layer_embed_channels", m.layer_embed_channels},
                   {"new_class_noise", m.new_class_noise}}}};
  const auto params = model.parameters();
  json tensors = json::array();
  for (const auto& p : params) tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) {
      const Tensor& v = p.value.value();
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorCode::IoError, path.string() + " is not a checkpoint");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(ErrorCode::IoError, path.string() + " has a truncated header");

  Checkpoint ckpt;
  try {
    const json header = json::parse(text);
    ckpt.step = header.at("step").get<int>();
    ckpt.classes_learned = header.at("classes_learned").get<std::vector<int>>();
    ckpt.config_hash = header.at("config_hash").get<std::string>();
    ckpt.num_classes = header.at("num_classes").get<int>();
    const json& m = header.at("model");
    ckpt.model_config.in_channels = m.at("in_channels").get<int>();
    ckpt.model_config.stage_widths = m.at("stage_widths").get<std::vector<int>>();
    ckpt.model_config.convs_per_stage = m.at("convs_per_stage").get<int>();
    ckpt.model_config.first_tap_stage = m.at("first_tap_stage").get<int>();
    ckpt.model_config.embed_channels = m.at("embed_channels").get<int>();
    ckpt.model_config.layer_embed_channels = m.at("layer_embed_channels").get<int>();
    ckpt.model_config.new_class_noise = m.at("new_class_noise").get<double>();
    for (const json& t : header.at("tensors")) {
      Tensor value(t.at("shape").get<Shape>());
      ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(value));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, path.string() + " has a malformed header: " + e.what());
  }
  for (auto& [name, value] : ckpt.tensors) {
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!in) throw Error(ErrorCode::IoError, path.string() + " is truncated at " + name);
  }
  return ckpt;
}

TapModel restore_model(const Checkpoint& ckpt) {
  TapModel model(ckpt.model_config, ckpt.num_classes, 0);
  model.load_parameters(ckpt.tensors);
  return model;
}

}  // namespace incrseg
