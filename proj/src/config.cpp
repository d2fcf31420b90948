#include "incrseg/config.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "incrseg/error.hpp"

namespace incrseg {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& message) {
  throw Error(ErrorCode::ConfigError, path + ": " + message);
}

// Typed access to one JSON object that remembers which keys were read.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return doc_.contains(key); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  Section child(const std::string& key) {
    const json* v = raw(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, field(key));
  }

  int get_int(const std::string& key, int fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) config_error(field(key), "expected an integer");
    return v->get<int>();
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0)) {
      config_error(field(key), "expected a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  double get_double(const std::string& key, double fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number()) config_error(field(key), "expected a number");
    return v->get<double>();
  }

  bool get_bool(const std::string& key, bool fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_boolean()) config_error(field(key), "expected true or false");
    return v->get<bool>();
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_string()) config_error(field(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_array()) config_error(field(key), "expected a list of integers");
    std::vector<int> out;
    for (const json& e : *v) {
      if (!e.is_number_integer()) config_error(field(key), "expected a list of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  void require(const std::string& key) {
    if (!doc_.contains(key)) config_error(field(key), "required field missing");
  }

  // Rejects keys that were never read.
  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!seen_.count(it.key())) config_error(field(it.key()), "unknown key");
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs a library validator and relabels its failure with a field path.
template <typename Fn>
void checked(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    config_error(path, e.detail());
  }
}

void parse_dataset(Section s, ExperimentConfig& cfg) {
  const bool synthetic = s.has("synthetic"), voc = s.has("voc_format");
  if (synthetic == voc) config_error(s.field("synthetic"), "exactly one of synthetic or voc_format is required");
  DatasetConfig& d = cfg.dataset;
  if (synthetic) {
    d.kind = DatasetConfig::Kind::synthetic;
    Section sy = s.child("synthetic");
    d.seed = sy.get_u64("seed", 0);
    SyntheticSpec& spec = d.synthetic;
    spec.num_classes = sy.get_int("num_classes", spec.num_classes);
    spec.images_per_class = sy.get_int("images_per_class", spec.images_per_class);
    d.val_images_per_class = sy.get_int("val_images_per_class", d.val_images_per_class);
    spec.height = sy.get_int("height", spec.height);
    spec.width = sy.get_int("width", spec.width);
    spec.max_shapes = sy.get_int("max_shapes", spec.max_shapes);
    spec.min_radius = sy.get_int("min_radius", spec.min_radius);
    spec.max_radius = sy.get_int("max_radius", spec.max_radius);
    sy.finish();
    if (spec.num_classes < 2) config_error(sy.field("num_classes"), "must be >= 2");
    if (spec.images_per_class < 1) config_error(sy.field("images_per_class"), "must be >= 1");
    if (d.val_images_per_class < 1) config_error(sy.field("val_images_per_class"), "must be >= 1");
    if (spec.max_shapes < 1) config_error(sy.field("max_shapes"), "must be >= 1");
    if (spec.min_radius < 1 || spec.max_radius < spec.min_radius) {
      config_error(sy.field("max_radius"), "need 1 <= min_radius <= max_radius");
    }
  } else {
    d.kind = DatasetConfig::Kind::voc_format;
    Section v = s.child("voc_format");
    v.require("train");
    v.require("val");
    d.train_root = v.get_string("train", "");
    d.val_root = v.get_string("val", "");
    v.finish();
  }
  s.finish();
}

void parse_schedule(Section s, ExperimentConfig& cfg) {
  std::vector<int> fallback_order;
  if (cfg.dataset.kind == DatasetConfig::Kind::synthetic) {
    fallback_order.resize(static_cast<std::size_t>(cfg.dataset.synthetic.num_classes));
    std::iota(fallback_order.begin(), fallback_order.end(), 1);
  } else {
    s.require("class_order");
  }
  s.require("step_sizes");
  std::vector<int> order = s.get_int_list("class_order", fallback_order);
  std::vector<int> sizes = s.get_int_list("step_sizes", {});
  Protocol protocol = Protocol::overlapped;
  checked(s.field("protocol"), [&] { protocol = parse_protocol(s.get_string("protocol", "overlapped")); });
  s.finish();
  try {
    cfg.schedule = build_schedule(order, sizes, protocol);
  } catch (const Error& e) {
    const bool sizes_fault = e.code() == ErrorCode::ScheduleMismatch && !order.empty();
    config_error(s.field(sizes_fault ? "step_sizes" : "class_order"), e.what());
  }
  if (cfg.dataset.kind == DatasetConfig::Kind::synthetic) {
    for (int c : cfg.schedule.class_order) {
      if (c > cfg.dataset.synthetic.num_classes) {
        config_error(s.field("class_order"), "class " + std::to_string(c) + " exceeds dataset.synthetic.num_classes");
      }
    }
    if (cfg.schedule.num_classes() != cfg.dataset.synthetic.num_classes) {
      config_error(s.field("class_order"), "must list every synthetic class");
    }
  }
}

void parse_model(Section s, ModelConfig& m) {
  m.stage_widths = s.get_int_list("stage_widths", m.stage_widths);
  m.convs_per_stage = s.get_int("convs_per_stage", m.convs_per_stage);
  m.first_tap_stage = s.get_int("first_tap_stage", m.first_tap_stage);
  m.embed_channels = s.get_int("embed_channels", m.embed_channels);
  m.layer_embed_channels = s.get_int("layer_embed_channels", m.layer_embed_channels);
  m.new_class_noise = s.get_double("new_class_noise", m.new_class_noise);
  s.finish();
  if (m.stage_widths.size() < 2) config_error(s.field("stage_widths"), "needs at least two stages");
  for (int w : m.stage_widths) {
    if (w < 1) config_error(s.field("stage_widths"), "widths must be positive");
  }
  if (m.convs_per_stage < 1) config_error(s.field("convs_per_stage"), "must be >= 1");
  if (m.first_tap_stage < 0 || m.first_tap_stage >= static_cast<int>(m.stage_widths.size())) {
    config_error(s.field("first_tap_stage"), "must index an encoder stage");
  }
  if (m.embed_channels < 1) config_error(s.field("embed_channels"), "must be >= 1");
  if (m.layer_embed_channels < 1) config_error(s.field("layer_embed_channels"), "must be >= 1");
  if (!(m.new_class_noise >= 0.0)) config_error(s.field("new_class_noise"), "must be non-negative");
}

void parse_train(Section s, TrainConfig& t) {
  t.base_lr = s.get_double("base_lr", t.base_lr);
  t.momentum = s.get_double("momentum", t.momentum);
  t.weight_decay = s.get_double("weight_decay", t.weight_decay);
  t.batch_size = s.get_int("batch_size", t.batch_size);
  t.epochs_per_step = s.get_int("epochs_per_step", t.epochs_per_step);
  t.poly_power = s.get_double("poly_power", t.poly_power);
  t.seed = s.get_u64("seed", t.seed);
  t.hflip = s.get_bool("hflip", t.hflip);

  Section dada = s.child("dada");
  t.dada.intermediate = dada.get_bool("intermediate", t.dada.intermediate);
  t.dada.output = dada.get_bool("output", t.dada.output);
  t.dada.lambda_out = dada.get_double("lambda_out", t.dada.lambda_out);
  Section alw = dada.child("alw");
  t.dada.alw.alpha = alw.get_double("alpha", t.dada.alw.alpha);
  t.dada.alw.gamma = alw.get_double("gamma", t.dada.alw.gamma);
  alw.finish();
  dada.finish();

  Section arcl = s.child("arcl");
  t.arcl.enabled = arcl.get_bool("enabled", t.arcl.enabled);
  t.arcl.margin = arcl.get_double("margin", t.arcl.margin);
  t.arcl.max_anchor_classes = arcl.get_int("max_anchor_classes", t.arcl.max_anchor_classes);
  arcl.finish();

  Section dcpl = s.child("dcpl");
  checked(dcpl.field("mode"),
          [&] { t.dcpl.mode = parse_pseudo_label_mode(dcpl.get_string("mode", to_string(t.dcpl.mode))); });
  t.dcpl.fixed_threshold = dcpl.get_double("fixed_threshold", t.dcpl.fixed_threshold);
  t.dcpl.big_gamma = dcpl.get_double("big_gamma", t.dcpl.big_gamma);
  t.dcpl.sigma = dcpl.get_double("sigma", t.dcpl.sigma);
  t.dcpl.epsilon = dcpl.get_double("epsilon", t.dcpl.epsilon);
  dcpl.finish();
  s.finish();

  checked(s.field("dada"), [&] { validate(t.dada); });
  checked(s.field("arcl"), [&] { validate(t.arcl); });
  checked(s.field("dcpl"), [&] { validate(t.dcpl); });
  if (!(t.base_lr > 0.0)) config_error(s.field("base_lr"), "must be positive");
  if (!(t.momentum >= 0.0 && t.momentum < 1.0)) config_error(s.field("momentum"), "must lie in [0,1)");
  if (!(t.weight_decay >= 0.0)) config_error(s.field("weight_decay"), "must be non-negative");
  if (t.batch_size < 1) config_error(s.field("batch_size"), "must be >= 1");
  if (t.epochs_per_step < 1) config_error(s.field("epochs_per_step"), "must be >= 1");
  if (!(t.poly_power > 0.0)) config_error(s.field("poly_power"), "must be positive");
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  Section root(doc, "");
  root.require("dataset");
  root.require("schedule");
  parse_dataset(root.child("dataset"), cfg);
  parse_schedule(root.child("schedule"), cfg);
  parse_model(root.child("model"), cfg.model);
  parse_train(root.child("train"), cfg.train);
  Section eval = root.child("eval");
  cfg.eval.include_background = eval.get_bool("include_background", cfg.eval.include_background);
  eval.finish();
  cfg.output_dir = root.get_string("output_dir", cfg.output_dir);
  root.finish();
  if (cfg.dataset.kind == DatasetConfig::Kind::synthetic) {
    const int stride = 1 << cfg.model.stage_widths.size();
    if (cfg.dataset.synthetic.height % stride != 0 || cfg.dataset.synthetic.width % stride != 0) {
      config_error("dataset.synthetic.height", "height and width must be multiples of the output stride " +
                                                   std::to_string(stride));
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& cfg) {
  json doc;
  const DatasetConfig& d = cfg.dataset;
  if (d.kind == DatasetConfig::Kind::synthetic) {
    const SyntheticSpec& s = d.synthetic;
    doc["dataset"]["synthetic"] = {{"seed", d.seed},
                                   {"num_classes", s.num_classes},
                                   {"images_per_class", s.images_per_class},
                                   {"val_images_per_class", d.val_images_per_class},
                                   {"height", s.height},
                                   {"width", s.width},
                                   {"max_shapes", s.max_shapes},
                                   {"min_radius", s.min_radius},
                                   {"max_radius", s.max_radius}};
  } else {
    doc["dataset"]["voc_format"] = {{"train", d.train_root.string()}, {"val", d.val_root.string()}};
  }
  doc["schedule"] = {{"class_order", cfg.schedule.class_order},
                     {"step_sizes", cfg.schedule.step_sizes},
                     {"protocol", to_string(cfg.schedule.protocol)}};
  const ModelConfig& m = cfg.model;
  doc["model"] = {{"stage_widths", m.stage_widths},
                  {"convs_per_stage", m.convs_per_stage},
                  {"first_tap_stage", m.first_tap_stage},
                  {"embed_channels", m.embed_channels},
                  {"layer_embed_channels", m.layer_embed_channels},
                  {"new_class_noise", m.new_class_noise}};
  const TrainConfig& t = cfg.train;
  doc["train"] = {{"base_lr", t.base_lr},
                  {"momentum", t.momentum},
                  {"weight_decay", t.weight_decay},
                  {"batch_size", t.batch_size},
                  {"epochs_per_step", t.epochs_per_step},
                  {"poly_power", t.poly_power},
                  {"seed", t.seed},
                  {"hflip", t.hflip}};
  doc["train"]["dada"] = {{"intermediate", t.dada.intermediate},
                          {"output", t.dada.output},
                          {"lambda_out", t.dada.lambda_out},
                          {"alw", {{"alpha", t.dada.alw.alpha}, {"gamma", t.dada.alw.gamma}}}};
  doc["train"]["arcl"] = {
      {"enabled", t.arcl.enabled}, {"margin", t.arcl.margin}, {"max_anchor_classes", t.arcl.max_anchor_classes}};
  doc["train"]["dcpl"] = {{"mode", to_string(t.dcpl.mode)},
                          {"fixed_threshold", t.dcpl.fixed_threshold},
                          {"big_gamma", t.dcpl.big_gamma},
                          {"sigma", t.dcpl.sigma},
                          {"epsilon", t.dcpl.epsilon}};
  doc["eval"] = {{"include_background", cfg.eval.include_background}};
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json doc = to_json(cfg);
  doc.erase("output_dir");
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace incrseg
