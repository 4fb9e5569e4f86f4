#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include "qpl/cli.hpp"
#include "qpl/report.hpp"
#include "qpl/version.hpp"

namespace qpl::cli {

namespace {

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

DatasetSpec parse_dataset(const json& j) {
  check_keys(j, "dataset", {"source", "subset_size", "test_size", "subset_seed", "dir"});
  DatasetSpec s;
  s.source = get_or<std::string>(j, "source", s.source);
  if (s.source != "synthetic" && s.source != "cifar10")
    throw ConfigError("dataset.source must be 'synthetic' or 'cifar10'");
  s.subset_size = get_or<int>(j, "subset_size", s.subset_size);
  s.test_size = get_or<int>(j, "test_size", s.test_size);
  s.subset_seed = get_or<std::uint64_t>(j, "subset_seed", s.subset_seed);
  s.dir = get_or<std::string>(j, "dir", s.dir);
  if (s.subset_size < 1 || s.test_size < 1)
    throw ConfigError("dataset sizes must be >= 1");
  return s;
}

ModelSpec parse_model(const json& j) {
  check_keys(j, "model", {"arch", "bitwidth", "quant_mode"});
  ModelSpec s;
  s.arch = get_or<std::string>(j, "arch", s.arch);
  s.bitwidth = get_or<int>(j, "bitwidth", s.bitwidth);
  s.quant_mode = get_or<std::string>(j, "quant_mode", s.quant_mode);
  if (s.quant_mode != "none" && s.quant_mode != "qat" && s.quant_mode != "ptq")
    throw ConfigError("model.quant_mode must be none|qat|ptq");
  return s;
}

TrainSpec parse_train(const json& j) {
  check_keys(j, "train",
             {"batch_size", "epochs", "lr", "momentum", "weight_decay", "lr_decay_epochs",
              "lr_decay_factor", "init_from"});
  TrainSpec s;
  s.cfg.batch_size = get_or<int>(j, "batch_size", s.cfg.batch_size);
  s.cfg.epochs = get_or<int>(j, "epochs", s.cfg.epochs);
  s.cfg.lr = get_or<float>(j, "lr", s.cfg.lr);
  s.cfg.momentum = get_or<float>(j, "momentum", s.cfg.momentum);
  s.cfg.weight_decay = get_or<float>(j, "weight_decay", s.cfg.weight_decay);
  s.cfg.lr_decay_epochs = get_or<std::vector<int>>(j, "lr_decay_epochs", s.cfg.lr_decay_epochs);
  s.cfg.lr_decay_factor = get_or<float>(j, "lr_decay_factor", s.cfg.lr_decay_factor);
  s.init_from = get_or<std::string>(j, "init_from", s.init_from);
  return s;
}

AttackSpec parse_attack(const json& j) {
  check_keys(j, "attack",
             {"kind", "patch_size", "iters", "lr", "target", "epsilon", "alpha", "steps",
              "random_start", "eot"});
  AttackSpec s;
  s.kind = get_or<std::string>(j, "kind", s.kind);
  if (s.kind != "lavan" && s.kind != "gap" && s.kind != "fgsm" && s.kind != "pgd")
    throw ConfigError("attack.kind must be lavan|gap|fgsm|pgd");
  s.patch_size = get_or<int>(j, "patch_size", s.patch_size);
  s.iters = get_or<int>(j, "iters", s.iters);
  s.lr = get_or<float>(j, "lr", s.lr);
  s.target = get_or<int>(j, "target", s.target);
  s.epsilon = get_or<float>(j, "epsilon", s.epsilon);
  s.alpha = get_or<float>(j, "alpha", s.alpha);
  s.steps = get_or<int>(j, "steps", s.steps);
  s.random_start = get_or<bool>(j, "random_start", s.random_start);
  if (j.contains("eot")) {
    const json& e = j.at("eot");
    check_keys(e, "attack.eot",
               {"rotation_deg", "scale_lo", "scale_hi", "samples_per_step", "fixed_position"});
    s.eot.rotation_deg = get_or<float>(e, "rotation_deg", s.eot.rotation_deg);
    s.eot.scale_lo = get_or<float>(e, "scale_lo", s.eot.scale_lo);
    s.eot.scale_hi = get_or<float>(e, "scale_hi", s.eot.scale_hi);
    s.eot.samples_per_step = get_or<int>(e, "samples_per_step", s.eot.samples_per_step);
    if (e.contains("fixed_position")) {
      auto v = e.at("fixed_position").get<std::array<int, 2>>();
      s.eot.fixed_position = {{v[0], v[1]}};
    }
  }
  return s;
}

CheckpointRef parse_checkpoint_ref(const json& j, const std::string& where) {
  check_keys(j, where, {"arch", "bitwidth", "quant_mode", "path"});
  CheckpointRef r;
  r.arch = j.at("arch").get<std::string>();
  r.bitwidth = get_or<int>(j, "bitwidth", 32);
  r.quant_mode = get_or<std::string>(j, "quant_mode", "none");
  r.path = j.at("path").get<std::string>();
  return r;
}

EvalSpec parse_eval(const json& j) {
  check_keys(j, "eval",
             {"runs", "batch_size", "placement_policy", "fixed_place", "placements", "rotations",
              "epsilons", "sizes", "defenses", "checkpoints", "patch", "substitute",
              "source_checkpoint", "calib_size", "image_index", "align_samples"});
  EvalSpec s;
  s.runs = get_or<int>(j, "runs", s.runs);
  s.batch_size = get_or<int>(j, "batch_size", s.batch_size);
  s.placement_policy = get_or<std::string>(j, "placement_policy", s.placement_policy);
  if (s.placement_policy != "random" && s.placement_policy != "fixed")
    throw ConfigError("eval.placement_policy must be random|fixed");
  if (j.contains("fixed_place")) s.fixed_place = j.at("fixed_place").get<std::array<int, 2>>();
  s.placements = get_or<std::vector<std::array<int, 2>>>(j, "placements", s.placements);
  s.rotations = get_or<std::vector<float>>(j, "rotations", s.rotations);
  s.epsilons = get_or<std::vector<float>>(j, "epsilons", s.epsilons);
  s.sizes = get_or<std::vector<int>>(j, "sizes", s.sizes);
  s.defenses = get_or<std::vector<std::string>>(j, "defenses", s.defenses);
  if (j.contains("checkpoints")) {
    int i = 0;
    for (const auto& e : j.at("checkpoints"))
      s.checkpoints.push_back(parse_checkpoint_ref(e, "eval.checkpoints[" + std::to_string(i++) + "]"));
  }
  s.patch = get_or<std::string>(j, "patch", s.patch);
  s.substitute = get_or<std::string>(j, "substitute", s.substitute);
  s.source_checkpoint = get_or<std::string>(j, "source_checkpoint", s.source_checkpoint);
  s.calib_size = get_or<int>(j, "calib_size", s.calib_size);
  s.image_index = get_or<int>(j, "image_index", s.image_index);
  s.align_samples = get_or<int>(j, "align_samples", s.align_samples);
  return s;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  check_keys(doc, "config",
             {"seed", "dataset", "model", "train", "attack", "eval", "out_dir"});
  ExperimentConfig cfg;
  try {
    cfg.seed = get_or<std::uint64_t>(doc, "seed", 0);
    if (doc.contains("dataset")) cfg.dataset = parse_dataset(doc.at("dataset"));
    if (doc.contains("model")) cfg.model = parse_model(doc.at("model"));
    if (doc.contains("train")) cfg.train = parse_train(doc.at("train"));
    if (doc.contains("attack")) cfg.attack = parse_attack(doc.at("attack"));
    if (doc.contains("eval")) cfg.eval = parse_eval(doc.at("eval"));
    cfg.out_dir = get_or<std::string>(doc, "out_dir", cfg.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }
  cfg.raw = doc;
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingArtifact("config file not found: " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_config(doc);
}

ManifestWriter::ManifestWriter(std::string command, json config) {
  j_["command"] = std::move(command);
  j_["tool_version"] = kVersion;
  j_["workers"] = workers();
  const auto now = std::chrono::system_clock::now();
  j_["wall_clock_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  j_["config"] = std::move(config);
  j_["inputs"] = json::object();
  j_["outputs"] = json::array();
  j_["durations_ms"] = json::object();
}

void ManifestWriter::add_input(const std::string& path) {
  j_["inputs"][path] = report::fnv1a_file_hex(path);
}

void ManifestWriter::add_output(const std::string& path) { j_["outputs"].push_back(path); }

void ManifestWriter::add_duration(const std::string& stage, double ms) {
  j_["durations_ms"][stage] = ms;
}

void ManifestWriter::write(const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  report::write_json((fs::path(out_dir) / "run_manifest.json").string(), j_);
}

}  // namespace qpl::cli
