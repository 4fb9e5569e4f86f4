#include <filesystem>
#include <fstream>
#include <set>

#include "qpl/cli.hpp"
#include "qpl/report.hpp"

namespace qpl::cli {

namespace fs = std::filesystem;

namespace {

// Schema of the bundled suite configuration (see configs/suite-desk.json).
struct SuiteConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "suite-out";
  json dataset;
  std::vector<std::string> archs;
  std::vector<int> bitwidths;
  std::string substitute_arch;
  json train;
  json qat;  // {"epochs", "lr"}
  int calib_size = 512;
  json lavan;  // {"patch_size","iters","lr"}
  json gap;    // {"patch_size","iters","lr","target","eot"}
  json eval;
  json raw;
};

void require_keys(const json& j, const std::string& where,
                  std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (!j.contains(k)) throw ConfigError(where + ": missing required key '" + k + "'");
}

SuiteConfig parse_suite(const json& doc) {
  require_keys(doc, "suite",
               {"seed", "out_dir", "dataset", "archs", "bitwidths", "substitute_arch", "train",
                "qat", "calib_size", "lavan", "gap", "eval"});
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    static const std::set<std::string> allowed{"seed",    "out_dir",  "dataset",
                                               "archs",   "bitwidths", "substitute_arch",
                                               "train",   "qat",      "calib_size",
                                               "lavan",   "gap",      "eval"};
    if (!allowed.count(key)) throw ConfigError("unknown key 'suite." + key + "'");
  }
  SuiteConfig s;
  s.seed = doc.at("seed").get<std::uint64_t>();
  s.out_dir = doc.at("out_dir").get<std::string>();
  s.dataset = doc.at("dataset");
  s.archs = doc.at("archs").get<std::vector<std::string>>();
  s.bitwidths = doc.at("bitwidths").get<std::vector<int>>();
  s.substitute_arch = doc.at("substitute_arch").get<std::string>();
  s.train = doc.at("train");
  s.qat = doc.at("qat");
  s.calib_size = doc.at("calib_size").get<int>();
  s.lavan = doc.at("lavan");
  s.gap = doc.at("gap");
  s.eval = doc.at("eval");
  s.raw = doc;
  if (std::find(s.archs.begin(), s.archs.end(), s.substitute_arch) == s.archs.end())
    throw ConfigError("suite.substitute_arch must be listed in suite.archs");
  if (std::find(s.bitwidths.begin(), s.bitwidths.end(), 32) == s.bitwidths.end())
    throw ConfigError("suite.bitwidths must include 32");
  for (const char* key : {"align_bitwidths", "pgd_bitwidths", "defense_bitwidths"})
    for (int b : s.eval.at(key).get<std::vector<int>>())
      if (std::find(s.bitwidths.begin(), s.bitwidths.end(), b) == s.bitwidths.end())
        throw ConfigError(std::string("suite.eval.") + key + " lists bitwidth " +
                          std::to_string(b) + " that the suite does not build");
  return s;
}

std::string stage_dir(const SuiteConfig& s, const std::string& stage) {
  return (fs::path(s.out_dir) / stage).string();
}

std::string fp_ckpt(const SuiteConfig& s, const std::string& arch) {
  return stage_dir(s, "checkpoints/" + arch + "-fp32") + "/checkpoint.qnet";
}

std::string qat_ckpt(const SuiteConfig& s, const std::string& arch, int bits) {
  return stage_dir(s, "checkpoints/" + arch + "-qat" + std::to_string(bits)) +
         "/checkpoint.qnet";
}

std::string ptq_ckpt(const SuiteConfig& s, const std::string& arch, int bits) {
  return stage_dir(s, "checkpoints/" + arch + "-ptq" + std::to_string(bits)) +
         "/checkpoint.qnet";
}

// QAT grid entry; bitwidth 32 refers to the fp32 checkpoint.
json grid_entry(const SuiteConfig& s, const std::string& arch, int bits) {
  json e;
  e["arch"] = arch;
  e["bitwidth"] = bits;
  e["quant_mode"] = bits == 32 ? "none" : "qat";
  e["path"] = bits == 32 ? fp_ckpt(s, arch) : qat_ckpt(s, arch, bits);
  return e;
}

json substitute_grid(const SuiteConfig& s, const std::vector<int>& bits) {
  json arr = json::array();
  for (int b : bits) arr.push_back(grid_entry(s, s.substitute_arch, b));
  return arr;
}

}  // namespace

int cmd_suite(const std::string& suite_path, const std::string& out_override,
              std::optional<std::uint64_t> seed_override) {
  std::ifstream f(suite_path);
  if (!f) throw MissingArtifact("suite config not found: " + suite_path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(suite_path + ": invalid JSON: " + e.what());
  }
  if (!out_override.empty()) doc["out_dir"] = out_override;
  if (seed_override) doc["seed"] = *seed_override;
  SuiteConfig s = parse_suite(doc);

  json stages = json::array();
  const auto run_stage = [&](const std::string& name, const json& cfg_doc, auto&& fn) {
    ExperimentConfig cfg = parse_config(cfg_doc);
    fn(cfg);
    json e;
    e["stage"] = name;
    e["out_dir"] = cfg.out_dir;
    stages.push_back(std::move(e));
  };

  // 1. full-precision training per architecture
  for (const auto& arch : s.archs) {
    json d;
    d["seed"] = derive_seed(s.seed, 0x7A0, std::hash<std::string>{}(arch));
    d["dataset"] = s.dataset;
    d["model"] = {{"arch", arch}, {"bitwidth", 32}, {"quant_mode", "none"}};
    d["train"] = s.train;
    d["out_dir"] = stage_dir(s, "checkpoints/" + arch + "-fp32");
    run_stage("train-" + arch + "-fp32", d, [&](const ExperimentConfig& c) { cmd_train(c); });
  }

  // 2. QAT fine-tunes and PTQ calibrations per bitwidth
  for (const auto& arch : s.archs) {
    for (int bits : s.bitwidths) {
      if (bits == 32) continue;
      json d;
      d["seed"] = derive_seed(s.seed, 0x7A1, std::hash<std::string>{}(arch) + bits);
      d["dataset"] = s.dataset;
      d["model"] = {{"arch", arch}, {"bitwidth", bits}, {"quant_mode", "qat"}};
      json tr = s.train;
      tr["epochs"] = s.qat.at("epochs");
      tr["lr"] = s.qat.at("lr");
      tr["lr_decay_epochs"] = json::array();
      tr["init_from"] = fp_ckpt(s, arch);
      d["train"] = tr;
      d["out_dir"] = stage_dir(s, "checkpoints/" + arch + "-qat" + std::to_string(bits));
      run_stage("train-" + arch + "-qat" + std::to_string(bits), d,
                [&](const ExperimentConfig& c) { cmd_train(c); });

      json p;
      p["seed"] = derive_seed(s.seed, 0x7A2, std::hash<std::string>{}(arch) + bits);
      p["dataset"] = s.dataset;
      p["model"] = {{"arch", arch}, {"bitwidth", bits}, {"quant_mode", "ptq"}};
      p["eval"] = {{"calib_size", s.calib_size}};
      p["out_dir"] = stage_dir(s, "checkpoints/" + arch + "-ptq" + std::to_string(bits));
      run_stage("ptq-" + arch + "-" + std::to_string(bits), p,
                [&](const ExperimentConfig& c) { cmd_quantize_ptq(c, fp_ckpt(s, arch)); });
    }
  }

  // 3. patch crafting on the fp32 substitute
  json lavan_cfg;
  lavan_cfg["seed"] = derive_seed(s.seed, 0xC0A, 1);
  lavan_cfg["dataset"] = s.dataset;
  lavan_cfg["attack"] = {{"kind", "lavan"},
                         {"patch_size", s.lavan.at("patch_size")},
                         {"iters", s.lavan.at("iters")},
                         {"lr", s.lavan.at("lr")}};
  lavan_cfg["out_dir"] = stage_dir(s, "attacks/lavan");
  run_stage("craft-lavan", lavan_cfg,
            [&](const ExperimentConfig& c) { cmd_attack_craft(c, fp_ckpt(s, s.substitute_arch)); });
  const std::string lavan_patch = stage_dir(s, "attacks/lavan") + "/patch.qpch";

  json gap_cfg;
  gap_cfg["seed"] = derive_seed(s.seed, 0xC0A, 2);
  gap_cfg["dataset"] = s.dataset;
  gap_cfg["attack"] = {{"kind", "gap"},
                       {"patch_size", s.gap.at("patch_size")},
                       {"iters", s.gap.at("iters")},
                       {"lr", s.gap.at("lr")},
                       {"target", s.gap.at("target")},
                       {"eot", s.gap.at("eot")}};
  gap_cfg["out_dir"] = stage_dir(s, "attacks/gap");
  run_stage("craft-gap", gap_cfg,
            [&](const ExperimentConfig& c) { cmd_attack_craft(c, fp_ckpt(s, s.substitute_arch)); });
  const std::string gap_patch = stage_dir(s, "attacks/gap") + "/patch.qpch";

  const int runs = s.eval.at("runs").get<int>();
  const int batch_size = s.eval.at("batch_size").get<int>();

  // 4. experiment 2: LAVAN across the full QAT grid
  {
    json d;
    d["seed"] = derive_seed(s.seed, 0xE2, 0);
    d["dataset"] = s.dataset;
    json cks = json::array();
    for (const auto& arch : s.archs)
      for (int b : s.bitwidths) cks.push_back(grid_entry(s, arch, b));
    d["eval"] = {{"runs", runs},
                 {"batch_size", batch_size},
                 {"patch", lavan_patch},
                 {"checkpoints", cks}};
    d["out_dir"] = stage_dir(s, "exp2-transfer");
    run_stage("exp2-transfer", d, [&](const ExperimentConfig& c) { cmd_eval_transfer(c); });
  }

  // 5. experiment 2 on the PTQ substitute grid
  {
    json d;
    d["seed"] = derive_seed(s.seed, 0xE2, 1);
    d["dataset"] = s.dataset;
    json cks = json::array();
    for (int b : s.bitwidths)
      cks.push_back(b == 32 ? grid_entry(s, s.substitute_arch, 32)
                            : json{{"arch", s.substitute_arch},
                                   {"bitwidth", b},
                                   {"quant_mode", "ptq"},
                                   {"path", ptq_ckpt(s, s.substitute_arch, b)}});
    d["eval"] = {{"runs", runs},
                 {"batch_size", batch_size},
                 {"patch", lavan_patch},
                 {"checkpoints", cks}};
    d["out_dir"] = stage_dir(s, "exp2-ptq");
    run_stage("exp2-ptq", d, [&](const ExperimentConfig& c) { cmd_eval_asr(c); });
  }

  // 6. supplementary experiment 2: targeted GAP transfer across the grid
  {
    json d;
    d["seed"] = derive_seed(s.seed, 0xE2, 2);
    d["dataset"] = s.dataset;
    json cks = json::array();
    for (const auto& arch : s.archs)
      for (int b : s.bitwidths) cks.push_back(grid_entry(s, arch, b));
    d["eval"] = {{"runs", runs},
                 {"batch_size", batch_size},
                 {"patch", gap_patch},
                 {"checkpoints", cks}};
    d["out_dir"] = stage_dir(s, "exp2-targeted");
    run_stage("exp2-targeted", d, [&](const ExperimentConfig& c) { cmd_eval_transfer(c); });
  }

  // 7. experiment 1: feature maps across bitwidths (32/8/4/2 where built)
  {
    std::vector<int> featmap_bits;
    for (int b : {32, 8, 4, 2})
      if (std::find(s.bitwidths.begin(), s.bitwidths.end(), b) != s.bitwidths.end())
        featmap_bits.push_back(b);
    json d;
    d["seed"] = derive_seed(s.seed, 0xE1, 0);
    d["dataset"] = s.dataset;
    d["attack"] = {{"kind", "pgd"}};
    d["eval"] = {{"patch", lavan_patch},
                 {"checkpoints", substitute_grid(s, featmap_bits)},
                 {"source_checkpoint", fp_ckpt(s, s.substitute_arch)},
                 {"image_index", 0}};
    d["out_dir"] = stage_dir(s, "exp1-featmaps");
    run_stage("exp1-featmaps", d, [&](const ExperimentConfig& c) { cmd_analyze_featmaps(c); });
  }

  // 8. experiment 4: gradient alignment
  {
    json d;
    d["seed"] = derive_seed(s.seed, 0xE4, 0);
    d["dataset"] = s.dataset;
    d["attack"] = {{"kind", "pgd"}};
    d["eval"] = {{"patch", lavan_patch},
                 {"checkpoints",
                  substitute_grid(s, s.eval.at("align_bitwidths").get<std::vector<int>>())},
                 {"source_checkpoint", fp_ckpt(s, s.substitute_arch)},
                 {"align_samples", s.eval.at("align_samples")},
                 {"batch_size", batch_size}};
    d["out_dir"] = stage_dir(s, "exp4-gradalign");
    run_stage("exp4-gradalign", d, [&](const ExperimentConfig& c) { cmd_analyze_gradalign(c); });
  }

  // 9. experiment 3: spatial sensitivity (shifts + rotations)
  {
    json d;
    d["seed"] = derive_seed(s.seed, 0xE3, 0);
    d["dataset"] = s.dataset;
    d["eval"] = {{"runs", runs},
                 {"batch_size", batch_size},
                 {"patch", lavan_patch},
                 {"placements", s.eval.at("placements")},
                 {"rotations", s.eval.at("rotations")},
                 {"checkpoints", substitute_grid(s, s.bitwidths)}};
    d["out_dir"] = stage_dir(s, "exp3-spatial");
    run_stage("exp3-spatial", d, [&](const ExperimentConfig& c) { cmd_eval_spatial(c); });
  }

  // 10. experiment 6: patch sizes
  {
    json d;
    d["seed"] = derive_seed(s.seed, 0xE6, 0);
    d["dataset"] = s.dataset;
    d["attack"] = {{"kind", "lavan"},
                   {"iters", s.lavan.at("iters")},
                   {"lr", s.lavan.at("lr")}};
    d["eval"] = {{"runs", runs},
                 {"batch_size", batch_size},
                 {"sizes", s.eval.at("sizes")},
                 {"substitute", fp_ckpt(s, s.substitute_arch)},
                 {"checkpoints", substitute_grid(s, s.bitwidths)}};
    d["out_dir"] = stage_dir(s, "exp6-sizes");
    run_stage("exp6-sizes", d, [&](const ExperimentConfig& c) { cmd_eval_sizes(c); });
  }

  // 11. supplementary: PGD accuracy sweep
  {
    json ds = s.dataset;
    ds["test_size"] = s.eval.at("pgd_samples");
    json d;
    d["seed"] = derive_seed(s.seed, 0xE9, 0);
    d["dataset"] = ds;
    d["attack"] = {{"kind", "pgd"}, {"steps", 10}, {"alpha", 1.0 / 255.0}};
    d["eval"] = {{"batch_size", batch_size},
                 {"epsilons", s.eval.at("epsilons")},
                 {"checkpoints",
                  substitute_grid(s, s.eval.at("pgd_bitwidths").get<std::vector<int>>())}};
    d["out_dir"] = stage_dir(s, "pgd-sweep");
    run_stage("pgd-sweep", d, [&](const ExperimentConfig& c) { cmd_eval_pgd(c); });
  }

  // 12. supplementary: pre-processing defenses
  {
    json d;
    d["seed"] = derive_seed(s.seed, 0xE7, 0);
    d["dataset"] = s.dataset;
    d["eval"] = {{"runs", s.eval.at("defense_runs")},
                 {"batch_size", batch_size},
                 {"patch", lavan_patch},
                 {"defenses", s.eval.at("defenses")},
                 {"checkpoints",
                  substitute_grid(s, s.eval.at("defense_bitwidths").get<std::vector<int>>())}};
    d["out_dir"] = stage_dir(s, "defense");
    run_stage("defense", d, [&](const ExperimentConfig& c) { cmd_eval_defense(c); });
  }

  json summary;
  summary["suite"] = s.raw;
  summary["stages"] = std::move(stages);
  report::write_json((fs::path(s.out_dir) / "suite.json").string(), summary);
  return kExitOk;
}

}  // namespace qpl::cli
