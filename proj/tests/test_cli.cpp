#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "qpl/cli.hpp"
#include "qpl/report.hpp"

using namespace qpl;
using namespace qpl::cli;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(static_cast<bool>(f));
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

json tiny_train_doc(const std::string& out, int bitwidth = 32,
                    const std::string& mode = "none") {
  json d;
  d["seed"] = 11;
  d["dataset"] = {{"source", "synthetic"}, {"subset_size", 160}, {"test_size", 48}};
  d["model"] = {{"arch", "convnet3"}, {"bitwidth", bitwidth}, {"quant_mode", mode}};
  d["train"] = {{"batch_size", 32}, {"epochs", 1},    {"lr", 0.05},
                {"momentum", 0.9},  {"weight_decay", 0.0001}, {"lr_decay_epochs", json::array()}};
  d["out_dir"] = out;
  return d;
}

}  // namespace

TEST_CASE("config schema: unknown keys and type errors are rejected") {
  json doc = tiny_train_doc("x");
  doc["dataset"]["bogus"] = 1;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  json doc2 = tiny_train_doc("x");
  doc2["model"]["quant_mode"] = "magic";
  CHECK_THROWS_AS(parse_config(doc2), ConfigError);

  json doc3 = tiny_train_doc("x");
  doc3["surprise"] = 1;
  CHECK_THROWS_AS(parse_config(doc3), ConfigError);

  json doc4 = tiny_train_doc("x");
  doc4["train"]["epochs"] = "three";
  CHECK_THROWS_AS(parse_config(doc4), ConfigError);

  // the error message names the offending key
  try {
    parse_config(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("dataset.bogus") != std::string::npos);
  }
}

TEST_CASE("train command is idempotent and produces loadable checkpoints") {
  set_workers(2);
  auto dir = fs::temp_directory_path() / "qpl_cli_train";
  fs::remove_all(dir);

  ExperimentConfig cfg = parse_config(tiny_train_doc((dir / "a").string()));
  CHECK(cmd_train(cfg) == kExitOk);
  ExperimentConfig cfg2 = parse_config(tiny_train_doc((dir / "b").string()));
  CHECK(cmd_train(cfg2) == kExitOk);

  CHECK(slurp(dir / "a" / "checkpoint.qnet") == slurp(dir / "b" / "checkpoint.qnet"));
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK(fs::exists(dir / "a" / "run_manifest.json"));

  nn::Model m = nn::load_checkpoint((dir / "a" / "checkpoint.qnet").string());
  CHECK(m.arch == "convnet3");
  CHECK(m.quant_mode == "none");
  fs::remove_all(dir);
}

TEST_CASE("qat training embeds quantizers; ptq command calibrates fp32 checkpoints") {
  set_workers(2);
  auto dir = fs::temp_directory_path() / "qpl_cli_quant";
  fs::remove_all(dir);

  ExperimentConfig fp = parse_config(tiny_train_doc((dir / "fp").string()));
  CHECK(cmd_train(fp) == kExitOk);
  const std::string fp_ckpt = (dir / "fp" / "checkpoint.qnet").string();

  // QAT fine-tune at 2-bit
  json qd = tiny_train_doc((dir / "qat2").string(), 2, "qat");
  qd["train"]["init_from"] = fp_ckpt;
  CHECK(cmd_train(parse_config(qd)) == kExitOk);
  nn::Model q = nn::load_checkpoint((dir / "qat2" / "checkpoint.qnet").string());
  CHECK(q.quant_mode == "qat");
  CHECK(q.quant_bitwidth == 2);
  bool has_frozen_quant = false;
  for (const auto& node : q.nodes)
    if (node.wq && node.wq->frozen && node.wq->bitwidth == 2) has_frozen_quant = true;
  CHECK(has_frozen_quant);

  // PTQ at 8-bit, twice: identical outputs
  json pd;
  pd["seed"] = 11;
  pd["dataset"] = {{"source", "synthetic"}, {"subset_size", 160}, {"test_size", 48}};
  pd["model"] = {{"arch", "convnet3"}, {"bitwidth", 8}, {"quant_mode", "ptq"}};
  pd["eval"] = {{"calib_size", 128}};
  pd["out_dir"] = (dir / "ptq8a").string();
  CHECK(cmd_quantize_ptq(parse_config(pd), fp_ckpt) == kExitOk);
  pd["out_dir"] = (dir / "ptq8b").string();
  CHECK(cmd_quantize_ptq(parse_config(pd), fp_ckpt) == kExitOk);
  CHECK(slurp(dir / "ptq8a" / "checkpoint.qnet") == slurp(dir / "ptq8b" / "checkpoint.qnet"));

  // ptq on a qat checkpoint is a usage error
  pd["out_dir"] = (dir / "ptq_bad").string();
  CHECK_THROWS_AS(cmd_quantize_ptq(parse_config(pd), (dir / "qat2" / "checkpoint.qnet").string()),
                  UsageError);
  fs::remove_all(dir);
}

TEST_CASE("craft + asr + transfer command flow with report shapes") {
  set_workers(2);
  auto dir = fs::temp_directory_path() / "qpl_cli_flow";
  fs::remove_all(dir);

  CHECK(cmd_train(parse_config(tiny_train_doc((dir / "fp").string()))) == kExitOk);
  const std::string fp_ckpt = (dir / "fp" / "checkpoint.qnet").string();
  json qd = tiny_train_doc((dir / "qat2").string(), 2, "qat");
  qd["train"]["init_from"] = fp_ckpt;
  CHECK(cmd_train(parse_config(qd)) == kExitOk);
  const std::string q_ckpt = (dir / "qat2" / "checkpoint.qnet").string();

  json cd;
  cd["seed"] = 3;
  cd["dataset"] = {{"source", "synthetic"}, {"subset_size", 96}, {"test_size", 32}};
  cd["attack"] = {{"kind", "lavan"}, {"patch_size", 6}, {"iters", 25}, {"lr", 0.05}};
  cd["out_dir"] = (dir / "patch").string();
  CHECK(cmd_attack_craft(parse_config(cd), fp_ckpt) == kExitOk);
  const std::string patch = (dir / "patch" / "patch.qpch").string();
  CHECK(fs::exists(patch));

  json ed;
  ed["seed"] = 4;
  ed["dataset"] = {{"source", "synthetic"}, {"subset_size", 96}, {"test_size", 48}};
  ed["eval"] = {
      {"runs", 2},
      {"batch_size", 64},
      {"patch", patch},
      {"checkpoints",
       json::array({json{{"arch", "convnet3"}, {"bitwidth", 32}, {"quant_mode", "none"}, {"path", fp_ckpt}},
                    json{{"arch", "convnet3"}, {"bitwidth", 2}, {"quant_mode", "qat"}, {"path", q_ckpt}}})}};
  ed["out_dir"] = (dir / "transfer").string();
  CHECK(cmd_eval_transfer(parse_config(ed)) == kExitOk);

  const std::string csv = slurp(dir / "transfer" / "transfer.csv");
  // grid: header + one row per arch; one column per bitwidth
  CHECK(csv.find("arch,32-bit,2-bit") == 0);
  CHECK(csv.find("convnet3,") != std::string::npos);

  json report = json::parse(slurp(dir / "transfer" / "transfer.json"));
  CHECK(report.at("experiment") == "eval-transfer");
  CHECK(report.at("results").at("rows").size() == 1);
  CHECK(report.at("results").at("rows")[0].at("cells").size() == 2);
  CHECK(report.contains("environment"));

  // reruns produce byte-identical reports
  ed["out_dir"] = (dir / "transfer2").string();
  CHECK(cmd_eval_transfer(parse_config(ed)) == kExitOk);
  json r2 = json::parse(slurp(dir / "transfer2" / "transfer.json"));
  CHECK(report.at("results") == r2.at("results"));
  fs::remove_all(dir);
}

TEST_CASE("run_cli maps error classes onto the exit-code contract") {
  auto dir = fs::temp_directory_path() / "qpl_cli_codes";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // invalid schema -> 2
  {
    std::ofstream f(dir / "bad.json");
    f << "{\"nope\": 1}";
  }
  const std::string bad = (dir / "bad.json").string();
  {
    const char* argv[] = {"qpl", "train", "--config", bad.c_str()};
    CHECK(run_cli(4, const_cast<char**>(argv)) == kExitConfig);
  }

  // missing config -> 3
  {
    const char* argv[] = {"qpl", "train", "--config", "/definitely/not/here.json"};
    CHECK(run_cli(4, const_cast<char**>(argv)) == kExitMissingArtifact);
  }

  // missing patch artifact -> 3
  {
    json ed;
    ed["seed"] = 1;
    ed["eval"] = {{"patch", (dir / "ghost.qpch").string()},
                  {"checkpoints", json::array({json{{"arch", "convnet3"},
                                                    {"bitwidth", 32},
                                                    {"quant_mode", "none"},
                                                    {"path", (dir / "ghost.qnet").string()}}})}};
    ed["out_dir"] = (dir / "x").string();
    std::ofstream f(dir / "eval.json");
    f << ed.dump();
    f.close();
    const std::string cfg = (dir / "eval.json").string();
    const char* argv[] = {"qpl", "eval-asr", "--config", cfg.c_str()};
    CHECK(run_cli(4, const_cast<char**>(argv)) == kExitMissingArtifact);
  }
  fs::remove_all(dir);
}

TEST_CASE("fnv1a content hash is stable") {
  auto dir = fs::temp_directory_path() / "qpl_cli_hash";
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "f.bin", std::ios::binary);
    f << "hello";
  }
  const std::string h1 = report::fnv1a_file_hex((dir / "f.bin").string());
  const std::string h2 = report::fnv1a_file_hex((dir / "f.bin").string());
  CHECK(h1 == h2);
  CHECK(h1.size() == 16);
  {
    std::ofstream f(dir / "f.bin", std::ios::binary);
    f << "hullo";
  }
  CHECK(report::fnv1a_file_hex((dir / "f.bin").string()) != h1);
  fs::remove_all(dir);
}
