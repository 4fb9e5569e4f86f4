#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qpl/attacks.hpp"
#include "qpl/harness.hpp"
#include "qpl/model.hpp"

namespace qpl::cli {

using json = nlohmann::ordered_json;

// Unified experiment configuration document. Every command validates the
// sections it uses; unknown keys are rejected with a pointer to the key.
struct DatasetSpec {
  std::string source = "synthetic";   // synthetic | cifar10
  int subset_size = 2000;             // training subset
  int test_size = 512;
  std::uint64_t subset_seed = 0;
  std::string dir;                    // cifar10 directory; QPL_DATA_DIR fallback
};

struct ModelSpec {
  std::string arch = "resnet20";
  int bitwidth = 32;
  std::string quant_mode = "none";  // none | qat | ptq
};

struct TrainSpec {
  nn::TrainConfig cfg;
  std::string init_from;  // optional checkpoint to fine-tune from
};

struct AttackSpec {
  std::string kind = "lavan";  // lavan | gap | fgsm | pgd
  int patch_size = 6;
  int iters = 20000;
  float lr = 0.05f;
  int target = 9;
  float epsilon = 8.0f / 255.0f;
  float alpha = 1.0f / 255.0f;
  int steps = 10;
  bool random_start = false;
  attack::EotConfig eot;
};

struct CheckpointRef {
  std::string arch;
  int bitwidth = 32;
  std::string quant_mode = "none";
  std::string path;
};

struct EvalSpec {
  int runs = 10;
  int batch_size = 256;
  std::string placement_policy = "random";  // random | fixed
  std::array<int, 2> fixed_place{0, 0};
  std::vector<std::array<int, 2>> placements;  // spatial sweep shifts
  std::vector<float> rotations;                // spatial sweep angles (deg)
  std::vector<float> epsilons;                 // pgd sweep
  std::vector<int> sizes;                      // size sweep
  std::vector<std::string> defenses;           // defense study
  std::vector<CheckpointRef> checkpoints;      // evaluation targets
  std::string patch;                           // patch artifact path
  std::string substitute;                      // substitute checkpoint path
  std::string source_checkpoint;               // pgd transfer source
  int calib_size = 512;
  int image_index = 0;     // feature-map probe image
  int align_samples = 256; // gradient-alignment inputs
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  ModelSpec model;
  TrainSpec train;
  AttackSpec attack;
  EvalSpec eval;
  std::string out_dir = "out";
  json raw;  // the resolved document, for manifests and reports
};

ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config_file(const std::string& path);

// Stable exit-code contract.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitRuntime = 4;

struct MissingArtifact : Error {
  using Error::Error;
};

// Wall-clock and per-stage durations land here (and only here).
class ManifestWriter {
 public:
  ManifestWriter(std::string command, json config);
  void add_input(const std::string& path);
  void add_output(const std::string& path);
  void add_duration(const std::string& stage, double ms);
  void write(const std::string& out_dir);

 private:
  json j_;
};

// Command entry points; each writes reports + a run manifest into
// cfg.out_dir and returns kExitOk.
int cmd_train(const ExperimentConfig& cfg);
int cmd_quantize_ptq(const ExperimentConfig& cfg, const std::string& checkpoint);
int cmd_attack_craft(const ExperimentConfig& cfg, const std::string& checkpoint);
int cmd_eval_asr(const ExperimentConfig& cfg);
int cmd_eval_transfer(const ExperimentConfig& cfg);
int cmd_eval_spatial(const ExperimentConfig& cfg);
int cmd_eval_sizes(const ExperimentConfig& cfg);
int cmd_eval_pgd(const ExperimentConfig& cfg);
int cmd_analyze_featmaps(const ExperimentConfig& cfg);
int cmd_analyze_gradalign(const ExperimentConfig& cfg);
int cmd_eval_defense(const ExperimentConfig& cfg);
int cmd_suite(const std::string& suite_path, const std::string& out_override,
              std::optional<std::uint64_t> seed_override);

// Shared helpers (also used by the acceptance suite).
std::pair<data::Dataset, data::Dataset> resolve_dataset(const DatasetSpec& spec,
                                                        std::uint64_t seed);
nn::Model load_checkpoint_checked(const std::string& path);
int run_cli(int argc, char** argv);

}  // namespace qpl::cli
