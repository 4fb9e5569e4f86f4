#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qpl/attacks.hpp"
#include "qpl/data.hpp"
#include "qpl/model.hpp"

namespace qpl::harness {

// Attack success rate over repeated runs, percent.
// Untargeted: #(clean-correct and patched-misclassified) / #(clean-correct).
// Targeted:   #(patched-predicted == target) over clean-correct images whose
//             true label differs from the target.
struct AsrResult {
  double mean = 0.0;
  double stddev = 0.0;  // population std over runs
  int runs = 0;
  std::vector<double> per_run;
  std::vector<int> denominators;
  bool degenerate = false;  // empty denominator

  static AsrResult from_runs(std::vector<double> vals, std::vector<int> denoms);
};

enum class PlacementPolicy { random, fixed };

struct AsrOptions {
  PlacementPolicy policy = PlacementPolicy::random;
  attack::PatchPlacement fixed_place;
  int runs = 10;
  std::uint64_t seed = 0;
  int batch_size = 256;
};

AsrResult asr_untargeted(nn::Model& model, const data::Dataset& test,
                         const attack::PatchArtifact& patch, const AsrOptions& opt);
AsrResult asr_targeted(nn::Model& model, const data::Dataset& test,
                       const attack::PatchArtifact& patch, int target, const AsrOptions& opt);

// A loaded evaluation target; label carries "arch@bitwidth(mode)" context.
struct ModelRef {
  std::string arch;
  int bitwidth = 32;
  std::string quant_mode = "none";
  nn::Model* model = nullptr;

  std::string label() const {
    return arch + "@" + std::to_string(bitwidth) + "-bit(" + quant_mode + ")";
  }
};

struct TransferCell {
  bool present = false;
  std::string note;  // failure note when absent
  AsrResult asr;
};

struct TransferMatrix {
  std::string substitute;
  std::string patch_mode;
  std::vector<std::string> row_archs;
  std::vector<int> col_bitwidths;
  std::vector<std::vector<TransferCell>> cells;  // [row][col]
};

// Grid of ASR evaluations; targeted/untargeted follows the patch mode.
// Per-cell failures are recorded and the grid continues.
TransferMatrix transfer_matrix(const attack::PatchArtifact& patch,
                               std::vector<ModelRef>& targets, const data::Dataset& test,
                               const AsrOptions& opt);

// Channel-mean tap activations, min-max normalized to [0,255], as PGM + CSV
// with a JSON manifest. One file per (model, input, tap).
struct FeatureMapManifestEntry {
  std::string model;
  std::string input;
  std::string tap;
  std::string pgm_path;
  std::string csv_path;
  int height = 0, width = 0;
};

std::vector<FeatureMapManifestEntry> featuremap_dump(
    std::vector<ModelRef>& models, const std::map<std::string, Tensor>& inputs,
    const std::vector<std::string>& taps, const std::string& outdir);

// Cross-entropy input gradients of quantized models against the
// full-precision reference: cosine similarity and MSE over flattened inputs.
struct AlignmentCell {
  int bitwidth = 0;
  double cosine_mean = 0.0;
  double mse_mean = 0.0;
  int samples = 0;
  int skipped = 0;  // zero-norm gradients
};

struct AlignmentResult {
  // kind ("patch", "pixel") -> one cell per quantized model
  std::map<std::string, std::vector<AlignmentCell>> by_kind;
};

struct AlignmentInputs {
  std::string kind;
  Tensor images;            // [N,3,32,32]
  std::vector<int> labels;  // true labels; gradient loss is CE w.r.t. these
};

AlignmentResult gradient_alignment(nn::Model& fp_model, std::vector<ModelRef>& q_models,
                                   const std::vector<AlignmentInputs>& input_sets,
                                   int batch_size = 64);

// ASR per (placement, bitwidth); invalid placements are kept with a note.
struct SpatialCell {
  attack::PatchPlacement place;
  bool valid = true;
  std::string note;
  std::map<int, AsrResult> by_bitwidth;
};

struct SpatialReport {
  std::vector<SpatialCell> cells;
};

SpatialReport spatial_sweep(std::vector<ModelRef>& models, const attack::PatchArtifact& patch,
                            const std::vector<attack::PatchPlacement>& placements,
                            const data::Dataset& test, const AsrOptions& opt);

// Crafts one patch per size on the substitute, evaluates across the models.
struct SizeCell {
  int size = 0;
  attack::PatchArtifact patch;
  std::map<int, AsrResult> by_bitwidth;
};

struct SizeReport {
  std::vector<SizeCell> cells;
};

SizeReport size_sweep(nn::Model& substitute, std::vector<ModelRef>& models,
                      const std::vector<int>& sizes, const attack::CraftConfig& craft_cfg,
                      const data::Dataset& craft_data, const data::Dataset& test,
                      const AsrOptions& opt);

// Robust accuracy per (model, epsilon); epsilon 0 reads clean accuracy.
// When source is non-null the adversarial examples are crafted on it
// (transfer setting); otherwise each model attacks itself.
struct PgdCurve {
  std::string label;
  int bitwidth = 0;
  std::vector<double> accuracy;  // percent, aligned with epsilons
};

struct PgdSweepReport {
  std::vector<float> epsilons;
  std::vector<PgdCurve> curves;
};

PgdSweepReport pgd_accuracy_sweep(std::vector<ModelRef>& models,
                                  const std::vector<float>& epsilons,
                                  const attack::PixelAttackConfig& base_cfg,
                                  const data::Dataset& test, nn::Model* source = nullptr,
                                  int batch_size = 128);

// Mean/std accuracy over runs for defense x input-set x model; stochastic
// transforms are re-drawn per run from per-image seed streams.
struct DefenseCell {
  std::string defense;
  std::string input;  // "clean" | "adv"
  int bitwidth = 0;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_run;
};

struct DefenseReport {
  int runs = 0;
  std::vector<DefenseCell> cells;
};

DefenseReport defense_eval(std::vector<ModelRef>& models,
                           const std::vector<std::string>& defenses, const data::Dataset& clean,
                           const data::Dataset& adv, int runs, std::uint64_t seed,
                           int batch_size = 256);

// Shared helpers.
std::vector<int> predict_dataset(nn::Model& model, const data::Dataset& ds, int batch_size = 256);
double dataset_accuracy(nn::Model& model, const data::Dataset& ds, int batch_size = 256);

}  // namespace qpl::harness
