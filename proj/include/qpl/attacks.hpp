#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qpl/data.hpp"
#include "qpl/model.hpp"
#include "qpl/tensor.hpp"

namespace qpl::attack {

struct PixelAttackConfig {
  float epsilon = 8.0f / 255.0f;  // l-inf budget in raw pixel units
  float alpha = 1.0f / 255.0f;    // per-step size
  int steps = 10;
  bool random_start = false;
  bool targeted = false;
  int target = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Position is the top-left corner of the (scaled) square before rotation;
// rotation spins the square about its own center.
struct PatchPlacement {
  int row = 0;
  int col = 0;
  float rotation_deg = 0.0f;
  float scale = 1.0f;
};

struct PatchArtifact {
  Tensor pixels;  // [3,k,k] in [0,1]
  int size = 0;
  std::string mode = "untargeted_lavan";  // or "targeted_gap"
  int target = -1;
  std::string substitute_arch;
  int substitute_bitwidth = 32;
  std::uint64_t seed = 0;
  int iterations = 0;
  float lr = 0.0f;
  std::vector<float> best_objective_history;  // running best, one entry per log interval
};

struct EotConfig {
  float rotation_deg = 20.0f;  // draw from [-r, +r]
  float scale_lo = 0.8f;
  float scale_hi = 1.2f;
  int samples_per_step = 4;
  std::optional<std::pair<int, int>> fixed_position;  // unset: uniform over valid positions

  void validate() const;
};

struct CraftConfig {
  int size = 6;
  int iters = 20000;
  float lr = 0.05f;
  std::uint64_t seed = 0;
  int log_every = 250;
};

bool placement_valid(const PatchPlacement& p, int k, int img_dim = data::kImageDim);
PatchPlacement random_placement(Rng& rng, int k, int img_dim = data::kImageDim);

// x' = (1-m) . x + m . T(patch); T scales, rotates (bilinear), translates.
// The mask is the transformed square footprint under the nearest-texel rule.
Tensor apply_patch(const Tensor& img, const PatchArtifact& patch, const PatchPlacement& place);

// Differentiable core over a batch with per-image placements. Gradients flow
// to the patch pixels (and to the images outside the footprint).
Tensor apply_patch_batch(Tape* tape, const Tensor& images, const Tensor& patch_pixels,
                         const std::vector<PatchPlacement>& places);

// d(cross-entropy)/d(input) at x for the given labels, eval-mode model.
Tensor input_gradient(nn::Model& model, const Tensor& x, const std::vector<int>& y);

Tensor fgsm(nn::Model& model, const Tensor& x, const std::vector<int>& y,
            const PixelAttackConfig& cfg);
Tensor pgd(nn::Model& model, const Tensor& x, const std::vector<int>& y,
           const PixelAttackConfig& cfg);

// LAVAN-style untargeted crafting: per iteration, one random image and one
// random valid position; Adam ascent on the true-label cross-entropy.
PatchArtifact craft_lavan(nn::Model& model, const data::Dataset& data, const CraftConfig& cfg);

// GAP-style targeted crafting with expectation over transformation.
PatchArtifact craft_gap(nn::Model& model, const data::Dataset& data, int target,
                        const EotConfig& eot, const CraftConfig& cfg);

// "QPCH" artifact file: magic, u32 version, u64 metadata length, UTF-8 JSON
// metadata, raw little-endian f32 pixels.
void save_patch(const PatchArtifact& p, const std::string& path);
PatchArtifact load_patch(const std::string& path);

}  // namespace qpl::attack
