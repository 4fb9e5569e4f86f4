#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qpl/tensor.hpp"

namespace qpl::data {

constexpr int kImageDim = 32;
constexpr int kChannels = 3;
constexpr int kClasses = 10;
constexpr std::size_t kImageElems =
    static_cast<std::size_t>(kChannels) * kImageDim * kImageDim;

// Images live in [0,1] raw pixel space; normalization happens inside models.
struct Dataset {
  std::vector<float> images;  // N * 3 * 32 * 32, CHW per image
  std::vector<int> labels;    // N values in [0, 10)
  std::string split;
  std::string source;
  std::uint64_t subset_seed = 0;

  int count() const { return static_cast<int>(labels.size()); }
  const float* image_ptr(int i) const { return images.data() + i * kImageElems; }
  Tensor image(int i) const;                          // [3,32,32]
  Tensor batch(const std::vector<int>& idx) const;    // [B,3,32,32]
  Dataset subset(int n, std::uint64_t seed) const;    // without replacement
  void validate() const;
};

// Standard CIFAR-10 binary batches: per record 1 label byte + 3072 pixel
// bytes (R, G, B planes, row-major). Returns 50k train / 10k test.
std::pair<Dataset, Dataset> load_cifar10(const std::string& dir);

// One binary batch file; record count = file size / 3073.
Dataset load_cifar_batch(const std::string& path);

bool cifar10_present(const std::string& dir);

// Procedurally rendered shape/color corpus; deterministic per seed and
// class-balanced within one image. Each class pairs one of five shapes with
// one of two palettes, so both cues are needed to separate all ten.
Dataset synthesize_shapes(int n, int classes, std::uint64_t seed);

struct TransformSpec {
  bool crop = false;            // pad-4 reflect + random 32x32 crop
  float rotation_deg = 0.0f;    // rotate by uniform angle in [-r, +r]
  float flip_p = 0.0f;          // horizontal flip probability
  float noise_sigma = 0.0f;     // gaussian, clamped back to [0,1]
  int jpeg_quality_lo = 0;      // 0 disables; else quality ~ U{lo..hi}
  int jpeg_quality_hi = 0;

  bool enabled() const {
    return crop || rotation_deg > 0 || flip_p > 0 || noise_sigma > 0 || jpeg_quality_lo > 0;
  }

  static TransformSpec none();
  static TransformSpec defense1();  // crop + rot 20 + flip 0.5 + noise 0.1
  static TransformSpec defense2();  // defense1 + jpeg quality 50..70
  static TransformSpec from_name(const std::string& name);
};

// Fixed stage order: crop -> rotate -> flip -> noise -> jpeg. All draws come
// from the supplied rng, so a cloned rng reproduces the output bit-exactly.
void apply_transform(float* img, const TransformSpec& spec, Rng& rng);
Tensor apply_transform(const Tensor& img, const TransformSpec& spec, Rng& rng);

// DCT-quantization round trip of baseline JPEG (BT.601 full-range YCbCr,
// 8x8 blocks, libjpeg quality scaling). Entropy coding is omitted: it is
// lossless and the output is decoded immediately.
void jpeg_like(float* img, int quality);
Tensor jpeg_like(const Tensor& img, int quality);

// Rotate CHW image content about its center, bilinear with zero fill.
void rotate_bilinear(const float* src, float* dst, int channels, int h, int w, float deg);

void write_pgm(const std::string& path, const std::vector<std::uint8_t>& px, int w, int h);
void write_ppm(const std::string& path, const std::vector<std::uint8_t>& rgb, int w, int h);

namespace detail {
// Exposed for the codec tests and the error-bound property check.
void dct8x8(const float* in, float* out);
void idct8x8(const float* in, float* out);
std::array<int, 64> jpeg_quant_table(bool luma, int quality);
}  // namespace detail

}  // namespace qpl::data
