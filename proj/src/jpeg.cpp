#include <algorithm>
#include <array>
#include <cmath>

#include "qpl/data.hpp"

namespace qpl::data {

namespace {

// Annex-K base tables.
constexpr int kLumaTable[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

constexpr int kChromaTable[64] = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

struct DctBasis {
  // cos((2x+1) u pi / 16) with the C(u) normalization folded in
  float m[8][8];
  DctBasis() {
    for (int u = 0; u < 8; ++u) {
      const float cu = u == 0 ? 1.0f / std::sqrt(2.0f) : 1.0f;
      for (int x = 0; x < 8; ++x)
        m[u][x] = 0.5f * cu *
                  std::cos((2.0f * static_cast<float>(x) + 1.0f) * static_cast<float>(u) *
                           3.14159265358979323846f / 16.0f);
    }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

}  // namespace

namespace detail {

void dct8x8(const float* in, float* out) {
  const auto& B = basis();
  float tmp[64];
  // rows
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      float acc = 0.0f;
      for (int x = 0; x < 8; ++x) acc += B.m[u][x] * in[y * 8 + x];
      tmp[y * 8 + u] = acc;
    }
  // columns
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      float acc = 0.0f;
      for (int y = 0; y < 8; ++y) acc += B.m[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = acc;
    }
}

void idct8x8(const float* in, float* out) {
  const auto& B = basis();
  float tmp[64];
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      float acc = 0.0f;
      for (int u = 0; u < 8; ++u) acc += B.m[u][x] * in[v * 8 + u];
      tmp[v * 8 + x] = acc;
    }
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      float acc = 0.0f;
      for (int v = 0; v < 8; ++v) acc += B.m[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = acc;
    }
}

std::array<int, 64> jpeg_quant_table(bool luma, int quality) {
  if (quality < 1 || quality > 100) throw ConfigError("jpeg quality must be in [1,100]");
  // libjpeg scaling rule
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> out{};
  const int* base = luma ? kLumaTable : kChromaTable;
  for (int i = 0; i < 64; ++i)
    out[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return out;
}

}  // namespace detail

void jpeg_like(float* img, int quality) {
  constexpr int D = kImageDim;
  const auto luma = detail::jpeg_quant_table(true, quality);
  const auto chroma = detail::jpeg_quant_table(false, quality);

  // RGB -> full-range BT.601 YCbCr on the 0..255 scale
  std::array<std::vector<float>, 3> ycc;
  for (auto& p : ycc) p.resize(static_cast<std::size_t>(D) * D);
  for (int i = 0; i < D * D; ++i) {
    const float r = img[i] * 255.0f;
    const float g = img[D * D + i] * 255.0f;
    const float b = img[2 * D * D + i] * 255.0f;
    ycc[0][i] = 0.299f * r + 0.587f * g + 0.114f * b;
    ycc[1][i] = 128.0f - 0.168736f * r - 0.331264f * g + 0.5f * b;
    ycc[2][i] = 128.0f + 0.5f * r - 0.418688f * g - 0.081312f * b;
  }

  float block[64], coef[64];
  for (int ch = 0; ch < 3; ++ch) {
    const auto& tbl = ch == 0 ? luma : chroma;
    for (int by = 0; by < D; by += 8) {
      for (int bx = 0; bx < D; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            block[y * 8 + x] = ycc[ch][(by + y) * D + bx + x] - 128.0f;
        detail::dct8x8(block, coef);
        for (int i = 0; i < 64; ++i)
          coef[i] = std::round(coef[i] / static_cast<float>(tbl[i])) * static_cast<float>(tbl[i]);
        detail::idct8x8(coef, block);
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            ycc[ch][(by + y) * D + bx + x] = block[y * 8 + x] + 128.0f;
      }
    }
  }

  for (int i = 0; i < D * D; ++i) {
    const float y = ycc[0][i];
    const float cb = ycc[1][i] - 128.0f;
    const float cr = ycc[2][i] - 128.0f;
    img[i] = std::clamp((y + 1.402f * cr) / 255.0f, 0.0f, 1.0f);
    img[D * D + i] = std::clamp((y - 0.344136f * cb - 0.714136f * cr) / 255.0f, 0.0f, 1.0f);
    img[2 * D * D + i] = std::clamp((y + 1.772f * cb) / 255.0f, 0.0f, 1.0f);
  }
}

}  // namespace qpl::data
