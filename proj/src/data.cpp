#include "qpl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace qpl::data {

Tensor Dataset::image(int i) const {
  Tensor t(Shape{kChannels, kImageDim, kImageDim});
  std::copy(image_ptr(i), image_ptr(i) + kImageElems, t.data());
  return t;
}

Tensor Dataset::batch(const std::vector<int>& idx) const {
  Tensor t(Shape{static_cast<int>(idx.size()), kChannels, kImageDim, kImageDim});
  for (std::size_t b = 0; b < idx.size(); ++b)
    std::copy(image_ptr(idx[b]), image_ptr(idx[b]) + kImageElems, t.data() + b * kImageElems);
  return t;
}

Dataset Dataset::subset(int n, std::uint64_t seed) const {
  if (n > count()) throw ConfigError("subset larger than dataset");
  std::vector<int> idx(count());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0xD5));
  for (int i = count() - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.uniform_int(0, i)]);
  Dataset out;
  out.split = split;
  out.source = source;
  out.subset_seed = seed;
  out.images.resize(static_cast<std::size_t>(n) * kImageElems);
  out.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    std::copy(image_ptr(idx[i]), image_ptr(idx[i]) + kImageElems,
              out.images.data() + static_cast<std::size_t>(i) * kImageElems);
    out.labels[i] = labels[idx[i]];
  }
  return out;
}

void Dataset::validate() const {
  if (labels.empty()) throw DataError("dataset is empty");
  if (images.size() != labels.size() * kImageElems)
    throw DataError("dataset image buffer size mismatch");
  for (int y : labels)
    if (y < 0 || y >= kClasses) throw DataError("label outside [0,10)");
  for (float v : images)
    if (!(v >= 0.0f && v <= 1.0f)) throw DataError("pixel outside [0,1]");
}

Dataset load_cifar_batch(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw FormatError("cannot open " + path);
  constexpr std::size_t rec = 1 + kImageElems;
  const auto size = static_cast<std::size_t>(f.tellg());
  if (size == 0 || size % rec != 0)
    throw FormatError(path + ": size " + std::to_string(size) +
                      " is not a multiple of the 3073-byte record");
  const int records = static_cast<int>(size / rec);
  f.seekg(0);

  Dataset out;
  out.source = "cifar10";
  out.images.reserve(static_cast<std::size_t>(records) * kImageElems);
  out.labels.reserve(records);
  std::vector<unsigned char> buf(rec);
  for (int r = 0; r < records; ++r) {
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(rec));
    if (static_cast<std::size_t>(f.gcount()) != rec)
      throw FormatError(path + ": short read at record " + std::to_string(r) + " (offset " +
                        std::to_string(static_cast<std::size_t>(r) * rec) + ")");
    const int label = buf[0];
    if (label < 0 || label >= kClasses)
      throw FormatError(path + ": bad label at record " + std::to_string(r));
    out.labels.push_back(label);
    const std::size_t base = out.images.size();
    out.images.resize(base + kImageElems);
    for (std::size_t i = 0; i < kImageElems; ++i)
      out.images[base + i] = static_cast<float>(buf[1 + i]) / 255.0f;
  }
  return out;
}

bool cifar10_present(const std::string& dir) {
  if (dir.empty()) return false;
  for (int i = 1; i <= 5; ++i) {
    std::ifstream f(dir + "/data_batch_" + std::to_string(i) + ".bin", std::ios::binary);
    if (!f) return false;
  }
  std::ifstream t(dir + "/test_batch.bin", std::ios::binary);
  return static_cast<bool>(t);
}

std::pair<Dataset, Dataset> load_cifar10(const std::string& dir) {
  Dataset train;
  train.split = "train";
  train.source = "cifar10";
  for (int i = 1; i <= 5; ++i) {
    Dataset part = load_cifar_batch(dir + "/data_batch_" + std::to_string(i) + ".bin");
    train.images.insert(train.images.end(), part.images.begin(), part.images.end());
    train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
  }
  Dataset test = load_cifar_batch(dir + "/test_batch.bin");
  test.split = "test";
  if (train.count() != 50000)
    throw FormatError(dir + ": expected 50000 training records, found " +
                      std::to_string(train.count()));
  if (test.count() != 10000)
    throw FormatError(dir + ": expected 10000 test records, found " +
                      std::to_string(test.count()));
  return {std::move(train), std::move(test)};
}

namespace {

struct Vec2 {
  float y, x;
};

float shape_sdf(int shape, Vec2 p, float r, float cphi, float sphi) {
  // p is the pixel offset from the shape center; (cphi, sphi) encode the
  // shape's own rotation angle
  const float u = cphi * p.x + sphi * p.y;
  const float v = -sphi * p.x + cphi * p.y;
  switch (shape) {
    case 0:  // disk
      return std::sqrt(p.x * p.x + p.y * p.y) - r;
    case 1:  // square
      return std::max(std::fabs(u), std::fabs(v)) - 0.8f * r;
    case 2: {  // equilateral triangle with circumradius r
      float d = -1e9f;
      for (int k = 0; k < 3; ++k) {
        const float a = 1.5707963f + static_cast<float>(k) * 2.0943951f;
        const float nu = std::cos(a), nv = std::sin(a);
        d = std::max(d, nu * u + nv * v);
      }
      return d - 0.5f * r;
    }
    case 3: {  // plus
      const float w = 0.34f * r;
      const float d1 = std::max(std::fabs(u) - r, std::fabs(v) - w);
      const float d2 = std::max(std::fabs(u) - w, std::fabs(v) - r);
      return std::min(d1, d2);
    }
    default: {  // ring
      const float rad = std::sqrt(p.x * p.x + p.y * p.y);
      return std::fabs(rad - 0.72f * r) - 0.28f * r;
    }
  }
}

}  // namespace

Dataset synthesize_shapes(int n, int classes, std::uint64_t seed) {
  if (classes < 1 || classes > kClasses) throw ConfigError("synthesize_shapes: classes in [1,10]");
  if (n < classes) throw ConfigError("synthesize_shapes: need n >= classes");
  Dataset out;
  out.split = "synthetic";
  out.source = "synthetic";
  out.subset_seed = seed;
  out.images.resize(static_cast<std::size_t>(n) * kImageElems);
  out.labels.resize(n);

  const float palettes[2][3] = {{0.85f, 0.32f, 0.20f}, {0.20f, 0.42f, 0.85f}};

  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, 0x5aa9e5, static_cast<std::uint64_t>(i)));
    const int label = i % classes;
    out.labels[i] = label;
    const int shape = label % 5;
    const int palette = (label / 5) % 2;

    float* img = out.images.data() + static_cast<std::size_t>(i) * kImageElems;

    float bga[3], bgb[3];
    for (int c = 0; c < 3; ++c) {
      bga[c] = static_cast<float>(rng.uniform(0.25, 0.65));
      bgb[c] = static_cast<float>(rng.uniform(0.25, 0.65));
    }
    const bool vertical = rng.next_u64() & 1;

    const float cy = 16.0f + static_cast<float>(rng.uniform(-4.0, 4.0));
    const float cx = 16.0f + static_cast<float>(rng.uniform(-4.0, 4.0));
    const float radius = static_cast<float>(rng.uniform(6.5, 10.0));
    const float phi = static_cast<float>(rng.uniform(0.0, 6.2831853));
    const float cphi = std::cos(phi), sphi = std::sin(phi);
    float color[3];
    for (int c = 0; c < 3; ++c)
      color[c] = std::clamp(
          palettes[palette][c] + static_cast<float>(rng.uniform(-0.10, 0.10)), 0.0f, 1.0f);

    for (int h = 0; h < kImageDim; ++h) {
      for (int w = 0; w < kImageDim; ++w) {
        const float t = (vertical ? h : w) / 31.0f;
        const Vec2 p{static_cast<float>(h) - cy, static_cast<float>(w) - cx};
        const float d = shape_sdf(shape, p, radius, cphi, sphi);
        const float alpha = std::clamp(0.5f - d, 0.0f, 1.0f);
        for (int c = 0; c < 3; ++c) {
          const float bg = bga[c] * (1.0f - t) + bgb[c] * t;
          img[(c * kImageDim + h) * kImageDim + w] = bg * (1.0f - alpha) + color[c] * alpha;
        }
      }
    }

    // mild pixel noise keeps the model's confidence honest
    for (std::size_t e = 0; e < kImageElems; ++e)
      img[e] = std::clamp(img[e] + 0.03f * static_cast<float>(rng.normal()), 0.0f, 1.0f);
  }
  return out;
}

TransformSpec TransformSpec::none() { return TransformSpec{}; }

TransformSpec TransformSpec::defense1() {
  TransformSpec s;
  s.crop = true;
  s.rotation_deg = 20.0f;
  s.flip_p = 0.5f;
  s.noise_sigma = 0.1f;
  return s;
}

TransformSpec TransformSpec::defense2() {
  TransformSpec s = defense1();
  s.jpeg_quality_lo = 50;
  s.jpeg_quality_hi = 70;
  return s;
}

TransformSpec TransformSpec::from_name(const std::string& name) {
  if (name == "none") return none();
  if (name == "defense1") return defense1();
  if (name == "defense2") return defense2();
  throw ConfigError("unknown defense name: " + name);
}

void rotate_bilinear(const float* src, float* dst, int channels, int h, int w, float deg) {
  const float rad = deg * 3.14159265358979323846f / 180.0f;
  const float c = std::cos(rad), s = std::sin(rad);
  const float cy = (static_cast<float>(h) - 1.0f) / 2.0f;
  const float cx = (static_cast<float>(w) - 1.0f) / 2.0f;
  for (int ch = 0; ch < channels; ++ch) {
    const float* sp = src + static_cast<std::size_t>(ch) * h * w;
    float* dp = dst + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        // inverse-map the destination pixel into source coordinates
        const float dy = static_cast<float>(y) - cy;
        const float dx = static_cast<float>(x) - cx;
        const float sy = c * dy + s * dx + cy;
        const float sx = -s * dy + c * dx + cx;
        const int y0 = static_cast<int>(std::floor(sy));
        const int x0 = static_cast<int>(std::floor(sx));
        const float fy = sy - static_cast<float>(y0);
        const float fx = sx - static_cast<float>(x0);
        float acc = 0.0f;
        for (int oy = 0; oy <= 1; ++oy) {
          for (int ox = 0; ox <= 1; ++ox) {
            const int yy = y0 + oy, xx = x0 + ox;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            const float wgt = (oy ? fy : 1.0f - fy) * (ox ? fx : 1.0f - fx);
            acc += wgt * sp[yy * w + xx];
          }
        }
        dp[y * w + x] = acc;
      }
    }
  }
}

void apply_transform(float* img, const TransformSpec& spec, Rng& rng) {
  constexpr int D = kImageDim;
  if (spec.crop) {
    constexpr int P = 4, PD = D + 2 * P;
    std::vector<float> padded(static_cast<std::size_t>(kChannels) * PD * PD);
    for (int c = 0; c < kChannels; ++c)
      for (int y = 0; y < PD; ++y)
        for (int x = 0; x < PD; ++x) {
          int sy = y - P, sx = x - P;
          if (sy < 0) sy = -sy;
          if (sy >= D) sy = 2 * D - 2 - sy;
          if (sx < 0) sx = -sx;
          if (sx >= D) sx = 2 * D - 2 - sx;
          padded[(c * PD + y) * PD + x] = img[(c * D + sy) * D + sx];
        }
    const int oy = rng.uniform_int(0, 2 * P);
    const int ox = rng.uniform_int(0, 2 * P);
    for (int c = 0; c < kChannels; ++c)
      for (int y = 0; y < D; ++y)
        for (int x = 0; x < D; ++x)
          img[(c * D + y) * D + x] = padded[(c * PD + y + oy) * PD + x + ox];
  }
  if (spec.rotation_deg > 0.0f) {
    const float deg = static_cast<float>(rng.uniform(-spec.rotation_deg, spec.rotation_deg));
    std::vector<float> out(kImageElems);
    rotate_bilinear(img, out.data(), kChannels, D, D, deg);
    std::copy(out.begin(), out.end(), img);
  }
  if (spec.flip_p > 0.0f) {
    if (rng.uniform() < spec.flip_p) {
      for (int c = 0; c < kChannels; ++c)
        for (int y = 0; y < D; ++y)
          for (int x = 0; x < D / 2; ++x)
            std::swap(img[(c * D + y) * D + x], img[(c * D + y) * D + (D - 1 - x)]);
    }
  }
  if (spec.noise_sigma > 0.0f) {
    for (std::size_t i = 0; i < kImageElems; ++i)
      img[i] = std::clamp(
          img[i] + spec.noise_sigma * static_cast<float>(rng.normal()), 0.0f, 1.0f);
  }
  if (spec.jpeg_quality_lo > 0) {
    const int q = rng.uniform_int(spec.jpeg_quality_lo, spec.jpeg_quality_hi);
    jpeg_like(img, q);
  }
}

Tensor apply_transform(const Tensor& img, const TransformSpec& spec, Rng& rng) {
  Tensor out = img.clone();
  apply_transform(out.data(), spec, rng);
  return out;
}

Tensor jpeg_like(const Tensor& img, int quality) {
  Tensor out = img.clone();
  jpeg_like(out.data(), quality);
  return out;
}

void write_pgm(const std::string& path, const std::vector<std::uint8_t>& px, int w, int h) {
  if (px.size() != static_cast<std::size_t>(w) * h) throw UsageError("write_pgm: size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

void write_ppm(const std::string& path, const std::vector<std::uint8_t>& rgb, int w, int h) {
  if (rgb.size() != static_cast<std::size_t>(w) * h * 3)
    throw UsageError("write_ppm: size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

}  // namespace qpl::data
