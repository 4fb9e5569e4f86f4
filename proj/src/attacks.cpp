#include "qpl/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "qpl/ops.hpp"

namespace qpl::attack {

using json = nlohmann::ordered_json;

void PixelAttackConfig::validate() const {
  if (epsilon < 0.0f || epsilon > 1.0f) throw ConfigError("epsilon must be in [0,1]");
  if (!(alpha > 0.0f)) throw ConfigError("alpha must be > 0");
  if (epsilon > 0.0f && alpha > epsilon) throw ConfigError("alpha must not exceed epsilon");
  if (steps < 1) throw ConfigError("steps must be >= 1");
}

void EotConfig::validate() const {
  if (rotation_deg < 0.0f) throw ConfigError("eot rotation range must be >= 0");
  if (!(scale_lo > 0.0f) || scale_hi < scale_lo) throw ConfigError("eot scale range invalid");
  if (samples_per_step < 1) throw ConfigError("eot samples_per_step must be >= 1");
}

namespace {

struct Transform {
  float cos_t, sin_t, scale;
  float pc;        // patch center coordinate (k-1)/2
  float tcy, tcx;  // target center in image coordinates

  Transform(const PatchPlacement& p, int k) {
    const float rad = p.rotation_deg * 3.14159265358979323846f / 180.0f;
    cos_t = std::cos(rad);
    sin_t = std::sin(rad);
    scale = p.scale;
    pc = (static_cast<float>(k) - 1.0f) / 2.0f;
    const float m = static_cast<float>(k) * p.scale;
    tcy = static_cast<float>(p.row) + (m - 1.0f) / 2.0f;
    tcx = static_cast<float>(p.col) + (m - 1.0f) / 2.0f;
  }

  // image point -> patch texel coordinates
  void inverse(float qy, float qx, float& u, float& v) const {
    const float dy = qy - tcy, dx = qx - tcx;
    const float ry = (cos_t * dy + sin_t * dx) / scale;
    const float rx = (-sin_t * dy + cos_t * dx) / scale;
    u = ry + pc;
    v = rx + pc;
  }

  // patch point -> image coordinates
  void forward(float u, float v, float& qy, float& qx) const {
    const float py = (u - pc) * scale, px = (v - pc) * scale;
    qy = cos_t * py - sin_t * px + tcy;
    qx = sin_t * py + cos_t * px + tcx;
  }
};

struct Sample {
  int idx[4];
  float w[4];
};

// Bilinear sample of the patch grid at (u, v), border-clamped.
Sample bilinear(float u, float v, int k) {
  const float uc = std::clamp(u, 0.0f, static_cast<float>(k) - 1.0f);
  const float vc = std::clamp(v, 0.0f, static_cast<float>(k) - 1.0f);
  int u0 = static_cast<int>(std::floor(uc));
  int v0 = static_cast<int>(std::floor(vc));
  if (u0 >= k - 1) u0 = k - 2 >= 0 ? k - 2 : 0;
  if (v0 >= k - 1) v0 = k - 2 >= 0 ? k - 2 : 0;
  const int u1 = std::min(u0 + 1, k - 1);
  const int v1 = std::min(v0 + 1, k - 1);
  const float fu = std::clamp(uc - static_cast<float>(u0), 0.0f, 1.0f);
  const float fv = std::clamp(vc - static_cast<float>(v0), 0.0f, 1.0f);
  Sample s;
  s.idx[0] = u0 * k + v0;
  s.idx[1] = u0 * k + v1;
  s.idx[2] = u1 * k + v0;
  s.idx[3] = u1 * k + v1;
  s.w[0] = (1 - fu) * (1 - fv);
  s.w[1] = (1 - fu) * fv;
  s.w[2] = fu * (1 - fv);
  s.w[3] = fu * fv;
  return s;
}

}  // namespace

bool placement_valid(const PatchPlacement& p, int k, int img_dim) {
  if (k < 1 || k > img_dim) return false;
  if (!(p.scale > 0.0f)) return false;
  Transform t(p, k);
  const float lo = -0.5f, hi = static_cast<float>(img_dim) - 0.5f;
  const float corners[4][2] = {{-0.5f, -0.5f},
                               {-0.5f, static_cast<float>(k) - 0.5f},
                               {static_cast<float>(k) - 0.5f, -0.5f},
                               {static_cast<float>(k) - 0.5f, static_cast<float>(k) - 0.5f}};
  for (const auto& c : corners) {
    float qy, qx;
    t.forward(c[0], c[1], qy, qx);
    if (qy < lo || qy > hi || qx < lo || qx > hi) return false;
  }
  return true;
}

PatchPlacement random_placement(Rng& rng, int k, int img_dim) {
  PatchPlacement p;
  p.row = rng.uniform_int(0, img_dim - k);
  p.col = rng.uniform_int(0, img_dim - k);
  return p;
}

Tensor apply_patch_batch(Tape* tape, const Tensor& images, const Tensor& patch_pixels,
                         const std::vector<PatchPlacement>& places) {
  if (images.ndim() != 4) throw ShapeError("apply_patch_batch expects NCHW images");
  if (patch_pixels.ndim() != 3 || patch_pixels.dim(0) != 3 ||
      patch_pixels.dim(1) != patch_pixels.dim(2))
    throw ShapeError("patch pixels must be [3,k,k]");
  const int N = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
  const int k = patch_pixels.dim(1);
  if (static_cast<int>(places.size()) != N)
    throw ShapeError("one placement per image required");
  for (const auto& p : places)
    if (!placement_valid(p, k, H))
      throw UsageError("patch footprint leaves the image at (" + std::to_string(p.row) + "," +
                       std::to_string(p.col) + ") rot " + std::to_string(p.rotation_deg) +
                       " scale " + std::to_string(p.scale));

  Tensor out = images.clone();
  const std::size_t chw = static_cast<std::size_t>(C) * H * W;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::size_t kk = static_cast<std::size_t>(k) * k;

  // (n, pixel, sample) triples recorded for the backward scatter
  struct Touch {
    int n;
    int y, x;
    Sample s;
  };
  auto touches = std::make_shared<std::vector<Touch>>();

  for (int n = 0; n < N; ++n) {
    Transform t(places[n], k);
    // bounding box of the rotated footprint
    float ylo = 1e9f, yhi = -1e9f, xlo = 1e9f, xhi = -1e9f;
    const float corners[4][2] = {{-0.5f, -0.5f},
                                 {-0.5f, static_cast<float>(k) - 0.5f},
                                 {static_cast<float>(k) - 0.5f, -0.5f},
                                 {static_cast<float>(k) - 0.5f, static_cast<float>(k) - 0.5f}};
    for (const auto& c : corners) {
      float qy, qx;
      t.forward(c[0], c[1], qy, qx);
      ylo = std::min(ylo, qy);
      yhi = std::max(yhi, qy);
      xlo = std::min(xlo, qx);
      xhi = std::max(xhi, qx);
    }
    const int y0 = std::max(0, static_cast<int>(std::floor(ylo)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(yhi)));
    const int x0 = std::max(0, static_cast<int>(std::floor(xlo)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(xhi)));

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        float u, v;
        t.inverse(static_cast<float>(y), static_cast<float>(x), u, v);
        // nearest-texel mask rule
        if (u < -0.5f || u >= static_cast<float>(k) - 0.5f || v < -0.5f ||
            v >= static_cast<float>(k) - 0.5f)
          continue;
        const Sample s = bilinear(u, v, k);
        for (int c = 0; c < C; ++c) {
          float acc = 0.0f;
          for (int i = 0; i < 4; ++i) acc += s.w[i] * patch_pixels.data()[c * kk + s.idx[i]];
          out.data()[n * chw + c * hw + y * W + x] = acc;
        }
        if (tape) touches->push_back({n, y, x, s});
      }
    }
  }

  if (tape) {
    Tensor ic = images, pc = patch_pixels, oc = out;
    tape->record([=]() mutable {
      const float* go = oc.grad();
      float* gi = ic.grad();
      float* gp = pc.grad();
      // image gradient: pass-through everywhere, then cancel the footprint
      const std::size_t total = ic.numel();
      for (std::size_t i = 0; i < total; ++i) gi[i] += go[i];
      for (const auto& tch : *touches) {
        for (int c = 0; c < C; ++c) {
          const std::size_t oidx = tch.n * chw + c * hw + static_cast<std::size_t>(tch.y) * W + tch.x;
          gi[oidx] -= go[oidx];
          for (int i = 0; i < 4; ++i) gp[c * kk + tch.s.idx[i]] += tch.s.w[i] * go[oidx];
        }
      }
    });
  }
  return out;
}

Tensor apply_patch(const Tensor& img, const PatchArtifact& patch, const PatchPlacement& place) {
  const bool batched = img.ndim() == 4;
  Tensor in = batched ? img : img.viewed(Shape{1, img.dim(0), img.dim(1), img.dim(2)}).clone();
  Tensor out = apply_patch_batch(nullptr, in, patch.pixels,
                                 std::vector<PatchPlacement>(in.dim(0), place));
  if (!batched) return out.viewed(Shape{img.dim(0), img.dim(1), img.dim(2)});
  return out;
}

namespace {

std::vector<int> attack_labels(const PixelAttackConfig& cfg, const std::vector<int>& y) {
  if (!cfg.targeted) return y;
  return std::vector<int>(y.size(), cfg.target);
}

}  // namespace

Tensor input_gradient(nn::Model& model, const Tensor& x, const std::vector<int>& labels) {
  Tensor leaf = x.clone();
  leaf.set_requires_grad(true);
  Tape tape;
  Tensor logits = model.predict(leaf, &tape);
  Tensor loss = ops::softmax_cross_entropy(&tape, logits, labels);
  tape.backward(loss);
  Tensor g(x.shape());
  std::copy(leaf.grad(), leaf.grad() + leaf.numel(), g.data());
  return g;
}

Tensor fgsm(nn::Model& model, const Tensor& x, const std::vector<int>& y,
            const PixelAttackConfig& cfg) {
  cfg.validate();
  const auto labels = attack_labels(cfg, y);
  Tensor g = input_gradient(model, x, labels);
  // ascend on the true-label loss; descend toward the target when targeted
  const float step = cfg.targeted ? -cfg.epsilon : cfg.epsilon;
  Tensor out = x.clone();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const float s = g.data()[i] > 0.0f ? 1.0f : (g.data()[i] < 0.0f ? -1.0f : 0.0f);
    out.data()[i] = std::clamp(out.data()[i] + step * s, 0.0f, 1.0f);
  }
  return out;
}

Tensor pgd(nn::Model& model, const Tensor& x, const std::vector<int>& y,
           const PixelAttackConfig& cfg) {
  cfg.validate();
  const auto labels = attack_labels(cfg, y);
  Tensor cur = x.clone();
  if (cfg.random_start && cfg.epsilon > 0.0f) {
    Rng rng(derive_seed(cfg.seed, 0x96D));
    for (std::size_t i = 0; i < cur.numel(); ++i)
      cur.data()[i] = std::clamp(
          cur.data()[i] + static_cast<float>(rng.uniform(-cfg.epsilon, cfg.epsilon)), 0.0f, 1.0f);
  }
  const float step = cfg.targeted ? -cfg.alpha : cfg.alpha;
  for (int t = 0; t < cfg.steps; ++t) {
    Tensor g = input_gradient(model, cur, labels);
    for (std::size_t i = 0; i < cur.numel(); ++i) {
      const float s = g.data()[i] > 0.0f ? 1.0f : (g.data()[i] < 0.0f ? -1.0f : 0.0f);
      float v = cur.data()[i] + step * s;
      // project into the epsilon ball, then the pixel box
      v = std::clamp(v, x.data()[i] - cfg.epsilon, x.data()[i] + cfg.epsilon);
      cur.data()[i] = std::clamp(v, 0.0f, 1.0f);
    }
#ifndef NDEBUG
    for (std::size_t i = 0; i < cur.numel(); ++i) {
      if (std::fabs(cur.data()[i] - x.data()[i]) > cfg.epsilon + 1e-6f ||
          cur.data()[i] < 0.0f || cur.data()[i] > 1.0f)
        throw Error("pgd iterate escaped the feasible region");
    }
#endif
  }
  return cur;
}

namespace {

struct Adam {
  std::vector<float> m, v;
  float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
  int t = 0;

  explicit Adam(std::size_t n) : m(n, 0.0f), v(n, 0.0f) {}

  // ascend=false gives plain minimization
  void step(float* w, const float* g, std::size_t n, float lr, bool ascend) {
    ++t;
    const float c1 = 1.0f - std::pow(b1, static_cast<float>(t));
    const float c2 = 1.0f - std::pow(b2, static_cast<float>(t));
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const float upd = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      w[i] += ascend ? upd : -upd;
      w[i] = std::clamp(w[i], 0.0f, 1.0f);
    }
  }
};

Tensor init_patch(int k, Rng& rng) {
  Tensor p(Shape{3, k, k});
  for (std::size_t i = 0; i < p.numel(); ++i) p.data()[i] = static_cast<float>(rng.uniform());
  return p;
}

}  // namespace

PatchArtifact craft_lavan(nn::Model& model, const data::Dataset& data, const CraftConfig& cfg) {
  if (cfg.size < 1 || cfg.size > data::kImageDim) throw ConfigError("patch size out of range");
  data.validate();
  Rng rng(derive_seed(cfg.seed, 0x1A7A));

  PatchArtifact art;
  art.size = cfg.size;
  art.mode = "untargeted_lavan";
  art.substitute_arch = model.arch;
  art.substitute_bitwidth = model.quant_bitwidth;
  art.seed = cfg.seed;
  art.iterations = cfg.iters;
  art.lr = cfg.lr;
  art.pixels = init_patch(cfg.size, rng);
  art.pixels.set_requires_grad(true);

  Adam adam(art.pixels.numel());
  float best = -1e30f;
  for (int it = 0; it < cfg.iters; ++it) {
    const int i = rng.uniform_int(0, data.count() - 1);
    const PatchPlacement place = random_placement(rng, cfg.size);
    Tensor x = data.batch({i});

    Tape tape;
    Tensor patched = apply_patch_batch(&tape, x, art.pixels, {place});
    Tensor logits = model.predict(patched, &tape);
    Tensor loss = ops::softmax_cross_entropy(&tape, logits, {data.labels[i]});
    art.pixels.zero_grad();
    tape.backward(loss);
    adam.step(art.pixels.data(), art.pixels.grad(), art.pixels.numel(), cfg.lr, true);

    best = std::max(best, loss.data()[0]);
    if (cfg.log_every > 0 && (it + 1) % cfg.log_every == 0)
      art.best_objective_history.push_back(best);
  }
  return art;
}

PatchArtifact craft_gap(nn::Model& model, const data::Dataset& data, int target,
                        const EotConfig& eot, const CraftConfig& cfg) {
  if (cfg.size < 1 || cfg.size > data::kImageDim) throw ConfigError("patch size out of range");
  if (target < 0 || target >= data::kClasses) throw ConfigError("target class out of range");
  eot.validate();
  data.validate();
  Rng rng(derive_seed(cfg.seed, 0x94b));

  PatchArtifact art;
  art.size = cfg.size;
  art.mode = "targeted_gap";
  art.target = target;
  art.substitute_arch = model.arch;
  art.substitute_bitwidth = model.quant_bitwidth;
  art.seed = cfg.seed;
  art.iterations = cfg.iters;
  art.lr = cfg.lr;
  art.pixels = init_patch(cfg.size, rng);
  art.pixels.set_requires_grad(true);

  Adam adam(art.pixels.numel());
  float best = -1e30f;
  for (int it = 0; it < cfg.iters; ++it) {
    const int B = eot.samples_per_step;
    std::vector<int> idx(B);
    std::vector<int> labels(B, target);
    std::vector<PatchPlacement> places(B);
    for (int b = 0; b < B; ++b) {
      idx[b] = rng.uniform_int(0, data.count() - 1);
      PatchPlacement p;
      for (int attempt = 0; attempt < 128; ++attempt) {
        p.rotation_deg = eot.rotation_deg > 0.0f
                             ? static_cast<float>(rng.uniform(-eot.rotation_deg, eot.rotation_deg))
                             : 0.0f;
        p.scale = eot.scale_hi > eot.scale_lo
                      ? static_cast<float>(rng.uniform(eot.scale_lo, eot.scale_hi))
                      : eot.scale_lo;
        const int m = static_cast<int>(std::ceil(static_cast<float>(cfg.size) * p.scale));
        const int span = std::max(0, data::kImageDim - m);
        if (eot.fixed_position) {
          p.row = eot.fixed_position->first;
          p.col = eot.fixed_position->second;
        } else {
          p.row = rng.uniform_int(0, span);
          p.col = rng.uniform_int(0, span);
        }
        if (placement_valid(p, cfg.size)) break;
        if (attempt == 127)
          throw ConfigError("cannot place patch within bounds under the EOT ranges");
      }
      places[b] = p;
    }
    Tensor x = data.batch(idx);

    Tape tape;
    Tensor patched = apply_patch_batch(&tape, x, art.pixels, places);
    Tensor logits = model.predict(patched, &tape);
    Tensor loss = ops::softmax_cross_entropy(&tape, logits, labels);
    art.pixels.zero_grad();
    tape.backward(loss);
    adam.step(art.pixels.data(), art.pixels.grad(), art.pixels.numel(), cfg.lr, false);

    best = std::max(best, -loss.data()[0]);  // objective: negative target loss
    if (cfg.log_every > 0 && (it + 1) % cfg.log_every == 0)
      art.best_objective_history.push_back(best);
  }
  return art;
}

namespace {
constexpr char kPatchMagic[4] = {'Q', 'P', 'C', 'H'};
constexpr std::uint32_t kPatchVersion = 1;
}  // namespace

void save_patch(const PatchArtifact& p, const std::string& path) {
  json meta;
  meta["mode"] = p.mode;
  meta["size"] = p.size;
  meta["target"] = p.target;
  meta["substitute_arch"] = p.substitute_arch;
  meta["substitute_bitwidth"] = p.substitute_bitwidth;
  meta["seed"] = p.seed;
  meta["iterations"] = p.iterations;
  meta["lr"] = p.lr;
  meta["best_objective_history"] = p.best_objective_history;
  const std::string meta_s = meta.dump();

  const std::filesystem::path fp(path);
  if (fp.has_parent_path()) std::filesystem::create_directories(fp.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write patch " + path);
  f.write(kPatchMagic, 4);
  const std::uint32_t ver = kPatchVersion;
  unsigned char b4[4];
  for (int i = 0; i < 4; ++i) b4[i] = static_cast<unsigned char>((ver >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(b4), 4);
  const std::uint64_t len = meta_s.size();
  unsigned char b8[8];
  for (int i = 0; i < 8; ++i) b8[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(b8), 8);
  f.write(meta_s.data(), static_cast<std::streamsize>(meta_s.size()));
  f.write(reinterpret_cast<const char*>(p.pixels.data()),
          static_cast<std::streamsize>(p.pixels.numel() * sizeof(float)));
  if (!f) throw FormatError("write failed for patch " + path);
}

PatchArtifact load_patch(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open patch " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, kPatchMagic, 4) != 0)
    throw FormatError(path + ": bad patch magic");
  unsigned char b4[4];
  f.read(reinterpret_cast<char*>(b4), 4);
  if (f.gcount() != 4) throw FormatError(path + ": truncated version");
  std::uint32_t ver = 0;
  for (int i = 0; i < 4; ++i) ver |= static_cast<std::uint32_t>(b4[i]) << (8 * i);
  if (ver != kPatchVersion)
    throw FormatError(path + ": unsupported patch version " + std::to_string(ver));
  unsigned char b8[8];
  f.read(reinterpret_cast<char*>(b8), 8);
  if (f.gcount() != 8) throw FormatError(path + ": truncated metadata length");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(b8[i]) << (8 * i);
  std::string meta_s(len, '\0');
  f.read(meta_s.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(f.gcount()) != len)
    throw FormatError(path + ": truncated metadata");

  PatchArtifact p;
  try {
    json meta = json::parse(meta_s);
    p.mode = meta.at("mode").get<std::string>();
    p.size = meta.at("size").get<int>();
    p.target = meta.at("target").get<int>();
    p.substitute_arch = meta.at("substitute_arch").get<std::string>();
    p.substitute_bitwidth = meta.at("substitute_bitwidth").get<int>();
    p.seed = meta.at("seed").get<std::uint64_t>();
    p.iterations = meta.at("iterations").get<int>();
    p.lr = meta.at("lr").get<float>();
    p.best_objective_history = meta.at("best_objective_history").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": corrupt patch metadata: " + e.what());
  }
  p.pixels = Tensor(Shape{3, p.size, p.size});
  f.read(reinterpret_cast<char*>(p.pixels.data()),
         static_cast<std::streamsize>(p.pixels.numel() * sizeof(float)));
  if (static_cast<std::size_t>(f.gcount()) != p.pixels.numel() * sizeof(float))
    throw FormatError(path + ": truncated pixel payload");
  return p;
}

}  // namespace qpl::attack
