#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qpl/attacks.hpp"
#include "qpl/ops.hpp"

using namespace qpl;
using namespace qpl::attack;

namespace fs = std::filesystem;

namespace {

// logits = W x + b on the raw flattened pixels (identity input norm)
nn::Model linear_model(Rng& rng) {
  nn::Model m;
  m.arch = "toy-linear";
  m.input_mean = {0.0f, 0.0f, 0.0f};
  m.input_std = {1.0f, 1.0f, 1.0f};
  nn::LayerNode in;
  in.kind = nn::LayerKind::input;
  in.name = "input";
  m.nodes.push_back(in);
  nn::LayerNode fl;
  fl.kind = nn::LayerKind::flatten;
  fl.name = "flatten";
  fl.in0 = 0;
  m.nodes.push_back(fl);
  nn::LayerNode fc;
  fc.kind = nn::LayerKind::dense;
  fc.name = "fc";
  fc.in0 = 1;
  fc.in_ch = 3 * 32 * 32;
  fc.out_ch = 10;
  fc.has_bias = true;
  fc.w = Tensor(Shape{10, 3 * 32 * 32});
  for (std::size_t i = 0; i < fc.w.numel(); ++i)
    fc.w.data()[i] = static_cast<float>(rng.uniform(-0.01, 0.01));
  fc.b = Tensor(Shape{10});
  m.nodes.push_back(fc);
  return m;
}

Tensor random_image(Rng& rng, float lo = 0.2f, float hi = 0.8f) {
  Tensor x(Shape{1, 3, 32, 32});
  for (std::size_t i = 0; i < x.numel(); ++i) x.data()[i] = (float)rng.uniform(lo, hi);
  return x;
}

float ce_loss(nn::Model& m, const Tensor& x, const std::vector<int>& y) {
  Tensor logits = m.predict(x);
  return ops::softmax_cross_entropy<float>(nullptr, logits, y).data()[0];
}

PatchArtifact solid_patch(int k, float r, float g, float b) {
  PatchArtifact p;
  p.size = k;
  p.pixels = Tensor(Shape{3, k, k});
  for (int i = 0; i < k * k; ++i) {
    p.pixels.data()[i] = r;
    p.pixels.data()[k * k + i] = g;
    p.pixels.data()[2 * k * k + i] = b;
  }
  return p;
}

}  // namespace

TEST_CASE("fgsm: zero budget, budget saturation, closed-form oracle") {
  Rng rng(71);
  nn::Model m = linear_model(rng);
  Tensor x = random_image(rng);
  std::vector<int> y{3};

  PixelAttackConfig cfg;
  cfg.epsilon = 0.0f;
  cfg.alpha = 1e-3f;
  Tensor same = fgsm(m, x, y, cfg);
  CHECK(std::equal(x.data(), x.data() + x.numel(), same.data()));

  cfg.epsilon = 0.05f;
  cfg.alpha = 0.01f;
  Tensor adv = fgsm(m, x, y, cfg);

  // closed form: grad_x = W^T (softmax(Wx+b) - onehot_y)
  const nn::LayerNode& fc = m.nodes[2];
  Tensor logits = m.predict(x);
  Tensor probs = ops::softmax(logits);
  std::vector<double> g(x.numel(), 0.0);
  for (int c = 0; c < 10; ++c) {
    const double coef = probs.data()[c] - (c == y[0] ? 1.0 : 0.0);
    for (std::size_t i = 0; i < x.numel(); ++i)
      g[i] += coef * static_cast<double>(fc.w.data()[c * x.numel() + i]);
  }
  int checked = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const float diff = adv.data()[i] - x.data()[i];
    CHECK(std::fabs(diff) <= cfg.epsilon + 1e-6f);
    if (std::fabs(g[i]) > 1e-9) {
      const float expect = g[i] > 0 ? cfg.epsilon : -cfg.epsilon;
      CHECK(diff == doctest::Approx(expect).epsilon(1e-4));
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("pgd: fgsm reduction, projection, monotone loss on convex model") {
  Rng rng(72);
  nn::Model m = linear_model(rng);
  Tensor x = random_image(rng);
  std::vector<int> y{1};

  PixelAttackConfig f;
  f.epsilon = 0.03f;
  f.alpha = 0.03f;
  f.steps = 1;
  Tensor a = fgsm(m, x, y, f);
  Tensor b = pgd(m, x, y, f);
  CHECK(std::equal(a.data(), a.data() + a.numel(), b.data()));

  PixelAttackConfig cfg;
  cfg.epsilon = 8.0f / 255.0f;
  cfg.alpha = 1.0f / 255.0f;
  float prev = ce_loss(m, x, y);
  for (int steps = 1; steps <= 6; ++steps) {
    cfg.steps = steps;
    Tensor adv = pgd(m, x, y, cfg);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      CHECK(std::fabs(adv.data()[i] - x.data()[i]) <= cfg.epsilon + 1e-6f);
      CHECK(adv.data()[i] >= 0.0f);
      CHECK(adv.data()[i] <= 1.0f);
    }
    const float cur = ce_loss(m, adv, y);
    CHECK(cur >= prev - 1e-6f);
    prev = cur;
  }

  // random start stays feasible and is seed-deterministic
  cfg.steps = 3;
  cfg.random_start = true;
  cfg.seed = 5;
  Tensor r1 = pgd(m, x, y, cfg);
  Tensor r2 = pgd(m, x, y, cfg);
  CHECK(std::equal(r1.data(), r1.data() + r1.numel(), r2.data()));
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(std::fabs(r1.data()[i] - x.data()[i]) <= cfg.epsilon + 1e-6f);
}

TEST_CASE("pixel attack config validation") {
  PixelAttackConfig cfg;
  cfg.alpha = 0.0f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.alpha = 0.5f;
  cfg.epsilon = 0.1f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // alpha > epsilon
  cfg.epsilon = 1.5f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("apply_patch: identity placement overwrites exactly") {
  Rng rng(3);
  Tensor img = random_image(rng);
  Tensor single = img.viewed(Shape{3, 32, 32});
  PatchArtifact p = solid_patch(4, 0.9f, 0.1f, 0.5f);
  for (int i = 0; i < 16; ++i) p.pixels.data()[i] = static_cast<float>(i) / 16.0f;

  Tensor out = apply_patch(single, p, {0, 0, 0.0f, 1.0f});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const float v = out.data()[(c * 32 + y) * 32 + x];
        if (y < 4 && x < 4)
          CHECK(v == p.pixels.data()[(c * 4 + y) * 4 + x]);
        else
          CHECK(v == single.data()[(c * 32 + y) * 32 + x]);
      }
}

TEST_CASE("apply_patch: disjoint placements commute") {
  Rng rng(4);
  Tensor img = random_image(rng).viewed(Shape{3, 32, 32});
  PatchArtifact p = solid_patch(5, 0.2f, 0.4f, 0.6f);
  Tensor ab = apply_patch(apply_patch(img, p, {0, 0}), p, {20, 20});
  Tensor ba = apply_patch(apply_patch(img, p, {20, 20}), p, {0, 0});
  CHECK(std::equal(ab.data(), ab.data() + ab.numel(), ba.data()));
}

TEST_CASE("apply_patch: 90-degree rotation of an asymmetric 2x2 patch") {
  Tensor img(Shape{3, 32, 32}, 0.5f);
  PatchArtifact p = solid_patch(2, 0, 0, 0);
  // channel 0 holds [[a,b],[c,d]] = [[0.1,0.2],[0.3,0.4]]
  p.pixels.data()[0] = 0.1f;
  p.pixels.data()[1] = 0.2f;
  p.pixels.data()[2] = 0.3f;
  p.pixels.data()[3] = 0.4f;
  Tensor out = apply_patch(img, p, {10, 10, 90.0f, 1.0f});
  // counterclockwise content rotation: [[b,d],[a,c]]
  CHECK(out.data()[10 * 32 + 10] == doctest::Approx(0.2f));
  CHECK(out.data()[10 * 32 + 11] == doctest::Approx(0.4f));
  CHECK(out.data()[11 * 32 + 10] == doctest::Approx(0.1f));
  CHECK(out.data()[11 * 32 + 11] == doctest::Approx(0.3f));
}

TEST_CASE("apply_patch: out-of-bounds footprint is a placement error") {
  Tensor img(Shape{3, 32, 32}, 0.5f);
  PatchArtifact p = solid_patch(6, 1, 1, 1);
  CHECK_THROWS_AS(apply_patch(img, p, {28, 0}), UsageError);
  CHECK_THROWS_AS(apply_patch(img, p, {0, 0, 45.0f, 1.0f}), UsageError);  // corners rotate out
  CHECK(placement_valid({13, 13, 45.0f, 1.0f}, 6));
  CHECK(!placement_valid({0, 0, 0.0f, 6.0f}, 6));  // scale blows the bounds
}

TEST_CASE("apply_patch: rotation round trip near the identity") {
  // apply at +theta, inverse-warp the image about the footprint center with a
  // test-side clamped bilinear rotation, compare against the 0-degree apply.
  Rng rng(8);
  PatchArtifact p = solid_patch(6, 0, 0, 0);
  for (std::size_t i = 0; i < p.pixels.numel(); ++i)
    p.pixels.data()[i] = static_cast<float>(rng.uniform());
  Tensor img(Shape{3, 32, 32}, 0.5f);
  const float theta = 20.0f;
  Tensor rot = apply_patch(img, p, {13, 13, theta, 1.0f});
  Tensor base = apply_patch(img, p, {13, 13, 0.0f, 1.0f});

  // footprint center for k=6 at (13,13): 13 + (6-1)/2
  const float cy = 13.0f + 2.5f, cx = 13.0f + 2.5f;
  const float rad = -theta * 3.14159265358979323846f / 180.0f;
  const float c = std::cos(rad), s = std::sin(rad);
  Tensor back(Shape{3, 32, 32});
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const float dy = y - cy, dx = x - cx;
        const float sy = std::clamp(c * dy + s * dx + cy, 0.0f, 31.0f);
        const float sx = std::clamp(-s * dy + c * dx + cx, 0.0f, 31.0f);
        const int y0 = std::min(30, static_cast<int>(sy));
        const int x0 = std::min(30, static_cast<int>(sx));
        const float fy = sy - y0, fx = sx - x0;
        const auto at = [&](int yy, int xx) { return rot.data()[(ch * 32 + yy) * 32 + xx]; };
        back.data()[(ch * 32 + y) * 32 + x] =
            (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
            fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      }
  double mad = 0;
  for (std::size_t i = 0; i < back.numel(); ++i)
    mad += std::fabs(back.data()[i] - base.data()[i]);
  mad /= static_cast<double>(back.numel());
  CHECK(mad <= 0.02);
}

TEST_CASE("crafting: determinism, init-only at iters=0, footprint-only edits") {
  data::Dataset corpus = data::synthesize_shapes(64, 10, 12);
  Rng mrng(5);
  nn::Model m = linear_model(mrng);

  CraftConfig cfg;
  cfg.size = 6;
  cfg.iters = 0;
  cfg.seed = 9;
  PatchArtifact init_only = craft_lavan(m, corpus, cfg);
  CraftConfig cfg2 = cfg;
  PatchArtifact init_again = craft_lavan(m, corpus, cfg2);
  CHECK(std::equal(init_only.pixels.data(), init_only.pixels.data() + init_only.pixels.numel(),
                   init_again.pixels.data()));

  cfg.iters = 40;
  cfg.log_every = 10;
  PatchArtifact a = craft_lavan(m, corpus, cfg);
  PatchArtifact b = craft_lavan(m, corpus, cfg);
  CHECK(std::equal(a.pixels.data(), a.pixels.data() + a.pixels.numel(), b.pixels.data()));
  CHECK(a.iterations == 40);
  CHECK(a.best_objective_history.size() == 4);
  // running best is monotone by construction
  for (std::size_t i = 1; i < a.best_objective_history.size(); ++i)
    CHECK(a.best_objective_history[i] >= a.best_objective_history[i - 1]);
  // crafting moved the patch away from its initialization
  bool moved = false;
  for (std::size_t i = 0; i < a.pixels.numel(); ++i)
    if (a.pixels.data()[i] != init_only.pixels.data()[i]) moved = true;
  CHECK(moved);
  for (std::size_t i = 0; i < a.pixels.numel(); ++i) {
    CHECK(a.pixels.data()[i] >= 0.0f);
    CHECK(a.pixels.data()[i] <= 1.0f);
  }

  // application touches only the footprint
  Tensor img = corpus.image(0);
  Tensor out = apply_patch(img, a, {7, 9});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (y < 7 || y >= 13 || x < 9 || x >= 15)
          CHECK(out.data()[(c * 32 + y) * 32 + x] == img.data()[(c * 32 + y) * 32 + x]);
}

TEST_CASE("craft_gap: degenerate EOT fixes the placement; target loss improves") {
  data::Dataset corpus = data::synthesize_shapes(48, 10, 13);
  Rng mrng(6);
  nn::Model m = linear_model(mrng);

  EotConfig eot;
  eot.rotation_deg = 0.0f;
  eot.scale_lo = eot.scale_hi = 1.0f;
  eot.samples_per_step = 1;
  eot.fixed_position = {{4, 4}};

  CraftConfig cfg;
  cfg.size = 8;
  cfg.iters = 60;
  cfg.seed = 21;
  PatchArtifact p = craft_gap(m, corpus, 9, eot, cfg);
  CHECK(p.mode == "targeted_gap");
  CHECK(p.target == 9);

  PatchArtifact init = p;
  {
    CraftConfig c0 = cfg;
    c0.iters = 0;
    init = craft_gap(m, corpus, 9, eot, c0);
  }
  double before = 0, after = 0;
  std::vector<int> tgt{9};
  for (int i = 0; i < 16; ++i) {
    Tensor x0 = apply_patch(corpus.image(i), init, {4, 4});
    Tensor x1 = apply_patch(corpus.image(i), p, {4, 4});
    before += ce_loss(m, x0.viewed(Shape{1, 3, 32, 32}), tgt);
    after += ce_loss(m, x1.viewed(Shape{1, 3, 32, 32}), tgt);
  }
  CHECK(after < before);

  CHECK_THROWS_AS(craft_gap(m, corpus, 11, eot, cfg), ConfigError);
}

TEST_CASE("patch artifact file round trip and corruption") {
  auto dir = fs::temp_directory_path() / "qpl_patch_test";
  fs::create_directories(dir);
  const auto path = (dir / "p.qpch").string();

  PatchArtifact p = solid_patch(6, 0.25f, 0.5f, 0.75f);
  p.mode = "targeted_gap";
  p.target = 9;
  p.substitute_arch = "resnet20";
  p.substitute_bitwidth = 32;
  p.seed = 1234567890123456789ULL;
  p.iterations = 77;
  p.lr = 0.05f;
  p.best_objective_history = {0.5f, 0.75f};
  save_patch(p, path);
  PatchArtifact l = load_patch(path);
  CHECK(l.mode == p.mode);
  CHECK(l.target == 9);
  CHECK(l.size == 6);
  CHECK(l.seed == p.seed);
  CHECK(l.substitute_arch == "resnet20");
  CHECK(std::equal(p.pixels.data(), p.pixels.data() + p.pixels.numel(), l.pixels.data()));

  save_patch(l, (dir / "q.qpch").string());
  std::ifstream f1(path, std::ios::binary), f2(dir / "q.qpch", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  std::ofstream bad((dir / "bad.qpch").string(), std::ios::binary);
  bad.write("QPCX", 4);
  bad.close();
  CHECK_THROWS_AS(load_patch((dir / "bad.qpch").string()), FormatError);
  fs::remove_all(dir);
}
