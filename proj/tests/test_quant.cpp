#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "qpl/ops.hpp"
#include "qpl/quant.hpp"
#include "qpl/tape.hpp"

using namespace qpl;
using namespace qpl::quant;

namespace {

QuantParams make_with_range(int bits, QuantKind kind, float lo, float hi) {
  QuantParams qp = make_quant(bits, kind);
  qp.observed_min = lo;
  qp.observed_max = hi;
  qp.initialized = true;
  qp.refresh();
  return qp;
}

Tensor random_tensor(Shape shape, Rng& rng, float lo, float hi) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = (float)rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("bitwidth 32 is exact passthrough") {
  QuantParams qp = make_quant(32, QuantKind::weight_symmetric);
  CHECK(qp.is_passthrough());
  Rng rng(1);
  Tensor x = random_tensor({64}, rng, -3, 3);
  Tensor y = fake_quant(nullptr, x, qp);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.data()[i] == y.data()[i]);
}

TEST_CASE("hand-evaluated grids") {
  // symmetric 2-bit with max|W| = 1 -> levels {-1, 0, 1}
  QuantParams w2 = make_with_range(2, QuantKind::weight_symmetric, -1.0f, 1.0f);
  CHECK(w2.scale == doctest::Approx(1.0f));
  CHECK(w2.zero_point == 0);
  CHECK(fake_quant_scalar(0.6f, w2) == doctest::Approx(1.0f));
  CHECK(fake_quant_scalar(-0.4f, w2) == doctest::Approx(0.0f));

  // affine 8-bit over [0, 2.55] -> s = 0.01, z = 0
  QuantParams a8 = make_with_range(8, QuantKind::activation_affine, 0.0f, 2.55f);
  CHECK(a8.scale == doctest::Approx(0.01f));
  CHECK(a8.zero_point == 0);
  CHECK(fake_quant_scalar(1.234f, a8) == doctest::Approx(1.23f));

  // quantization-shift witness: 0.30 and 0.34 land on the same level
  QuantParams s01 = make_with_range(8, QuantKind::activation_affine, 0.0f, 25.5f);
  CHECK(s01.scale == doctest::Approx(0.1f));
  CHECK(fake_quant_scalar(0.30f, s01) == doctest::Approx(0.3f));
  CHECK(fake_quant_scalar(0.34f, s01) == doctest::Approx(0.3f));
}

TEST_CASE("observer modes") {
  QuantParams qp = make_quant(8, QuantKind::activation_affine);
  Tensor batch = Tensor::from_data({4}, {-2.0f, 0.5f, 3.0f, 1.0f});
  observe(qp, batch, ObserveMode::minmax);
  CHECK(qp.observed_min == doctest::Approx(-2.0f));
  CHECK(qp.observed_max == doctest::Approx(3.0f));

  Tensor b2 = Tensor::from_data({2}, {-1.0f, 0.5f});
  observe(qp, b2, ObserveMode::minmax);
  CHECK(qp.observed_min == doctest::Approx(-2.0f));
  CHECK(qp.observed_max == doctest::Approx(3.0f));

  Tensor b3 = Tensor::from_data({2}, {-4.0f, 8.0f});
  observe(qp, b3, ObserveMode::minmax);
  CHECK(qp.observed_min == doctest::Approx(-4.0f));
  CHECK(qp.observed_max == doctest::Approx(8.0f));

  // two minmax batches [0,1] then [-1,0.5] -> range [-1,1]
  QuantParams q2 = make_quant(8, QuantKind::activation_affine);
  observe(q2, Tensor::from_data({2}, {0.0f, 1.0f}), ObserveMode::minmax);
  observe(q2, Tensor::from_data({2}, {-1.0f, 0.5f}), ObserveMode::minmax);
  CHECK(q2.observed_min == doctest::Approx(-1.0f));
  CHECK(q2.observed_max == doctest::Approx(1.0f));

  // ema blends after initialization
  QuantParams qe = make_quant(8, QuantKind::activation_affine);
  qe.ema_momentum = 0.9f;
  observe(qe, Tensor::from_data({2}, {0.0f, 1.0f}), ObserveMode::ema);
  observe(qe, Tensor::from_data({2}, {0.0f, 2.0f}), ObserveMode::ema);
  CHECK(qe.observed_max == doctest::Approx(0.9f * 1.0f + 0.1f * 2.0f));

  // degenerate constant-zero batch -> s=1, z=0
  QuantParams qd = make_quant(4, QuantKind::activation_affine);
  observe(qd, Tensor(Shape{8}, 0.0f), ObserveMode::minmax);
  CHECK(qd.scale == doctest::Approx(1.0f));
  CHECK(qd.zero_point == 0);
  CHECK(fake_quant_scalar(0.0f, qd) == 0.0f);

  CHECK_THROWS_AS(observe(qd, Tensor(), ObserveMode::minmax), UsageError);
}

TEST_CASE("quantizer property suite: all bitwidths") {
  for (int bits : {2, 4, 5, 8}) {
    for (QuantKind kind : {QuantKind::weight_symmetric, QuantKind::activation_affine}) {
      CAPTURE(bits);
      CAPTURE(quant_kind_name(kind));
      Rng rng(derive_seed(99, bits, static_cast<int>(kind)));
      const float lo = kind == QuantKind::weight_symmetric ? -1.5f : -0.7f;
      const float hi = 2.1f;
      QuantParams qp = make_with_range(bits, kind, lo, hi);

      Tensor x = random_tensor({512}, rng, 2 * lo, 2 * hi);
      Tensor q1 = fake_quant(nullptr, x, qp);
      Tensor q2 = fake_quant(nullptr, q1, qp);

      // idempotence, bit-identical
      for (std::size_t i = 0; i < x.numel(); ++i) CHECK(q1.data()[i] == q2.data()[i]);

      // monotonicity on a sorted dense sweep
      const int n = 4096;
      float prev = -1e30f;
      std::set<float> levels;
      for (int i = 0; i < n; ++i) {
        const float v = lo * 2 + (hi * 2 - lo * 2) * static_cast<float>(i) / (n - 1);
        const float fq = fake_quant_scalar(v, qp);
        CHECK(fq >= prev);
        prev = fq;
        levels.insert(fq);
      }
      // level count <= 2^b (2^b - 1 for symmetric)
      const std::size_t max_levels =
          kind == QuantKind::weight_symmetric ? (1u << bits) - 1 : (1u << bits);
      CHECK(levels.size() <= max_levels);

      // bounded error inside the observed range
      for (int i = 0; i < 1000; ++i) {
        const float v = (float)rng.uniform(qp.range_lo(), qp.range_hi());
        const float fq = fake_quant_scalar(v, qp);
        CHECK(std::fabs(v - fq) <= qp.scale / 2 + 1e-5f * qp.scale);
      }
    }
  }
}

TEST_CASE("STE mask equals scalar brute-force oracle") {
  for (int bits : {2, 4, 5, 8}) {
    for (QuantKind kind : {QuantKind::weight_symmetric, QuantKind::activation_affine}) {
      Rng rng(derive_seed(123, bits, static_cast<int>(kind)));
      QuantParams qp = make_with_range(bits, kind, -1.0f, 1.0f);

      Tensor x = random_tensor({256}, rng, -4.0f, 4.0f);
      x.set_requires_grad(true);
      Tape tape;
      Tensor y = fake_quant(&tape, x, qp);
      // upstream gradient: all ones via sum
      Tensor loss = ops::sum(&tape, y);
      tape.backward(loss);

      for (std::size_t i = 0; i < x.numel(); ++i) {
        // independent scalar oracle for the pass-through indicator
        const float v = x.data()[i];
        const float lo = qp.scale * static_cast<float>(qp.qmin() - qp.zero_point);
        const float hi = qp.scale * static_cast<float>(qp.qmax() - qp.zero_point);
        const float expect = (v >= lo && v <= hi) ? 1.0f : 0.0f;
        CHECK(x.grad()[i] == expect);
      }
    }
  }
}

TEST_CASE("STE passes upstream bit-identically inside the range") {
  QuantParams qp = make_with_range(4, QuantKind::weight_symmetric, -1.0f, 1.0f);
  Rng rng(7);
  Tensor x = random_tensor({64}, rng, -0.9f, 0.9f);  // all inside range
  Tensor up = random_tensor({64}, rng, -2.0f, 2.0f);
  x.set_requires_grad(true);
  Tape tape;
  Tensor y = fake_quant(&tape, x, qp);
  Tensor loss = ops::sum(&tape, ops::mul(&tape, y, up));
  tape.backward(loss);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == up.data()[i]);

  // far outside -> zero
  Tensor xf(Shape{4}, 100.0f);
  xf.set_requires_grad(true);
  Tape t2;
  Tensor y2 = fake_quant(&t2, xf, qp);
  Tensor l2 = ops::sum(&t2, y2);
  t2.backward(l2);
  for (int i = 0; i < 4; ++i) CHECK(xf.grad()[i] == 0.0f);
}

TEST_CASE("make_quant validates bitwidths") {
  CHECK_THROWS_AS(make_quant(3, QuantKind::weight_symmetric), ConfigError);
  CHECK_THROWS_AS(make_quant(16, QuantKind::weight_symmetric), ConfigError);
}
