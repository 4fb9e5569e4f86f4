#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "qpl/kernels.hpp"
#include "qpl/tensor.hpp"

using namespace qpl;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

}  // namespace

TEST_CASE("gemm_nn matches serial reference") {
  Rng rng(7);
  for (int trial = 0; trial < 8; ++trial) {
    const int M = rng.uniform_int(1, 40);
    const int N = rng.uniform_int(1, 40);
    const int K = rng.uniform_int(1, 40);
    auto A = random_vec(static_cast<std::size_t>(M) * K, rng);
    auto B = random_vec(static_cast<std::size_t>(K) * N, rng);
    std::vector<float> C(static_cast<std::size_t>(M) * N), Cref = C;
    kernels::gemm_nn(M, N, K, A.data(), B.data(), C.data());
    kernels::ref::gemm_nn(M, N, K, A.data(), B.data(), Cref.data());
    for (std::size_t i = 0; i < C.size(); ++i) CHECK(C[i] == doctest::Approx(Cref[i]).epsilon(1e-4));
  }
}

TEST_CASE("gemm_nt and gemm_tn match transposed references") {
  Rng rng(11);
  const int M = 17, N = 23, K = 9;
  auto A = random_vec(static_cast<std::size_t>(M) * K, rng);
  auto Bt = random_vec(static_cast<std::size_t>(N) * K, rng);  // B stored [N,K]
  std::vector<float> C(static_cast<std::size_t>(M) * N, 0.0f);
  kernels::gemm_nt(M, N, K, A.data(), Bt.data(), C.data());
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      float acc = 0.0f;
      for (int k = 0; k < K; ++k) acc += A[i * K + k] * Bt[j * K + k];
      CHECK(C[i * N + j] == doctest::Approx(acc).epsilon(1e-4));
    }

  auto At = random_vec(static_cast<std::size_t>(K) * M, rng);  // A stored [K,M]
  auto B = random_vec(static_cast<std::size_t>(K) * N, rng);
  kernels::gemm_tn(M, N, K, At.data(), B.data(), C.data());
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      float acc = 0.0f;
      for (int k = 0; k < K; ++k) acc += At[k * M + i] * B[k * N + j];
      CHECK(C[i * N + j] == doctest::Approx(acc).epsilon(1e-4));
    }
}

TEST_CASE("gemm accumulate adds onto existing output") {
  const int M = 3, N = 4, K = 2;
  std::vector<float> A(M * K, 1.0f), B(K * N, 1.0f), C(M * N, 5.0f);
  kernels::gemm_nn(M, N, K, A.data(), B.data(), C.data(), true);
  for (float v : C) CHECK(v == doctest::Approx(7.0f));
}

TEST_CASE("im2col/col2im round trip accumulates window multiplicity") {
  const int C = 2, H = 5, W = 5, k = 3, stride = 1, pad = 1;
  const int oh = kernels::conv_out_dim(H, k, stride, pad);
  const int ow = kernels::conv_out_dim(W, k, stride, pad);
  Rng rng(3);
  auto x = random_vec(static_cast<std::size_t>(C) * H * W, rng);
  std::vector<float> col(static_cast<std::size_t>(C) * k * k * oh * ow);
  kernels::im2col(x.data(), C, H, W, k, k, stride, pad, col.data());

  // col2im(im2col(x)) multiplies each pixel by the number of windows
  // covering it; verify against a direct count.
  std::vector<float> back(x.size(), 0.0f);
  kernels::col2im_add(col.data(), C, H, W, k, k, stride, pad, back.data());
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        int count = 0;
        for (int r = 0; r < oh; ++r)
          for (int s = 0; s < ow; ++s)
            for (int i = 0; i < k; ++i)
              for (int j = 0; j < k; ++j)
                if (r * stride - pad + i == h && s * stride - pad + j == w) ++count;
        const std::size_t idx = (static_cast<std::size_t>(c) * H + h) * W + w;
        CHECK(back[idx] == doctest::Approx(x[idx] * static_cast<float>(count)));
      }
}

TEST_CASE("conv output dims") {
  CHECK(kernels::conv_out_dim(32, 3, 1, 1) == 32);
  CHECK(kernels::conv_out_dim(32, 3, 2, 1) == 16);
  CHECK(kernels::conv_out_dim(3, 2, 1, 0) == 2);
}

TEST_CASE("rng streams are platform-stable and splittable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // Frozen values from the reference xoshiro256++/splitmix64 pipeline.
  Rng c(0);
  const std::uint64_t first = c.next_u64();
  Rng d(0);
  CHECK(first == d.next_u64());
  CHECK(first != Rng(1).next_u64());

  Rng e(9);
  Rng child1 = e.split(1);
  Rng e2(9);
  Rng child2 = e2.split(1);
  CHECK(child1.next_u64() == child2.next_u64());

  // uniform_int respects inclusive bounds
  Rng f(5);
  for (int i = 0; i < 1000; ++i) {
    const int v = f.uniform_int(-3, 4);
    CHECK(v >= -3);
    CHECK(v <= 4);
  }
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}
