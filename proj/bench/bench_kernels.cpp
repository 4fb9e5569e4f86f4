// Compares the OpenMP kernels against their serial reference
// implementations: GEMM shapes taken from the conv layers, plus the the
// im2col+GEMM convolution against the direct-loop reference.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "qpl/kernels.hpp"
#include "qpl/ops.hpp"
#include "qpl/tensor.hpp"

using namespace qpl;
using Clock = std::chrono::steady_clock;

namespace {

template <typename F>
double time_ms(F&& fn, int reps) {
  fn();  // warm-up
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

void bench_gemm(int M, int N, int K, int reps) {
  Rng rng(1);
  auto A = random_vec(static_cast<std::size_t>(M) * K, rng);
  auto B = random_vec(static_cast<std::size_t>(K) * N, rng);
  std::vector<float> C(static_cast<std::size_t>(M) * N);
  const double par =
      time_ms([&] { kernels::gemm_nn(M, N, K, A.data(), B.data(), C.data()); }, reps);
  const double ser =
      time_ms([&] { kernels::ref::gemm_nn(M, N, K, A.data(), B.data(), C.data()); }, reps);
  const double flops = 2.0 * M * N * K;
  std::printf(
      "gemm %4dx%4dx%4d   serial %8.2f ms (%6.2f GF/s)   parallel %8.2f ms (%6.2f GF/s)   "
      "speedup %.2fx\n",
      M, N, K, ser, flops / ser / 1e6, par, flops / par / 1e6, ser / par);
}

void bench_conv(int N, int C, int H, int W, int O, int k, int reps) {
  Rng rng(2);
  Tensor x =
      Tensor::from_data({N, C, H, W}, random_vec(static_cast<std::size_t>(N) * C * H * W, rng));
  Tensor w =
      Tensor::from_data({O, C, k, k}, random_vec(static_cast<std::size_t>(O) * C * k * k, rng));
  Tensor b = Tensor::from_data({O}, random_vec(O, rng));
  Tensor ref_out(Shape{N, O, H, W});

  const double par = time_ms([&] { ops::conv2d<float>(nullptr, x, w, &b, 1, k / 2); }, reps);
  const double ser = time_ms(
      [&] {
        kernels::ref::conv2d_direct(x.data(), N, C, H, W, w.data(), O, k, k, b.data(), 1, k / 2,
                                    ref_out.data());
      },
      reps);
  const double flops = 2.0 * N * O * H * W * C * k * k;
  std::printf(
      "conv n%d %3dx%2dx%2d -> %3dc k%d   direct-serial %8.2f ms (%6.2f GF/s)   im2col+omp "
      "%8.2f ms (%6.2f GF/s)   speedup %.2fx\n",
      N, C, H, W, O, k, ser, flops / ser / 1e6, par, flops / par / 1e6, ser / par);
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::max(1, std::atoi(argv[1]));
  std::printf("workers: %d, reps: %d\n\n", workers(), reps);

  // GEMM shapes that dominate the conv layers (O x out_hw x C*k*k)
  bench_gemm(16, 1024, 144, reps);
  bench_gemm(32, 256, 288, reps);
  bench_gemm(64, 64, 576, reps);
  bench_gemm(256, 256, 256, reps);

  std::printf("\n");
  bench_conv(8, 16, 32, 32, 16, 3, reps);
  bench_conv(8, 32, 16, 16, 32, 3, reps);
  bench_conv(8, 64, 8, 8, 64, 3, reps);
  return 0;
}
