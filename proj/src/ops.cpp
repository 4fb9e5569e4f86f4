#include "qpl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "qpl/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qpl::ops {

namespace {

inline bool in_parallel() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

template <typename T>
void check_4d(const TensorT<T>& x, const char* who) {
  if (x.ndim() != 4) throw ShapeError(std::string(who) + " expects NCHW, got " + shape_str(x.shape()));
}

}  // namespace

template <typename T>
TensorT<T> add(TapeT<T>* tape, const TensorT<T>& a, const TensorT<T>& b) {
  if (!shape_eq(a.shape(), b.shape()))
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out(a.shape());
  const std::size_t n = a.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  debug_check_finite(out, "add");
  if (tape) {
    TensorT<T> ac = a, bc = b, oc = out;
    tape->record([=]() mutable {
      const T* g = oc.grad();
      T* ga = ac.grad();
      T* gb = bc.grad();
      for (std::size_t i = 0; i < n; ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul(TapeT<T>* tape, const TensorT<T>& a, const TensorT<T>& b) {
  if (!shape_eq(a.shape(), b.shape()))
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  debug_check_finite(out, "mul");
  if (tape) {
    TensorT<T> ac = a, bc = b, oc = out;
    tape->record([=]() mutable {
      const T* g = oc.grad();
      T* ga = ac.grad();
      T* gb = bc.grad();
      for (std::size_t i = 0; i < n; ++i) {
        ga[i] += g[i] * bc.data()[i];
        gb[i] += g[i] * ac.data()[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> scale(TapeT<T>* tape, const TensorT<T>& x, T c) {
  TensorT<T> out(x.shape());
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = c * x.data()[i];
  debug_check_finite(out, "scale");
  if (tape) {
    TensorT<T> xc = x, oc = out;
    tape->record([=]() mutable {
      const T* g = oc.grad();
      T* gx = xc.grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += c * g[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> relu(TapeT<T>* tape, const TensorT<T>& x) {
  TensorT<T> out(x.shape());
  const std::size_t n = x.numel();
  const T* px = x.data();
  T* po = out.data();
#pragma omp parallel for schedule(static) if (!in_parallel() && n > (std::size_t)1 << 14)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
    po[i] = px[i] > T(0) ? px[i] : T(0);
  if (tape) {
    TensorT<T> xc = x, oc = out;
    tape->record([=]() mutable {
      const T* g = oc.grad();
      T* gx = xc.grad();
      for (std::size_t i = 0; i < n; ++i)
        if (xc.data()[i] > T(0)) gx[i] += g[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> sum(TapeT<T>* tape, const TensorT<T>& x) {
  TensorT<T> out(Shape{1});
  T acc = T(0);
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  out.data()[0] = acc;
  if (tape) {
    TensorT<T> xc = x, oc = out;
    const std::size_t n = x.numel();
    tape->record([=]() mutable {
      const T g = oc.grad()[0];
      T* gx = xc.grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
TensorT<T> conv2d(TapeT<T>* tape, const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b,
                  int stride, int pad) {
  check_4d(x, "conv2d input");
  check_4d(w, "conv2d weight");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (pad < 0) throw ConfigError("conv2d: pad must be >= 0");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(0), I = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (I != C)
    throw ShapeError("conv2d: input channels " + std::to_string(C) + " vs kernel expects " +
                     std::to_string(I));
  if (b && (b->ndim() != 1 || b->dim(0) != O))
    throw ShapeError("conv2d: bias shape " + shape_str(b->shape()) + " wants [" +
                     std::to_string(O) + "]");
  const int oh = kernels::conv_out_dim(H, kh, stride, pad);
  const int ow = kernels::conv_out_dim(W, kw, stride, pad);
  if (oh < 1 || ow < 1)
    throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " does not fit input " +
                     shape_str(x.shape()));

  TensorT<T> out(Shape{N, O, oh, ow});
  const int ck = C * kh * kw;
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  const std::size_t xstride = static_cast<std::size_t>(C) * H * W;
  const std::size_t ostride = static_cast<std::size_t>(O) * ohw;

#pragma omp parallel if (N > 1)
  {
    std::vector<T> col(static_cast<std::size_t>(ck) * ohw);
#pragma omp for schedule(static)
    for (int n = 0; n < N; ++n) {
      kernels::im2col(x.data() + n * xstride, C, H, W, kh, kw, stride, pad, col.data());
      kernels::gemm_nn(O, static_cast<int>(ohw), ck, w.data(), col.data(),
                       out.data() + n * ostride, false);
      if (b) {
        T* po = out.data() + n * ostride;
        for (int o = 0; o < O; ++o) {
          const T bv = b->data()[o];
          for (std::size_t j = 0; j < ohw; ++j) po[o * ohw + j] += bv;
        }
      }
    }
  }
  debug_check_finite(out, "conv2d");

  if (tape) {
    TensorT<T> xc = x, wc = w, oc = out;
    TensorT<T> bc = b ? *b : TensorT<T>();
    const bool has_b = b != nullptr;
    tape->record([=]() mutable {
      T* gx = xc.grad();
      T* gw = wc.grad();
      T* gb = has_b ? bc.grad() : nullptr;
      if (N == 1) {
        // single sample: let the inner kernels parallelize over rows
        std::vector<T> col(static_cast<std::size_t>(ck) * ohw);
        std::vector<T> gcol(static_cast<std::size_t>(ck) * ohw);
        const T* go = oc.grad();
        kernels::im2col(xc.data(), C, H, W, kh, kw, stride, pad, col.data());
        kernels::gemm_nt(O, ck, static_cast<int>(ohw), go, col.data(), gw, true);
        kernels::gemm_tn(ck, static_cast<int>(ohw), O, wc.data(), go, gcol.data(), false);
        kernels::col2im_add(gcol.data(), C, H, W, kh, kw, stride, pad, gx);
        if (gb) {
          for (int o = 0; o < O; ++o) {
            T acc = T(0);
            for (std::size_t j = 0; j < ohw; ++j) acc += go[o * ohw + j];
            gb[o] += acc;
          }
        }
        return;
      }
      // batch: samples in parallel; weight/bias gradients reduce over
      // per-thread partials in thread order, deterministic for a fixed
      // worker count
      int nthreads = 1;
#ifdef _OPENMP
      nthreads = omp_in_parallel() ? 1 : omp_get_max_threads();
#endif
      std::vector<std::vector<T>> gw_parts(nthreads);
      std::vector<std::vector<T>> gb_parts(nthreads);
#pragma omp parallel num_threads(nthreads) if (nthreads > 1)
      {
        int tid = 0;
#ifdef _OPENMP
        tid = omp_get_thread_num();
#endif
        auto& gwp = gw_parts[tid];
        gwp.assign(static_cast<std::size_t>(O) * ck, T(0));
        auto& gbp = gb_parts[tid];
        if (gb) gbp.assign(O, T(0));
        std::vector<T> col(static_cast<std::size_t>(ck) * ohw);
        std::vector<T> gcol(static_cast<std::size_t>(ck) * ohw);
#pragma omp for schedule(static)
        for (int n = 0; n < N; ++n) {
          const T* go = oc.grad() + n * ostride;
          kernels::im2col(xc.data() + n * xstride, C, H, W, kh, kw, stride, pad, col.data());
          kernels::gemm_nt(O, ck, static_cast<int>(ohw), go, col.data(), gwp.data(), true);
          kernels::gemm_tn(ck, static_cast<int>(ohw), O, wc.data(), go, gcol.data(), false);
          kernels::col2im_add(gcol.data(), C, H, W, kh, kw, stride, pad, gx + n * xstride);
          if (gb) {
            for (int o = 0; o < O; ++o) {
              T acc = T(0);
              for (std::size_t j = 0; j < ohw; ++j) acc += go[o * ohw + j];
              gbp[o] += acc;
            }
          }
        }
      }
      for (int t = 0; t < nthreads; ++t) {
        if (gw_parts[t].empty()) continue;
        for (std::size_t i = 0; i < gw_parts[t].size(); ++i) gw[i] += gw_parts[t][i];
        if (gb)
          for (int o = 0; o < O; ++o) gb[o] += gb_parts[t][o];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> batchnorm2d(TapeT<T>* tape, const TensorT<T>& x, const TensorT<T>& gamma,
                       const TensorT<T>& beta, TensorT<T>& running_mean, TensorT<T>& running_var,
                       bool training, T momentum, T eps) {
  check_4d(x, "batchnorm2d");
  if (eps <= T(0)) throw ConfigError("batchnorm2d: eps must be > 0");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  for (const TensorT<T>* p :
       std::initializer_list<const TensorT<T>*>{&gamma, &beta, &running_mean, &running_var})
    if (p->numel() != static_cast<std::size_t>(C))
      throw ShapeError("batchnorm2d: per-channel parameter length != C");

  TensorT<T> out(x.shape());
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::size_t chw = static_cast<std::size_t>(C) * hw;
  const std::size_t m = static_cast<std::size_t>(N) * hw;

  std::vector<T> mean_v(C), invstd_v(C);
  if (training) {
#pragma omp parallel for schedule(static) if (!in_parallel())
    for (int c = 0; c < C; ++c) {
      T mu = T(0);
      for (int n = 0; n < N; ++n) {
        const T* px = x.data() + n * chw + c * hw;
        for (std::size_t i = 0; i < hw; ++i) mu += px[i];
      }
      mu /= static_cast<T>(m);
      T var = T(0);
      for (int n = 0; n < N; ++n) {
        const T* px = x.data() + n * chw + c * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T d = px[i] - mu;
          var += d * d;
        }
      }
      var /= static_cast<T>(m);
      mean_v[c] = mu;
      invstd_v[c] = T(1) / std::sqrt(var + eps);
      running_mean.data()[c] = (T(1) - momentum) * running_mean.data()[c] + momentum * mu;
      running_var.data()[c] = (T(1) - momentum) * running_var.data()[c] + momentum * var;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean_v[c] = running_mean.data()[c];
      invstd_v[c] = T(1) / std::sqrt(running_var.data()[c] + eps);
    }
  }

#pragma omp parallel for schedule(static) if (!in_parallel())
  for (int c = 0; c < C; ++c) {
    const T g = gamma.data()[c], bt = beta.data()[c], mu = mean_v[c], is = invstd_v[c];
    for (int n = 0; n < N; ++n) {
      const T* px = x.data() + n * chw + c * hw;
      T* po = out.data() + n * chw + c * hw;
      for (std::size_t i = 0; i < hw; ++i) po[i] = g * (px[i] - mu) * is + bt;
    }
  }
  debug_check_finite(out, "batchnorm2d");

  if (tape) {
    TensorT<T> xc = x, gc = gamma, bc = beta, oc = out;
    tape->record([=]() mutable {
      T* gx = xc.grad();
      T* gg = gc.grad();
      T* gb = bc.grad();
#pragma omp parallel for schedule(static) if (!in_parallel())
      for (int c = 0; c < C; ++c) {
        const T mu = mean_v[c], is = invstd_v[c], gam = gc.data()[c];
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int n = 0; n < N; ++n) {
          const T* px = xc.data() + n * chw + c * hw;
          const T* pg = oc.grad() + n * chw + c * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            sum_dy += pg[i];
            sum_dy_xhat += pg[i] * (px[i] - mu) * is;
          }
        }
        gg[c] += sum_dy_xhat;
        gb[c] += sum_dy;
        if (training) {
          const T inv_m = T(1) / static_cast<T>(m);
          for (int n = 0; n < N; ++n) {
            const T* px = xc.data() + n * chw + c * hw;
            const T* pg = oc.grad() + n * chw + c * hw;
            T* pgx = gx + n * chw + c * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              const T xhat = (px[i] - mu) * is;
              pgx[i] += gam * is * (pg[i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
            }
          }
        } else {
          for (int n = 0; n < N; ++n) {
            const T* pg = oc.grad() + n * chw + c * hw;
            T* pgx = gx + n * chw + c * hw;
            for (std::size_t i = 0; i < hw; ++i) pgx[i] += gam * is * pg[i];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> maxpool2d(TapeT<T>* tape, const TensorT<T>& x, int k, int stride) {
  check_4d(x, "maxpool2d");
  if (k < 1 || stride < 1) throw ConfigError("maxpool2d: k and stride must be >= 1");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int oh = (H - k) / stride + 1;
  const int ow = (W - k) / stride + 1;
  if (oh < 1 || ow < 1) throw ShapeError("maxpool2d: window does not fit input");

  TensorT<T> out(Shape{N, C, oh, ow});
  auto argmax = std::make_shared<std::vector<int>>(out.numel());
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;

#pragma omp parallel for schedule(static) if (!in_parallel())
  for (int nc = 0; nc < N * C; ++nc) {
    const T* px = x.data() + nc * hw;
    T* po = out.data() + nc * ohw;
    int* pa = argmax->data() + nc * ohw;
    for (int r = 0; r < oh; ++r) {
      for (int s = 0; s < ow; ++s) {
        T best = px[static_cast<std::size_t>(r * stride) * W + s * stride];
        int best_idx = r * stride * W + s * stride;
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < k; ++j) {
            const int idx = (r * stride + i) * W + (s * stride + j);
            if (px[idx] > best) {
              best = px[idx];
              best_idx = idx;
            }
          }
        }
        po[r * ow + s] = best;
        pa[r * ow + s] = best_idx;
      }
    }
  }

  if (tape) {
    TensorT<T> xc = x, oc = out;
    tape->record([=]() mutable {
      T* gx = xc.grad();
      const T* go = oc.grad();
      for (int nc = 0; nc < N * C; ++nc)
        for (std::size_t i = 0; i < ohw; ++i)
          gx[nc * hw + (*argmax)[nc * ohw + i]] += go[nc * ohw + i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> avgpool_global(TapeT<T>* tape, const TensorT<T>& x) {
  check_4d(x, "avgpool_global");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  TensorT<T> out(Shape{N, C});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* px = x.data() + (static_cast<std::size_t>(n) * C + c) * hw;
      T acc = T(0);
      for (std::size_t i = 0; i < hw; ++i) acc += px[i];
      out.data()[n * C + c] = acc / static_cast<T>(hw);
    }
  }
  if (tape) {
    TensorT<T> xc = x, oc = out;
    tape->record([=]() mutable {
      T* gx = xc.grad();
      const T* go = oc.grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T g = go[n * C + c] / static_cast<T>(hw);
          T* pgx = gx + (static_cast<std::size_t>(n) * C + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) pgx[i] += g;
        }
    });
  }
  return out;
}

template <typename T>
TensorT<T> flatten(TapeT<T>* tape, const TensorT<T>& x) {
  if (x.ndim() < 2) throw ShapeError("flatten expects at least 2-d input");
  const int N = x.dim(0);
  const int rest = static_cast<int>(x.numel()) / N;
  TensorT<T> out(Shape{N, rest});
  std::copy(x.data(), x.data() + x.numel(), out.data());
  if (tape) {
    TensorT<T> xc = x, oc = out;
    const std::size_t n = x.numel();
    tape->record([=]() mutable {
      T* gx = xc.grad();
      const T* go = oc.grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += go[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> dense(TapeT<T>* tape, const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b) {
  if (x.ndim() != 2 || w.ndim() != 2)
    throw ShapeError("dense expects x [N,F], w [O,F]; got " + shape_str(x.shape()) + ", " +
                     shape_str(w.shape()));
  const int N = x.dim(0), F = x.dim(1), O = w.dim(0);
  if (w.dim(1) != F) throw ShapeError("dense: feature dims disagree");
  if (b && (b->ndim() != 1 || b->dim(0) != O)) throw ShapeError("dense: bias length != O");

  TensorT<T> out(Shape{N, O});
  kernels::gemm_nt(N, O, F, x.data(), w.data(), out.data(), false);
  if (b)
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < O; ++o) out.data()[n * O + o] += b->data()[o];
  debug_check_finite(out, "dense");

  if (tape) {
    TensorT<T> xc = x, wc = w, oc = out;
    TensorT<T> bc = b ? *b : TensorT<T>();
    const bool has_b = b != nullptr;
    tape->record([=]() mutable {
      const T* go = oc.grad();
      kernels::gemm_nn(N, F, O, go, wc.data(), xc.grad(), true);
      kernels::gemm_tn(O, F, N, go, xc.data(), wc.grad(), true);
      if (has_b) {
        T* gb = bc.grad();
        for (int o = 0; o < O; ++o) {
          T acc = T(0);
          for (int n = 0; n < N; ++n) acc += go[n * O + o];
          gb[o] += acc;
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> channel_norm(TapeT<T>* tape, const TensorT<T>& x, const std::array<T, 3>& mean,
                        const std::array<T, 3>& std) {
  check_4d(x, "channel_norm");
  if (x.dim(1) != 3) throw ShapeError("channel_norm expects 3 channels");
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  TensorT<T> out(x.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < 3; ++c) {
      const T* px = x.data() + (static_cast<std::size_t>(n) * 3 + c) * hw;
      T* po = out.data() + (static_cast<std::size_t>(n) * 3 + c) * hw;
      const T mu = mean[c], inv = T(1) / std[c];
      for (std::size_t i = 0; i < hw; ++i) po[i] = (px[i] - mu) * inv;
    }
  if (tape) {
    TensorT<T> xc = x, oc = out;
    tape->record([=]() mutable {
      T* gx = xc.grad();
      const T* go = oc.grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < 3; ++c) {
          const T inv = T(1) / std[c];
          const std::size_t off = (static_cast<std::size_t>(n) * 3 + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) gx[off + i] += go[off + i] * inv;
        }
    });
  }
  return out;
}

template <typename T>
TensorT<T> softmax_cross_entropy(TapeT<T>* tape, const TensorT<T>& logits,
                                 const std::vector<int>& labels) {
  if (logits.ndim() != 2) throw ShapeError("softmax_cross_entropy expects [N,C] logits");
  const int N = logits.dim(0), C = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw ShapeError("softmax_cross_entropy: batch size vs label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= C)
      throw DataError("label " + std::to_string(y) + " outside [0," + std::to_string(C) + ")");

  TensorT<T> out(Shape{1});
  T total = T(0);
  for (int n = 0; n < N; ++n) {
    const T* row = logits.data() + static_cast<std::size_t>(n) * C;
    T mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    T se = T(0);
    for (int c = 0; c < C; ++c) se += std::exp(row[c] - mx);
    total += mx + std::log(se) - row[labels[n]];
  }
  out.data()[0] = total / static_cast<T>(N);
  debug_check_finite(out, "softmax_cross_entropy");

  if (tape) {
    TensorT<T> lc = logits, oc = out;
    tape->record([=]() mutable {
      const T g = oc.grad()[0] / static_cast<T>(N);
      T* gl = lc.grad();
      for (int n = 0; n < N; ++n) {
        const T* row = lc.data() + static_cast<std::size_t>(n) * C;
        T mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        T se = T(0);
        for (int c = 0; c < C; ++c) se += std::exp(row[c] - mx);
        for (int c = 0; c < C; ++c) {
          const T p = std::exp(row[c] - mx) / se;
          gl[static_cast<std::size_t>(n) * C + c] += g * (p - (c == labels[n] ? T(1) : T(0)));
        }
      }
    });
  }
  return out;
}

template <typename T>
std::vector<int> argmax_rows(const TensorT<T>& logits) {
  const int N = logits.dim(0), C = logits.dim(1);
  std::vector<int> out(N);
  for (int n = 0; n < N; ++n) {
    const T* row = logits.data() + static_cast<std::size_t>(n) * C;
    int best = 0;
    for (int c = 1; c < C; ++c)
      if (row[c] > row[best]) best = c;
    out[n] = best;
  }
  return out;
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
  const int N = logits.dim(0), C = logits.dim(1);
  TensorT<T> out(logits.shape());
  for (int n = 0; n < N; ++n) {
    const T* row = logits.data() + static_cast<std::size_t>(n) * C;
    T* po = out.data() + static_cast<std::size_t>(n) * C;
    T mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    T se = T(0);
    for (int c = 0; c < C; ++c) {
      po[c] = std::exp(row[c] - mx);
      se += po[c];
    }
    for (int c = 0; c < C; ++c) po[c] /= se;
  }
  return out;
}

#define QPL_INSTANTIATE_OPS(T)                                                                   \
  template TensorT<T> add<T>(TapeT<T>*, const TensorT<T>&, const TensorT<T>&);                   \
  template TensorT<T> mul<T>(TapeT<T>*, const TensorT<T>&, const TensorT<T>&);                   \
  template TensorT<T> scale<T>(TapeT<T>*, const TensorT<T>&, T);                                 \
  template TensorT<T> relu<T>(TapeT<T>*, const TensorT<T>&);                                     \
  template TensorT<T> sum<T>(TapeT<T>*, const TensorT<T>&);                                      \
  template TensorT<T> conv2d<T>(TapeT<T>*, const TensorT<T>&, const TensorT<T>&,                 \
                                const TensorT<T>*, int, int);                                    \
  template TensorT<T> batchnorm2d<T>(TapeT<T>*, const TensorT<T>&, const TensorT<T>&,            \
                                     const TensorT<T>&, TensorT<T>&, TensorT<T>&, bool, T, T);   \
  template TensorT<T> maxpool2d<T>(TapeT<T>*, const TensorT<T>&, int, int);                      \
  template TensorT<T> avgpool_global<T>(TapeT<T>*, const TensorT<T>&);                           \
  template TensorT<T> flatten<T>(TapeT<T>*, const TensorT<T>&);                                  \
  template TensorT<T> dense<T>(TapeT<T>*, const TensorT<T>&, const TensorT<T>&,                  \
                               const TensorT<T>*);                                               \
  template TensorT<T> channel_norm<T>(TapeT<T>*, const TensorT<T>&, const std::array<T, 3>&,     \
                                      const std::array<T, 3>&);                                  \
  template TensorT<T> softmax_cross_entropy<T>(TapeT<T>*, const TensorT<T>&,                     \
                                               const std::vector<int>&);                         \
  template std::vector<int> argmax_rows<T>(const TensorT<T>&);                                   \
  template TensorT<T> softmax<T>(const TensorT<T>&);

QPL_INSTANTIATE_OPS(float)
QPL_INSTANTIATE_OPS(double)

}  // namespace qpl::ops
