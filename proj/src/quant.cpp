#include "qpl/quant.hpp"

#include <algorithm>
#include <cmath>

namespace qpl::quant {

const char* quant_kind_name(QuantKind k) {
  switch (k) {
    case QuantKind::passthrough: return "passthrough";
    case QuantKind::weight_symmetric: return "weight_symmetric";
    case QuantKind::activation_affine: return "activation_affine";
  }
  return "?";
}

QuantKind quant_kind_from_name(const std::string& s) {
  if (s == "passthrough") return QuantKind::passthrough;
  if (s == "weight_symmetric") return QuantKind::weight_symmetric;
  if (s == "activation_affine") return QuantKind::activation_affine;
  throw ConfigError("unknown quantizer kind: " + s);
}

int QuantParams::qmin() const {
  if (is_passthrough()) return 0;
  return kind == QuantKind::weight_symmetric ? -((1 << (bitwidth - 1)) - 1) : 0;
}

int QuantParams::qmax() const {
  if (is_passthrough()) return 0;
  return kind == QuantKind::weight_symmetric ? (1 << (bitwidth - 1)) - 1 : (1 << bitwidth) - 1;
}

float QuantParams::range_lo() const {
  return scale * static_cast<float>(qmin() - zero_point);
}

float QuantParams::range_hi() const {
  return scale * static_cast<float>(qmax() - zero_point);
}

void QuantParams::refresh() {
  if (is_passthrough()) {
    scale = 1.0f;
    zero_point = 0;
    return;
  }
  if (kind == QuantKind::weight_symmetric) {
    const float amax = std::max(std::fabs(observed_min), std::fabs(observed_max));
    zero_point = 0;
    scale = amax > 0.0f ? amax / static_cast<float>(qmax()) : 1.0f;
  } else {
    // Affine range always spans zero so that real 0 is exactly representable.
    const float lo = std::min(observed_min, 0.0f);
    const float hi = std::max(observed_max, 0.0f);
    if (hi - lo <= 0.0f) {
      scale = 1.0f;
      zero_point = 0;
      return;
    }
    scale = (hi - lo) / static_cast<float>(qmax() - qmin());
    const float z = -lo / scale;
    zero_point = std::clamp(static_cast<int>(std::lround(z)), qmin(), qmax());
  }
}

QuantParams make_quant(int bitwidth, QuantKind kind) {
  if (bitwidth != 2 && bitwidth != 4 && bitwidth != 5 && bitwidth != 8 && bitwidth != 32)
    throw ConfigError("unsupported bitwidth " + std::to_string(bitwidth));
  QuantParams qp;
  qp.bitwidth = bitwidth;
  qp.kind = bitwidth == 32 ? QuantKind::passthrough : kind;
  if (bitwidth == 32 && kind != QuantKind::passthrough)
    qp.kind = QuantKind::passthrough;  // 32-bit is identity by construction
  return qp;
}

void observe(QuantParams& qp, const Tensor& batch, ObserveMode mode) {
  if (batch.numel() == 0) throw UsageError("observe: empty batch");
  if (qp.frozen || qp.is_passthrough()) return;
  float lo = batch.data()[0], hi = batch.data()[0];
  for (std::size_t i = 1; i < batch.numel(); ++i) {
    lo = std::min(lo, batch.data()[i]);
    hi = std::max(hi, batch.data()[i]);
  }
  if (!qp.initialized) {
    qp.observed_min = lo;
    qp.observed_max = hi;
    qp.initialized = true;
  } else if (mode == ObserveMode::minmax) {
    qp.observed_min = std::min(qp.observed_min, lo);
    qp.observed_max = std::max(qp.observed_max, hi);
  } else {
    const float m = qp.ema_momentum;
    qp.observed_min = m * qp.observed_min + (1.0f - m) * lo;
    qp.observed_max = m * qp.observed_max + (1.0f - m) * hi;
  }
  qp.refresh();
}

void calibrate_weight_scale_mse(QuantParams& qp, const Tensor& w) {
  if (qp.is_passthrough()) return;
  if (qp.kind != QuantKind::weight_symmetric)
    throw UsageError("calibrate_weight_scale_mse expects a weight_symmetric quantizer");
  if (w.numel() == 0) throw UsageError("calibrate_weight_scale_mse: empty tensor");
  float amax = 0.0f;
  for (std::size_t i = 0; i < w.numel(); ++i) amax = std::max(amax, std::fabs(w.data()[i]));
  if (amax <= 0.0f) {
    qp.observed_min = 0.0f;
    qp.observed_max = 0.0f;
    qp.initialized = true;
    qp.refresh();
    return;
  }
  constexpr int kCandidates = 32;
  const float qmax = static_cast<float>(qp.qmax());
  float best_clip = amax;
  double best_err = -1.0;
  for (int c = 1; c <= kCandidates; ++c) {
    const float clip = amax * static_cast<float>(c) / kCandidates;
    const float s = clip / qmax;
    double err = 0.0;
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const float v = w.data()[i];
      const float q = std::clamp(std::round(v / s), -qmax, qmax) * s;
      const double d = static_cast<double>(v) - q;
      err += d * d;
    }
    if (best_err < 0.0 || err < best_err) {
      best_err = err;
      best_clip = clip;
    }
  }
  qp.observed_min = -best_clip;
  qp.observed_max = best_clip;
  qp.initialized = true;
  qp.refresh();
}

static inline float round_half_away(float v) {
  // std::round rounds halves away from zero, which is the fixed rule here.
  return std::round(v);
}

float fake_quant_scalar(float x, const QuantParams& qp) {
  if (qp.is_passthrough()) return x;
  const float q = round_half_away(x / qp.scale) + static_cast<float>(qp.zero_point);
  const float qc = std::clamp(q, static_cast<float>(qp.qmin()), static_cast<float>(qp.qmax()));
  return (qc - static_cast<float>(qp.zero_point)) * qp.scale;
}

Tensor fake_quant(Tape* tape, const Tensor& x, const QuantParams& qp) {
  if (qp.is_passthrough()) {
    if (!tape) return x;
    Tensor out = x.clone();
    Tensor xc = x, oc = out;
    const std::size_t n = x.numel();
    tape->record([=]() mutable {
      float* gx = xc.grad();
      const float* go = oc.grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += go[i];
    });
    return out;
  }
  if (!(qp.scale > 0.0f)) throw ConfigError("fake_quant: scale must be positive");

  Tensor out(x.shape());
  const std::size_t n = x.numel();
  const float s = qp.scale;
  const float z = static_cast<float>(qp.zero_point);
  const float lo = static_cast<float>(qp.qmin());
  const float hi = static_cast<float>(qp.qmax());
  for (std::size_t i = 0; i < n; ++i) {
    const float q = round_half_away(x.data()[i] / s) + z;
    out.data()[i] = (std::clamp(q, lo, hi) - z) * s;
  }

  if (tape) {
    // Clipped STE: gradient passes only where x sits inside the
    // representable real range.
    const float rlo = qp.range_lo();
    const float rhi = qp.range_hi();
    Tensor xc = x, oc = out;
    tape->record([=]() mutable {
      float* gx = xc.grad();
      const float* go = oc.grad();
      for (std::size_t i = 0; i < n; ++i)
        if (xc.data()[i] >= rlo && xc.data()[i] <= rhi) gx[i] += go[i];
    });
  }
  return out;
}

}  // namespace qpl::quant
