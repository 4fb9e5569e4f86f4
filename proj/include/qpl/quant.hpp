#pragma once

#include <cstdint>
#include <string>

#include "qpl/tape.hpp"
#include "qpl/tensor.hpp"

namespace qpl::quant {

enum class QuantKind { passthrough, weight_symmetric, activation_affine };

const char* quant_kind_name(QuantKind k);
QuantKind quant_kind_from_name(const std::string& s);

enum class ObserveMode { minmax, ema };

// Uniform per-tensor quantizer state. bitwidth 32 always means passthrough.
struct QuantParams {
  int bitwidth = 32;
  QuantKind kind = QuantKind::passthrough;
  float scale = 1.0f;
  int zero_point = 0;
  float observed_min = 0.0f;
  float observed_max = 0.0f;
  float ema_momentum = 0.99f;
  bool initialized = false;  // observers have seen data
  bool frozen = false;       // calibrated/trained; observers stop updating

  // Integer grid bounds for the current kind/bitwidth.
  int qmin() const;
  int qmax() const;
  // Real-valued representable range [lo, hi]; gradients clip outside it.
  float range_lo() const;
  float range_hi() const;

  bool is_passthrough() const { return kind == QuantKind::passthrough || bitwidth >= 32; }

  // Recompute scale/zero_point from the observed range. Degenerate ranges
  // fall back to scale=1, zero_point=0.
  void refresh();
};

QuantParams make_quant(int bitwidth, QuantKind kind);

// Range observers. minmax keeps running extrema; ema tracks
// new = m*old + (1-m)*batch_extreme once initialized.
void observe(QuantParams& qp, const Tensor& batch, ObserveMode mode);

// Symmetric weight range by grid search over clipped maxima, minimizing the
// quantization MSE. Raw max scaling is useless at 2 bits (almost every
// weight rounds to zero), so QAT weight quantizers calibrate through this;
// PTQ keeps plain min-max.
void calibrate_weight_scale_mse(QuantParams& qp, const Tensor& w);

// Round-to-grid-and-dequantize with round-half-away-from-zero.
// Differentiable through the clipped straight-through estimator.
Tensor fake_quant(Tape* tape, const Tensor& x, const QuantParams& qp);

float fake_quant_scalar(float x, const QuantParams& qp);

// Which layers of a model receive quantizers during QAT.
struct QatSpec {
  int bitwidth = 32;
  bool quantize_weights = true;
  bool quantize_activations = true;
};

}  // namespace qpl::quant
