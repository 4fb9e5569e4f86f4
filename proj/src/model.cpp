#include "qpl/model.hpp"

#include <algorithm>

#include "qpl/ops.hpp"

namespace qpl::nn {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::input: return "input";
    case LayerKind::conv: return "conv";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::gap: return "gap";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::add: return "add";
  }
  return "?";
}

namespace {

// Weight fake-quant params track the live tensor until frozen. QAT uses the
// MSE-optimal symmetric clip; plain max scaling zeroes out low-bit weights.
Tensor effective_weight(LayerNode& node, const ForwardOpts& opts) {
  if (!node.wq || !opts.apply_weight_quant || node.wq->is_passthrough()) return node.w;
  if (!node.wq->frozen) quant::calibrate_weight_scale_mse(*node.wq, node.w);
  return quant::fake_quant(opts.tape, node.w, *node.wq);
}

}  // namespace

Tensor Model::forward(const Tensor& x, const ForwardOpts& opts) {
  if (nodes.empty() || nodes[0].kind != LayerKind::input)
    throw UsageError("model graph has no input node");
  std::vector<Tensor> values(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    LayerNode& node = nodes[i];
    const auto in = [&](int idx) -> const Tensor& {
      if (idx < 0 || idx >= static_cast<int>(i)) throw UsageError("graph edge out of order");
      return values[idx];
    };
    Tensor v;
    switch (node.kind) {
      case LayerKind::input:
        v = ops::channel_norm(opts.tape, x, input_mean, input_std);
        break;
      case LayerKind::conv: {
        Tensor w = effective_weight(node, opts);
        v = ops::conv2d(opts.tape, in(node.in0), w, node.has_bias ? &node.b : nullptr,
                        node.stride, node.pad);
        break;
      }
      case LayerKind::batchnorm:
        v = ops::batchnorm2d(opts.tape, in(node.in0), node.gamma, node.beta, node.run_mean,
                             node.run_var, opts.training, node.bn_momentum, node.bn_eps);
        break;
      case LayerKind::relu:
        v = ops::relu(opts.tape, in(node.in0));
        break;
      case LayerKind::maxpool:
        v = ops::maxpool2d(opts.tape, in(node.in0), node.pool_k, node.pool_stride);
        break;
      case LayerKind::gap:
        v = ops::avgpool_global(opts.tape, in(node.in0));
        break;
      case LayerKind::flatten:
        v = ops::flatten(opts.tape, in(node.in0));
        break;
      case LayerKind::dense: {
        Tensor w = effective_weight(node, opts);
        v = ops::dense(opts.tape, in(node.in0), w, node.has_bias ? &node.b : nullptr);
        break;
      }
      case LayerKind::add:
        v = ops::add(opts.tape, in(node.in0), in(node.in1));
        break;
    }
    if (node.aq && !node.aq->is_passthrough()) {
      if (opts.observe_activations && !node.aq->frozen)
        quant::observe(*node.aq, v, opts.observe_mode);
      if (opts.apply_activation_quant && node.aq->initialized)
        v = quant::fake_quant(opts.tape, v, *node.aq);
    }
    if (node.tap && opts.taps) (*opts.taps)[node.tap_name] = v.clone();
    values[i] = std::move(v);
  }
  return values.back();
}

Tensor Model::predict(const Tensor& x, Tape* tape) {
  ForwardOpts opts;
  opts.tape = tape;
  return forward(x, opts);
}

std::pair<Tensor, std::map<std::string, Tensor>> Model::forward_with_taps(const Tensor& x) {
  std::map<std::string, Tensor> taps;
  ForwardOpts opts;
  opts.taps = &taps;
  Tensor logits = forward(x, opts);
  return {logits, std::move(taps)};
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  for (auto& node : nodes) {
    if (node.kind == LayerKind::conv || node.kind == LayerKind::dense) {
      out.push_back({&node.w, true, node.name + ".w"});
      if (node.has_bias) out.push_back({&node.b, false, node.name + ".b"});
    } else if (node.kind == LayerKind::batchnorm) {
      out.push_back({&node.gamma, false, node.name + ".gamma"});
      out.push_back({&node.beta, false, node.name + ".beta"});
    }
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Model::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& node : nodes) {
    if (node.kind == LayerKind::conv || node.kind == LayerKind::dense) {
      out.emplace_back(node.name + ".w", &node.w);
      if (node.has_bias) out.emplace_back(node.name + ".b", &node.b);
    } else if (node.kind == LayerKind::batchnorm) {
      out.emplace_back(node.name + ".gamma", &node.gamma);
      out.emplace_back(node.name + ".beta", &node.beta);
      out.emplace_back(node.name + ".run_mean", &node.run_mean);
      out.emplace_back(node.name + ".run_var", &node.run_var);
    }
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes) {
    if (node.kind == LayerKind::conv || node.kind == LayerKind::dense) {
      n += node.w.numel();
      if (node.has_bias) n += node.b.numel();
    } else if (node.kind == LayerKind::batchnorm) {
      n += node.gamma.numel() + node.beta.numel();
    }
  }
  return n;
}

void Model::zero_param_grads() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

std::vector<std::string> Model::tap_names() const {
  std::vector<std::string> out;
  for (const auto& node : nodes)
    if (node.tap) out.push_back(node.tap_name);
  return out;
}

bool Model::has_unfrozen_quantizers() const {
  for (const auto& node : nodes) {
    if (node.wq && !node.wq->is_passthrough() && !node.wq->frozen) return true;
    if (node.aq && !node.aq->is_passthrough() && !node.aq->frozen) return true;
  }
  return false;
}

void qat_attach(Model& m, const quant::QatSpec& spec) {
  for (auto& node : m.nodes) {
    if (spec.quantize_weights &&
        (node.kind == LayerKind::conv || node.kind == LayerKind::dense))
      node.wq = quant::make_quant(spec.bitwidth, quant::QuantKind::weight_symmetric);
    if (spec.quantize_activations &&
        (node.kind == LayerKind::relu || node.kind == LayerKind::gap))
      node.aq = quant::make_quant(spec.bitwidth, quant::QuantKind::activation_affine);
  }
  m.quant_bitwidth = spec.bitwidth;
}

void freeze_quantizers(Model& m) {
  for (auto& node : m.nodes) {
    if (node.wq && !node.wq->is_passthrough()) {
      node.wq->frozen = false;
      quant::calibrate_weight_scale_mse(*node.wq, node.w);
      node.wq->frozen = true;
    }
    if (node.aq) node.aq->frozen = true;
  }
}

void ptq_calibrate(Model& m, const data::Dataset& calib, int bitwidth, int batch_size) {
  if (m.quant_mode != "none")
    throw UsageError("ptq_calibrate expects a full-precision model, got mode " + m.quant_mode);
  if (calib.count() < 1) throw ConfigError("ptq_calibrate: empty calibration set");
  if (calib.count() < batch_size)
    throw ConfigError("ptq_calibrate: calibration set smaller than one batch (" +
                      std::to_string(calib.count()) + " < " + std::to_string(batch_size) + ")");
  quant::QatSpec spec;
  spec.bitwidth = bitwidth;
  qat_attach(m, spec);

  // quantize weights from their own min-max, leave values untouched
  for (auto& node : m.nodes)
    if (node.wq && !node.wq->is_passthrough()) {
      quant::observe(*node.wq, node.w, quant::ObserveMode::minmax);
      node.wq->frozen = true;
    }

  // one observation pass over the calibration set
  ForwardOpts opts;
  opts.observe_activations = true;
  opts.observe_mode = quant::ObserveMode::minmax;
  opts.apply_activation_quant = false;  // observe pre-quant activations
  for (int start = 0; start < calib.count(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(calib.count(), start + batch_size); ++i) idx.push_back(i);
    m.forward(calib.batch(idx), opts);
  }
  for (auto& node : m.nodes)
    if (node.aq) node.aq->frozen = true;
  m.quant_mode = "ptq";
  m.quant_bitwidth = bitwidth;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (lr < 0.0f) throw ConfigError("lr must be >= 0");
  if (momentum < 0.0f || momentum >= 1.0f) throw ConfigError("momentum must be in [0,1)");
  if (weight_decay < 0.0f) throw ConfigError("weight_decay must be >= 0");
}

}  // namespace qpl::nn
