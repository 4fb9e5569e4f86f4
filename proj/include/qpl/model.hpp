#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qpl/data.hpp"
#include "qpl/quant.hpp"
#include "qpl/tape.hpp"
#include "qpl/tensor.hpp"

namespace qpl::nn {

enum class LayerKind { input, conv, batchnorm, relu, maxpool, gap, flatten, dense, add };

const char* layer_kind_name(LayerKind k);

// One node of the (topologically ordered) architecture graph.
struct LayerNode {
  LayerKind kind = LayerKind::input;
  std::string name;
  int in0 = -1;
  int in1 = -1;  // second producer, add only

  // conv / dense geometry
  int in_ch = 0, out_ch = 0, ksize = 0, stride = 1, pad = 0;
  bool has_bias = false;
  int pool_k = 2, pool_stride = 2;

  // parameters and buffers
  Tensor w, b;
  Tensor gamma, beta, run_mean, run_var;
  float bn_eps = 1e-5f;
  float bn_momentum = 0.1f;

  // optional quantizer attachments
  std::optional<quant::QuantParams> wq;  // conv/dense weights
  std::optional<quant::QuantParams> aq;  // this node's output

  bool tap = false;
  std::string tap_name;
};

struct ForwardOpts {
  Tape* tape = nullptr;
  bool training = false;               // batch statistics + running updates
  bool observe_activations = false;    // update activation observers
  quant::ObserveMode observe_mode = quant::ObserveMode::ema;
  bool apply_weight_quant = true;
  bool apply_activation_quant = true;
  std::map<std::string, Tensor>* taps = nullptr;
};

struct ParamRef {
  Tensor* tensor;
  bool decay;  // weight decay applies to conv/dense weights only
  std::string name;
};

struct Model {
  std::string arch;
  std::uint64_t init_seed = 0;
  std::array<float, 3> input_mean{0.4914f, 0.4822f, 0.4465f};
  std::array<float, 3> input_std{0.2470f, 0.2435f, 0.2616f};
  std::vector<LayerNode> nodes;
  int quant_bitwidth = 32;
  std::string quant_mode = "none";  // none | qat | ptq
  std::string train_summary_json;   // carried through checkpoints verbatim

  Tensor forward(const Tensor& x, const ForwardOpts& opts);
  // Frozen eval-mode forward (no observers, no stat updates).
  Tensor predict(const Tensor& x, Tape* tape = nullptr);
  std::pair<Tensor, std::map<std::string, Tensor>> forward_with_taps(const Tensor& x);

  std::vector<ParamRef> parameters();
  // Checkpoint payload order: parameters plus running statistics.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::size_t parameter_count() const;
  void zero_param_grads();
  std::vector<std::string> tap_names() const;
  bool has_unfrozen_quantizers() const;
};

Model build_model(const std::string& arch_id, std::uint64_t seed);
const std::vector<std::string>& known_archs();

// QAT: weight_symmetric on every conv/dense weight, activation_affine with
// EMA observers on every post-activation output (relu, gap). First and last
// layers included.
void qat_attach(Model& m, const quant::QatSpec& spec);
void freeze_quantizers(Model& m);

// PTQ calibration: weights symmetric-minmax per tensor, activation observers
// filled by one min-max pass over the calibration set; weights unchanged.
void ptq_calibrate(Model& m, const data::Dataset& calib, int bitwidth, int batch_size = 128);

struct TrainConfig {
  int batch_size = 128;
  int epochs = 50;
  float lr = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  std::vector<int> lr_decay_epochs{25, 38};  // 0-based epoch indices
  float lr_decay_factor = 0.1f;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  int epoch;
  float lr;
  float train_loss;
  float train_acc;  // percent
  float test_acc;   // percent
};

struct TrainResult {
  std::vector<EpochStats> history;
  float final_test_acc = 0.0f;
};

// SGD with momentum; weight decay on conv/dense weights only. Deterministic
// given (model seed, cfg.seed, worker count). Quantizer attachments, when
// present and unfrozen, run in observe+apply mode (QAT) and are frozen when
// training completes.
TrainResult train(Model& m, const data::Dataset& train_set, const data::Dataset& test_set,
                  const TrainConfig& cfg);

float evaluate_accuracy(Model& m, const data::Dataset& ds, int batch_size = 256);

// "QNET" checkpoint: magic, u32 version, u64 metadata length, UTF-8 JSON
// metadata, tensor manifest, raw little-endian f32 payloads.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace qpl::nn
