#include <cmath>
#include <numeric>

#include "qpl/model.hpp"
#include "qpl/ops.hpp"

namespace qpl::nn {

float evaluate_accuracy(Model& m, const data::Dataset& ds, int batch_size) {
  int correct = 0;
  for (int start = 0; start < ds.count(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(ds.count(), start + batch_size); ++i) idx.push_back(i);
    Tensor logits = m.predict(ds.batch(idx));
    const auto pred = ops::argmax_rows(logits);
    for (std::size_t b = 0; b < idx.size(); ++b)
      if (pred[b] == ds.labels[idx[b]]) ++correct;
  }
  return 100.0f * static_cast<float>(correct) / static_cast<float>(ds.count());
}

TrainResult train(Model& m, const data::Dataset& train_set, const data::Dataset& test_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  train_set.validate();
  const bool qat = m.has_unfrozen_quantizers();

  auto params = m.parameters();
  std::vector<std::vector<float>> velocity(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    velocity[i].assign(params[i].tensor->numel(), 0.0f);

  TrainResult res;
  std::vector<int> order(train_set.count());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    float lr = cfg.lr;
    for (int d : cfg.lr_decay_epochs)
      if (epoch >= d) lr *= cfg.lr_decay_factor;

    Rng shuffle_rng(derive_seed(cfg.seed, 0xE41, static_cast<std::uint64_t>(epoch)));
    for (int i = train_set.count() - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);

    double loss_sum = 0.0;
    int seen = 0, correct = 0;
    for (int start = 0; start < train_set.count(); start += cfg.batch_size) {
      std::vector<int> idx;
      std::vector<int> labels;
      for (int i = start; i < std::min(train_set.count(), start + cfg.batch_size); ++i) {
        idx.push_back(order[i]);
        labels.push_back(train_set.labels[order[i]]);
      }
      Tensor x = train_set.batch(idx);

      Tape tape;
      ForwardOpts opts;
      opts.tape = &tape;
      opts.training = true;
      opts.observe_activations = qat;
      opts.observe_mode = quant::ObserveMode::ema;
      Tensor logits = m.forward(x, opts);

      const auto pred = ops::argmax_rows(logits);
      for (std::size_t b = 0; b < idx.size(); ++b)
        if (pred[b] == labels[b]) ++correct;

      Tensor loss = ops::softmax_cross_entropy(&tape, logits, labels);
      const float lval = loss.data()[0];
      if (!std::isfinite(lval))
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(start / cfg.batch_size));
      loss_sum += static_cast<double>(lval) * static_cast<double>(idx.size());
      seen += static_cast<int>(idx.size());

      m.zero_param_grads();
      tape.backward(loss);

      for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p].tensor;
        float* w = t.data();
        const float* g = t.grad();
        float* v = velocity[p].data();
        const float wd = params[p].decay ? cfg.weight_decay : 0.0f;
        for (std::size_t i = 0; i < t.numel(); ++i) {
          const float gi = g[i] + wd * w[i];
          v[i] = cfg.momentum * v[i] + gi;
          w[i] -= lr * v[i];
        }
      }
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_loss = static_cast<float>(loss_sum / std::max(1, seen));
    st.train_acc = 100.0f * static_cast<float>(correct) / static_cast<float>(seen);
    st.test_acc = test_set.count() > 0 ? evaluate_accuracy(m, test_set) : 0.0f;
    res.history.push_back(st);
  }

  if (qat) {
    freeze_quantizers(m);
    m.quant_mode = "qat";
  }
  if (!res.history.empty()) res.final_test_acc = res.history.back().test_acc;
  return res;
}

}  // namespace qpl::nn
