#include <cmath>

#include "qpl/model.hpp"

namespace qpl::nn {

namespace {

// Assembles the node list; parameter init is Kaiming-uniform for conv and
// dense weights, zeros for biases, identity for batchnorm.
struct GraphBuilder {
  Model m;
  Rng rng;
  int conv_count = 0;

  GraphBuilder(const std::string& arch, std::uint64_t seed) : rng(derive_seed(seed, 0xA2c)) {
    m.arch = arch;
    m.init_seed = seed;
    LayerNode in;
    in.kind = LayerKind::input;
    in.name = "input";
    m.nodes.push_back(std::move(in));
  }

  int last() const { return static_cast<int>(m.nodes.size()) - 1; }

  void fill_kaiming_uniform(Tensor& w, int fan_in) {
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    for (std::size_t i = 0; i < w.numel(); ++i)
      w.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
  }

  int conv(const std::string& name, int from, int in_ch, int out_ch, int k, int stride, int pad,
           bool bias) {
    LayerNode n;
    n.kind = LayerKind::conv;
    n.name = name;
    n.in0 = from;
    n.in_ch = in_ch;
    n.out_ch = out_ch;
    n.ksize = k;
    n.stride = stride;
    n.pad = pad;
    n.has_bias = bias;
    n.w = Tensor(Shape{out_ch, in_ch, k, k});
    fill_kaiming_uniform(n.w, in_ch * k * k);
    if (bias) n.b = Tensor(Shape{out_ch});
    ++conv_count;
    if (conv_count <= 3) {
      n.tap = true;
      n.tap_name = "conv" + std::to_string(conv_count);
    }
    m.nodes.push_back(std::move(n));
    return last();
  }

  int bn(const std::string& name, int from, int channels) {
    LayerNode n;
    n.kind = LayerKind::batchnorm;
    n.name = name;
    n.in0 = from;
    n.out_ch = channels;
    n.gamma = Tensor(Shape{channels}, 1.0f);
    n.beta = Tensor(Shape{channels});
    n.run_mean = Tensor(Shape{channels});
    n.run_var = Tensor(Shape{channels}, 1.0f);
    m.nodes.push_back(std::move(n));
    return last();
  }

  int relu(const std::string& name, int from) {
    LayerNode n;
    n.kind = LayerKind::relu;
    n.name = name;
    n.in0 = from;
    m.nodes.push_back(std::move(n));
    return last();
  }

  int maxpool(const std::string& name, int from, int k = 2, int stride = 2) {
    LayerNode n;
    n.kind = LayerKind::maxpool;
    n.name = name;
    n.in0 = from;
    n.pool_k = k;
    n.pool_stride = stride;
    m.nodes.push_back(std::move(n));
    return last();
  }

  int gap(const std::string& name, int from) {
    LayerNode n;
    n.kind = LayerKind::gap;
    n.name = name;
    n.in0 = from;
    m.nodes.push_back(std::move(n));
    return last();
  }

  int flatten(const std::string& name, int from) {
    LayerNode n;
    n.kind = LayerKind::flatten;
    n.name = name;
    n.in0 = from;
    m.nodes.push_back(std::move(n));
    return last();
  }

  int dense(const std::string& name, int from, int in_f, int out_f, bool bias = true) {
    LayerNode n;
    n.kind = LayerKind::dense;
    n.name = name;
    n.in0 = from;
    n.in_ch = in_f;
    n.out_ch = out_f;
    n.has_bias = bias;
    n.w = Tensor(Shape{out_f, in_f});
    fill_kaiming_uniform(n.w, in_f);
    if (bias) n.b = Tensor(Shape{out_f});
    m.nodes.push_back(std::move(n));
    return last();
  }

  int add(const std::string& name, int a, int b) {
    LayerNode n;
    n.kind = LayerKind::add;
    n.name = name;
    n.in0 = a;
    n.in1 = b;
    m.nodes.push_back(std::move(n));
    return last();
  }

  // conv-bn-relu unit
  int cbr(const std::string& base, int from, int in_ch, int out_ch, int k, int stride, int pad) {
    int c = conv(base + ".conv", from, in_ch, out_ch, k, stride, pad, false);
    int b = bn(base + ".bn", c, out_ch);
    return relu(base + ".relu", b);
  }
};

Model build_convnet3(std::uint64_t seed) {
  GraphBuilder g("convnet3", seed);
  int v = g.cbr("block1", 0, 3, 16, 3, 1, 1);
  v = g.maxpool("pool1", v);
  v = g.cbr("block2", v, 16, 32, 3, 1, 1);
  v = g.maxpool("pool2", v);
  v = g.cbr("block3", v, 32, 64, 3, 1, 1);
  v = g.maxpool("pool3", v);
  v = g.gap("gap", v);
  g.dense("fc", v, 64, 10);
  return std::move(g.m);
}

// CIFAR ResNet family: conv1 + three stages of residual blocks (16/32/64
// channels) with 1x1 projection shortcuts on the downsampling blocks.
Model build_resnet(const std::string& arch, int blocks_per_stage, std::uint64_t seed) {
  GraphBuilder g(arch, seed);
  int c1 = g.conv("conv1", 0, 3, 16, 3, 1, 1, false);
  int v = g.relu("relu1", g.bn("bn1", c1, 16));

  const int widths[3] = {16, 32, 64};
  int in_ch = 16;
  for (int s = 0; s < 3; ++s) {
    const int out_ch = widths[s];
    for (int b = 0; b < blocks_per_stage; ++b) {
      const std::string base = "s" + std::to_string(s + 1) + "b" + std::to_string(b + 1);
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      int main1 = g.conv(base + ".conv1", v, in_ch, out_ch, 3, stride, 1, false);
      int bn1v = g.bn(base + ".bn1", main1, out_ch);
      int r1 = g.relu(base + ".relu1", bn1v);
      int main2 = g.conv(base + ".conv2", r1, out_ch, out_ch, 3, 1, 1, false);
      int bn2v = g.bn(base + ".bn2", main2, out_ch);
      int skip = v;
      if (stride != 1 || in_ch != out_ch) {
        int ds = g.conv(base + ".down", v, in_ch, out_ch, 1, stride, 0, false);
        skip = g.bn(base + ".down_bn", ds, out_ch);
      }
      int sum = g.add(base + ".add", bn2v, skip);
      v = g.relu(base + ".relu2", sum);
      in_ch = out_ch;
    }
  }
  v = g.gap("gap", v);
  g.dense("fc", v, 64, 10);
  return std::move(g.m);
}

Model build_vgg(const std::string& arch, const std::vector<int>& cfg, std::uint64_t seed) {
  // cfg: channel counts, -1 marks a 2x2 maxpool
  GraphBuilder g(arch, seed);
  int v = 0;
  int in_ch = 3;
  int ci = 0, pi = 0;
  for (int c : cfg) {
    if (c < 0) {
      v = g.maxpool("pool" + std::to_string(++pi), v);
    } else {
      v = g.cbr("block" + std::to_string(++ci), v, in_ch, c, 3, 1, 1);
      in_ch = c;
    }
  }
  v = g.gap("gap", v);
  g.dense("fc", v, in_ch, 10);
  return std::move(g.m);
}

Model build_alexnet_s(std::uint64_t seed) {
  GraphBuilder g("alexnet-s", seed);
  int v = g.conv("conv1", 0, 3, 48, 5, 1, 2, true);
  v = g.relu("relu1", v);
  v = g.maxpool("pool1", v);
  v = g.conv("conv2", v, 48, 96, 5, 1, 2, true);
  v = g.relu("relu2", v);
  v = g.maxpool("pool2", v);
  v = g.conv("conv3", v, 96, 128, 3, 1, 1, true);
  v = g.relu("relu3", v);
  v = g.conv("conv4", v, 128, 128, 3, 1, 1, true);
  v = g.relu("relu4", v);
  v = g.maxpool("pool3", v);
  v = g.flatten("flatten", v);
  v = g.dense("fc1", v, 128 * 4 * 4, 512);
  v = g.relu("relu5", v);
  g.dense("fc2", v, 512, 10);
  return std::move(g.m);
}

}  // namespace

const std::vector<std::string>& known_archs() {
  static const std::vector<std::string> archs{"convnet3", "resnet8",  "resnet20", "vgg11s",
                                              "resnet56", "vgg16",    "vgg19",    "alexnet-s"};
  return archs;
}

Model build_model(const std::string& arch_id, std::uint64_t seed) {
  if (arch_id == "convnet3") return build_convnet3(seed);
  if (arch_id == "resnet8") return build_resnet(arch_id, 1, seed);
  if (arch_id == "resnet20") return build_resnet(arch_id, 3, seed);
  if (arch_id == "resnet56") return build_resnet(arch_id, 9, seed);
  if (arch_id == "vgg11s")
    return build_vgg(arch_id, {16, -1, 32, -1, 64, 64, -1, 128, 128, -1, 128, 128, -1}, seed);
  if (arch_id == "vgg16")
    return build_vgg(arch_id, {64, 64, -1, 128, 128, -1, 256, 256, 256, -1, 512, 512, 512, -1,
                               512, 512, 512, -1},
                     seed);
  if (arch_id == "vgg19")
    return build_vgg(arch_id, {64, 64, -1, 128, 128, -1, 256, 256, 256, 256, -1, 512, 512, 512,
                               512, -1, 512, 512, 512, 512, -1},
                     seed);
  if (arch_id == "alexnet-s") return build_alexnet_s(seed);
  throw ConfigError("unknown architecture: " + arch_id);
}

}  // namespace qpl::nn
