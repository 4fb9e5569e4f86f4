#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "qpl/model.hpp"

namespace qpl::nn {

using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'Q', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

json quantizer_to_json(const std::string& node, const char* which,
                       const quant::QuantParams& qp) {
  json j;
  j["node"] = node;
  j["which"] = which;
  j["bitwidth"] = qp.bitwidth;
  j["kind"] = quant::quant_kind_name(qp.kind);
  j["scale"] = qp.scale;
  j["zero_point"] = qp.zero_point;
  j["observed_min"] = qp.observed_min;
  j["observed_max"] = qp.observed_max;
  j["ema_momentum"] = qp.ema_momentum;
  j["initialized"] = qp.initialized;
  j["frozen"] = qp.frozen;
  return j;
}

quant::QuantParams quantizer_from_json(const json& j) {
  quant::QuantParams qp;
  qp.bitwidth = j.at("bitwidth").get<int>();
  qp.kind = quant::quant_kind_from_name(j.at("kind").get<std::string>());
  qp.scale = j.at("scale").get<float>();
  qp.zero_point = j.at("zero_point").get<int>();
  qp.observed_min = j.at("observed_min").get<float>();
  qp.observed_max = j.at("observed_max").get<float>();
  qp.ema_momentum = j.at("ema_momentum").get<float>();
  qp.initialized = j.at("initialized").get<bool>();
  qp.frozen = j.at("frozen").get<bool>();
  return qp;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4) throw FormatError("checkpoint truncated while reading " + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (is.gcount() != 8) throw FormatError("checkpoint truncated while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string read_blob(std::istream& is, std::uint64_t len, const std::string& what) {
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(is.gcount()) != len)
    throw FormatError("checkpoint truncated while reading " + what);
  return s;
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  json meta;
  meta["arch"] = m.arch;
  meta["init_seed"] = m.init_seed;
  meta["quant_mode"] = m.quant_mode;
  meta["quant_bitwidth"] = m.quant_bitwidth;
  meta["input_mean"] = m.input_mean;
  meta["input_std"] = m.input_std;
  meta["train_summary"] = m.train_summary_json;
  json quants = json::array();
  for (const auto& node : m.nodes) {
    if (node.wq) quants.push_back(quantizer_to_json(node.name, "w", *node.wq));
    if (node.aq) quants.push_back(quantizer_to_json(node.name, "a", *node.aq));
  }
  meta["quantizers"] = std::move(quants);

  Model& mm = const_cast<Model&>(m);  // named_tensors is logically const
  auto tensors = mm.named_tensors();
  json manifest = json::array();
  for (auto& [name, t] : tensors) {
    json e;
    e["name"] = name;
    e["shape"] = t->shape();
    e["dtype"] = "f32";
    manifest.push_back(std::move(e));
  }

  const std::string meta_s = meta.dump();
  const std::string manifest_s = manifest.dump();

  const std::filesystem::path fp(path);
  if (fp.has_parent_path()) std::filesystem::create_directories(fp.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write checkpoint " + path);
  f.write(kMagic, 4);
  write_u32(f, kVersion);
  write_u64(f, meta_s.size());
  f.write(meta_s.data(), static_cast<std::streamsize>(meta_s.size()));
  write_u64(f, manifest_s.size());
  f.write(manifest_s.data(), static_cast<std::streamsize>(manifest_s.size()));
  for (auto& [name, t] : tensors)
    f.write(reinterpret_cast<const char*>(t->data()),
            static_cast<std::streamsize>(t->numel() * sizeof(float)));
  if (!f) throw FormatError("write failed for checkpoint " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad checkpoint magic");
  const std::uint32_t version = read_u32(f, "version");
  if (version != kVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));

  json meta, manifest;
  try {
    meta = json::parse(read_blob(f, read_u64(f, "metadata length"), "metadata"));
    manifest = json::parse(read_blob(f, read_u64(f, "manifest length"), "manifest"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": corrupt checkpoint JSON: " + e.what());
  }

  Model m = build_model(meta.at("arch").get<std::string>(),
                        meta.at("init_seed").get<std::uint64_t>());
  m.quant_mode = meta.at("quant_mode").get<std::string>();
  m.quant_bitwidth = meta.at("quant_bitwidth").get<int>();
  m.input_mean = meta.at("input_mean").get<std::array<float, 3>>();
  m.input_std = meta.at("input_std").get<std::array<float, 3>>();
  m.train_summary_json = meta.at("train_summary").get<std::string>();

  auto tensors = m.named_tensors();
  if (manifest.size() != tensors.size())
    throw FormatError(path + ": manifest lists " + std::to_string(manifest.size()) +
                      " tensors, architecture has " + std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& e = manifest[i];
    if (e.at("name").get<std::string>() != tensors[i].first)
      throw FormatError(path + ": manifest tensor '" + e.at("name").get<std::string>() +
                        "' does not match expected '" + tensors[i].first + "'");
    if (e.at("shape").get<Shape>() != tensors[i].second->shape())
      throw FormatError(path + ": shape mismatch for " + tensors[i].first);
    if (e.at("dtype").get<std::string>() != "f32")
      throw FormatError(path + ": unsupported dtype for " + tensors[i].first);
  }
  for (auto& [name, t] : tensors) {
    f.read(reinterpret_cast<char*>(t->data()),
           static_cast<std::streamsize>(t->numel() * sizeof(float)));
    if (static_cast<std::size_t>(f.gcount()) != t->numel() * sizeof(float))
      throw FormatError(path + ": truncated payload at tensor " + name);
  }

  for (const auto& jq : meta.at("quantizers")) {
    const std::string node_name = jq.at("node").get<std::string>();
    bool found = false;
    for (auto& node : m.nodes) {
      if (node.name != node_name) continue;
      found = true;
      if (jq.at("which").get<std::string>() == "w")
        node.wq = quantizer_from_json(jq);
      else
        node.aq = quantizer_from_json(jq);
      break;
    }
    if (!found) throw FormatError(path + ": quantizer references unknown node " + node_name);
  }
  return m;
}

}  // namespace qpl::nn
