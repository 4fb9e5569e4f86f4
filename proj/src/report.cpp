#include "qpl/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qpl/version.hpp"

namespace qpl::report {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string placement_label(const attack::PatchPlacement& p) {
  std::string s = "shift(" + std::to_string(p.row) + "," + std::to_string(p.col) + ")";
  if (p.rotation_deg != 0.0f) s += "+rot(" + fmt("%.0f", p.rotation_deg) + ")";
  if (p.scale != 1.0f) s += "+scale(" + fmt("%.2f", p.scale) + ")";
  return s;
}

}  // namespace

json environment_fingerprint() {
  json j;
  j["tool"] = "qpl";
  j["version"] = kVersion;
  j["scalar"] = "f32";
  j["workers"] = workers();
#ifdef _OPENMP
  j["openmp"] = true;
#else
  j["openmp"] = false;
#endif
  return j;
}

std::string format_mean_std(double mean, double stddev) {
  return fmt("%.2f", mean) + " (" + fmt("%.2f", stddev) + ")";
}

std::string format_asr_cell(const harness::AsrResult& r) {
  if (r.degenerate) return "degenerate";
  return format_mean_std(r.mean, r.stddev);
}

json to_json(const harness::AsrResult& r) {
  json j;
  j["mean"] = r.mean;
  j["std"] = r.stddev;
  j["runs"] = r.runs;
  j["per_run"] = r.per_run;
  j["denominators"] = r.denominators;
  j["degenerate"] = r.degenerate;
  return j;
}

json to_json(const harness::TransferMatrix& tm) {
  json j;
  j["substitute"] = tm.substitute;
  j["patch_mode"] = tm.patch_mode;
  j["bitwidths"] = tm.col_bitwidths;
  json rows = json::array();
  for (std::size_t r = 0; r < tm.row_archs.size(); ++r) {
    json row;
    row["arch"] = tm.row_archs[r];
    json cells = json::array();
    for (const auto& cell : tm.cells[r]) {
      json c;
      c["present"] = cell.present;
      if (cell.present)
        c["asr"] = to_json(cell.asr);
      else
        c["note"] = cell.note;
      cells.push_back(std::move(c));
    }
    row["cells"] = std::move(cells);
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j;
}

std::string to_csv(const harness::TransferMatrix& tm) {
  std::string out = "arch";
  for (int b : tm.col_bitwidths) out += "," + std::to_string(b) + "-bit";
  out += "\n";
  for (std::size_t r = 0; r < tm.row_archs.size(); ++r) {
    out += tm.row_archs[r];
    for (const auto& cell : tm.cells[r])
      out += "," + (cell.present ? format_asr_cell(cell.asr) : std::string("absent"));
    out += "\n";
  }
  return out;
}

json to_json(const harness::AlignmentResult& ar) {
  json j;
  for (const auto& [kind, cells] : ar.by_kind) {
    json arr = json::array();
    for (const auto& c : cells) {
      json e;
      e["bitwidth"] = c.bitwidth;
      e["cosine_mean"] = c.cosine_mean;
      e["mse_mean"] = c.mse_mean;
      e["samples"] = c.samples;
      e["skipped"] = c.skipped;
      arr.push_back(std::move(e));
    }
    j[kind] = std::move(arr);
  }
  return j;
}

std::string to_csv(const harness::AlignmentResult& ar) {
  std::string out = "kind,bitwidth,cosine_mean,mse_mean,samples,skipped\n";
  for (const auto& [kind, cells] : ar.by_kind)
    for (const auto& c : cells)
      out += kind + "," + std::to_string(c.bitwidth) + "," + fmt("%.4f", c.cosine_mean) + "," +
             fmt("%.6f", c.mse_mean) + "," + std::to_string(c.samples) + "," +
             std::to_string(c.skipped) + "\n";
  return out;
}

json to_json(const harness::SpatialReport& sr) {
  json arr = json::array();
  for (const auto& cell : sr.cells) {
    json c;
    c["row"] = cell.place.row;
    c["col"] = cell.place.col;
    c["rotation_deg"] = cell.place.rotation_deg;
    c["scale"] = cell.place.scale;
    c["valid"] = cell.valid;
    if (!cell.valid) {
      c["note"] = cell.note;
    } else {
      json by_bits;
      for (const auto& [bits, asr] : cell.by_bitwidth)
        by_bits[std::to_string(bits)] = to_json(asr);
      c["asr"] = std::move(by_bits);
    }
    arr.push_back(std::move(c));
  }
  json j;
  j["cells"] = std::move(arr);
  return j;
}

std::string to_csv(const harness::SpatialReport& sr) {
  std::vector<int> bits;
  for (const auto& cell : sr.cells)
    for (const auto& [b, asr] : cell.by_bitwidth)
      if (std::find(bits.begin(), bits.end(), b) == bits.end()) bits.push_back(b);
  std::string out = "placement";
  for (int b : bits) out += "," + std::to_string(b) + "-bit";
  out += "\n";
  for (const auto& cell : sr.cells) {
    out += placement_label(cell.place);
    if (!cell.valid) {
      out += ",skipped (" + cell.note + ")";
    } else {
      for (int b : bits) {
        auto it = cell.by_bitwidth.find(b);
        out += "," + (it != cell.by_bitwidth.end() ? format_asr_cell(it->second)
                                                   : std::string("absent"));
      }
    }
    out += "\n";
  }
  return out;
}

json to_json(const harness::SizeReport& sr) {
  json arr = json::array();
  for (const auto& cell : sr.cells) {
    json c;
    c["size"] = cell.size;
    json by_bits;
    for (const auto& [bits, asr] : cell.by_bitwidth) by_bits[std::to_string(bits)] = to_json(asr);
    c["asr"] = std::move(by_bits);
    c["best_objective_history"] = cell.patch.best_objective_history;
    arr.push_back(std::move(c));
  }
  json j;
  j["cells"] = std::move(arr);
  return j;
}

std::string to_csv(const harness::SizeReport& sr) {
  std::vector<int> bits;
  for (const auto& cell : sr.cells)
    for (const auto& [b, asr] : cell.by_bitwidth)
      if (std::find(bits.begin(), bits.end(), b) == bits.end()) bits.push_back(b);
  std::string out = "size";
  for (int b : bits) out += "," + std::to_string(b) + "-bit";
  out += "\n";
  for (const auto& cell : sr.cells) {
    out += std::to_string(cell.size) + "x" + std::to_string(cell.size);
    for (int b : bits) {
      auto it = cell.by_bitwidth.find(b);
      out += "," +
             (it != cell.by_bitwidth.end() ? format_asr_cell(it->second) : std::string("absent"));
    }
    out += "\n";
  }
  return out;
}

json to_json(const harness::PgdSweepReport& pr) {
  json j;
  j["epsilons"] = pr.epsilons;
  json curves = json::array();
  for (const auto& c : pr.curves) {
    json e;
    e["label"] = c.label;
    e["bitwidth"] = c.bitwidth;
    e["accuracy"] = c.accuracy;
    curves.push_back(std::move(e));
  }
  j["curves"] = std::move(curves);
  return j;
}

std::string to_csv(const harness::PgdSweepReport& pr) {
  std::string out = "model";
  for (float e : pr.epsilons) out += "," + fmt("%.4f", e);
  out += "\n";
  for (const auto& c : pr.curves) {
    out += c.label;
    for (double a : c.accuracy) out += "," + fmt("%.2f", a);
    out += "\n";
  }
  return out;
}

json to_json(const harness::DefenseReport& dr) {
  json j;
  j["runs"] = dr.runs;
  json cells = json::array();
  for (const auto& c : dr.cells) {
    json e;
    e["defense"] = c.defense;
    e["input"] = c.input;
    e["bitwidth"] = c.bitwidth;
    e["mean"] = c.mean;
    e["std"] = c.stddev;
    e["per_run"] = c.per_run;
    cells.push_back(std::move(e));
  }
  j["cells"] = std::move(cells);
  return j;
}

std::string to_csv(const harness::DefenseReport& dr) {
  std::vector<int> bits;
  for (const auto& c : dr.cells)
    if (std::find(bits.begin(), bits.end(), c.bitwidth) == bits.end()) bits.push_back(c.bitwidth);
  std::string out = "defense,input";
  for (int b : bits) out += "," + std::to_string(b) + "-bit";
  out += "\n";
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& c : dr.cells) {
    std::pair<std::string, std::string> key{c.defense, c.input};
    if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
  }
  for (const auto& [defense, input] : rows) {
    out += defense + "," + input;
    for (int b : bits) {
      bool found = false;
      for (const auto& c : dr.cells)
        if (c.defense == defense && c.input == input && c.bitwidth == b) {
          out += "," + format_mean_std(c.mean, c.stddev);
          found = true;
          break;
        }
      if (!found) out += ",absent";
    }
    out += "\n";
  }
  return out;
}

json to_json(const std::vector<harness::FeatureMapManifestEntry>& fm) {
  json arr = json::array();
  for (const auto& e : fm) {
    json c;
    c["model"] = e.model;
    c["input"] = e.input;
    c["tap"] = e.tap;
    c["pgm"] = e.pgm_path;
    c["csv"] = e.csv_path;
    c["height"] = e.height;
    c["width"] = e.width;
    arr.push_back(std::move(c));
  }
  json j;
  j["maps"] = std::move(arr);
  return j;
}

json experiment_report(const std::string& experiment, const json& config, const json& results) {
  json j;
  j["experiment"] = experiment;
  j["config"] = config;
  j["results"] = results;
  j["environment"] = environment_fingerprint();
  return j;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write " + tmp);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
  }
  fs::rename(tmp, p);
}

void write_json(const std::string& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

std::string fnv1a_file_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot hash missing file " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace qpl::report
