#include "qpl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "qpl/ops.hpp"

namespace qpl::harness {

AsrResult AsrResult::from_runs(std::vector<double> vals, std::vector<int> denoms) {
  AsrResult r;
  r.per_run = std::move(vals);
  r.denominators = std::move(denoms);
  r.runs = static_cast<int>(r.per_run.size());
  if (r.runs == 0) {
    r.degenerate = true;
    return r;
  }
  double sum = 0;
  for (double v : r.per_run) sum += v;
  r.mean = sum / r.runs;
  double var = 0;
  for (double v : r.per_run) var += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(var / r.runs);
  return r;
}

std::vector<int> predict_dataset(nn::Model& model, const data::Dataset& ds, int batch_size) {
  std::vector<int> out(ds.count());
  for (int start = 0; start < ds.count(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(ds.count(), start + batch_size); ++i) idx.push_back(i);
    Tensor logits = model.predict(ds.batch(idx));
    const auto pred = ops::argmax_rows(logits);
    for (std::size_t b = 0; b < idx.size(); ++b) out[idx[b]] = pred[b];
  }
  return out;
}

double dataset_accuracy(nn::Model& model, const data::Dataset& ds, int batch_size) {
  const auto pred = predict_dataset(model, ds, batch_size);
  int correct = 0;
  for (int i = 0; i < ds.count(); ++i)
    if (pred[i] == ds.labels[i]) ++correct;
  return 100.0 * correct / std::max(1, ds.count());
}

namespace {

// One ASR run: patch every eligible image (per-image placement stream),
// predict in batches, apply the success rule.
double asr_single_run(nn::Model& model, const data::Dataset& test,
                      const std::vector<int>& eligible, const attack::PatchArtifact& patch,
                      const AsrOptions& opt, int run, bool targeted, int target) {
  int successes = 0;
  const int B = opt.batch_size;
  for (std::size_t start = 0; start < eligible.size(); start += B) {
    const std::size_t end = std::min(eligible.size(), start + B);
    std::vector<int> idx(eligible.begin() + start, eligible.begin() + end);
    std::vector<attack::PatchPlacement> places(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) {
      if (opt.policy == PlacementPolicy::fixed) {
        places[b] = opt.fixed_place;
      } else {
        Rng rng(derive_seed(opt.seed, 0xA5E0 + static_cast<std::uint64_t>(run),
                            static_cast<std::uint64_t>(idx[b])));
        places[b] = attack::random_placement(rng, patch.size);
      }
    }
    Tensor x = test.batch(idx);
    Tensor patched = attack::apply_patch_batch(nullptr, x, patch.pixels, places);
    Tensor logits = model.predict(patched);
    const auto pred = ops::argmax_rows(logits);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      if (targeted)
        successes += pred[b] == target ? 1 : 0;
      else
        successes += pred[b] != test.labels[idx[b]] ? 1 : 0;
    }
  }
  return 100.0 * successes / static_cast<double>(eligible.size());
}

std::vector<int> eligible_indices(const std::vector<int>& clean_pred, const data::Dataset& test,
                                  bool targeted, int target) {
  std::vector<int> eligible;
  for (int i = 0; i < test.count(); ++i) {
    if (clean_pred[i] != test.labels[i]) continue;
    if (targeted && test.labels[i] == target) continue;
    eligible.push_back(i);
  }
  return eligible;
}

AsrResult asr_over_eligible(nn::Model& model, const data::Dataset& test,
                            const std::vector<int>& eligible, const attack::PatchArtifact& patch,
                            const AsrOptions& opt, bool targeted, int target) {
  if (opt.runs < 1) throw ConfigError("asr runs must be >= 1");
  if (eligible.empty()) {
    AsrResult r;
    r.degenerate = true;
    r.runs = opt.runs;
    r.per_run.assign(opt.runs, 0.0);
    r.denominators.assign(opt.runs, 0);
    return r;
  }
  std::vector<double> vals;
  std::vector<int> denoms;
  for (int run = 0; run < opt.runs; ++run) {
    vals.push_back(asr_single_run(model, test, eligible, patch, opt, run, targeted, target));
    denoms.push_back(static_cast<int>(eligible.size()));
  }
  return AsrResult::from_runs(std::move(vals), std::move(denoms));
}

AsrResult asr_generic(nn::Model& model, const data::Dataset& test,
                      const attack::PatchArtifact& patch, const AsrOptions& opt, bool targeted,
                      int target) {
  test.validate();
  const auto clean_pred = predict_dataset(model, test, opt.batch_size);
  return asr_over_eligible(model, test, eligible_indices(clean_pred, test, targeted, target),
                           patch, opt, targeted, target);
}

}  // namespace

AsrResult asr_untargeted(nn::Model& model, const data::Dataset& test,
                         const attack::PatchArtifact& patch, const AsrOptions& opt) {
  return asr_generic(model, test, patch, opt, false, -1);
}

AsrResult asr_targeted(nn::Model& model, const data::Dataset& test,
                       const attack::PatchArtifact& patch, int target, const AsrOptions& opt) {
  if (target < 0 || target >= data::kClasses) throw ConfigError("target class out of range");
  return asr_generic(model, test, patch, opt, true, target);
}

TransferMatrix transfer_matrix(const attack::PatchArtifact& patch,
                               std::vector<ModelRef>& targets, const data::Dataset& test,
                               const AsrOptions& opt) {
  TransferMatrix tm;
  tm.substitute = patch.substitute_arch + "@" + std::to_string(patch.substitute_bitwidth) + "-bit";
  tm.patch_mode = patch.mode;

  for (const auto& t : targets) {
    if (std::find(tm.row_archs.begin(), tm.row_archs.end(), t.arch) == tm.row_archs.end())
      tm.row_archs.push_back(t.arch);
    if (std::find(tm.col_bitwidths.begin(), tm.col_bitwidths.end(), t.bitwidth) ==
        tm.col_bitwidths.end())
      tm.col_bitwidths.push_back(t.bitwidth);
  }
  tm.cells.assign(tm.row_archs.size(), std::vector<TransferCell>(tm.col_bitwidths.size()));

  for (auto& t : targets) {
    const auto row = static_cast<std::size_t>(
        std::find(tm.row_archs.begin(), tm.row_archs.end(), t.arch) - tm.row_archs.begin());
    const auto col = static_cast<std::size_t>(
        std::find(tm.col_bitwidths.begin(), tm.col_bitwidths.end(), t.bitwidth) -
        tm.col_bitwidths.begin());
    TransferCell& cell = tm.cells[row][col];
    if (!t.model) {
      cell.present = false;
      cell.note = "model unavailable";
      continue;
    }
    try {
      cell.asr = patch.mode == "targeted_gap"
                     ? asr_targeted(*t.model, test, patch, patch.target, opt)
                     : asr_untargeted(*t.model, test, patch, opt);
      cell.present = true;
    } catch (const Error& e) {
      cell.present = false;
      cell.note = e.what();
    }
  }
  return tm;
}

std::vector<FeatureMapManifestEntry> featuremap_dump(
    std::vector<ModelRef>& models, const std::map<std::string, Tensor>& inputs,
    const std::vector<std::string>& taps, const std::string& outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  std::vector<FeatureMapManifestEntry> manifest;

  for (auto& mr : models) {
    if (!mr.model) throw ConfigError("featuremap_dump: missing model " + mr.label());
    const auto available = mr.model->tap_names();
    for (const auto& tap : taps)
      if (std::find(available.begin(), available.end(), tap) == available.end())
        throw ConfigError("featuremap_dump: tap '" + tap + "' not registered on " + mr.label());

    for (const auto& [input_name, img] : inputs) {
      Tensor batch = img.ndim() == 4 ? img : img.viewed(Shape{1, 3, 32, 32}).clone();
      auto [logits, tap_map] = mr.model->forward_with_taps(batch);
      (void)logits;
      for (const auto& tap : taps) {
        const Tensor& act = tap_map.at(tap);  // [1,C,h,w]
        const int C = act.dim(1), h = act.dim(2), w = act.dim(3);
        std::vector<float> mean(static_cast<std::size_t>(h) * w, 0.0f);
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < h * w; ++i)
            mean[i] += act.data()[static_cast<std::size_t>(c) * h * w + i];
        float lo = mean[0], hi = mean[0];
        for (float v : mean) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        const float span = hi > lo ? hi - lo : 1.0f;
        std::vector<std::uint8_t> px(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i)
          px[i] = static_cast<std::uint8_t>(std::lround(255.0f * (mean[i] - lo) / span));

        const std::string base = mr.arch + "_" + std::to_string(mr.bitwidth) + "bit_" +
                                 mr.quant_mode + "_" + input_name + "_" + tap;
        FeatureMapManifestEntry e;
        e.model = mr.label();
        e.input = input_name;
        e.tap = tap;
        e.height = h;
        e.width = w;
        e.pgm_path = (fs::path(outdir) / (base + ".pgm")).string();
        e.csv_path = (fs::path(outdir) / (base + ".csv")).string();
        data::write_pgm(e.pgm_path, px, w, h);
        std::ofstream csv(e.csv_path, std::ios::trunc);
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            if (x) csv << ",";
            csv << mean[static_cast<std::size_t>(y) * w + x];
          }
          csv << "\n";
        }
        manifest.push_back(std::move(e));
      }
    }
  }
  return manifest;
}

AlignmentResult gradient_alignment(nn::Model& fp_model, std::vector<ModelRef>& q_models,
                                   const std::vector<AlignmentInputs>& input_sets,
                                   int batch_size) {
  AlignmentResult res;
  for (const auto& set : input_sets) {
    const int N = set.images.dim(0);
    if (static_cast<int>(set.labels.size()) != N)
      throw ConfigError("gradient_alignment: label count mismatch for " + set.kind);

    // full-precision gradients once per set
    std::vector<Tensor> fp_grads;
    for (int start = 0; start < N; start += batch_size) {
      const int end = std::min(N, start + batch_size);
      Shape s{end - start, 3, data::kImageDim, data::kImageDim};
      Tensor chunk(s);
      std::copy(set.images.data() + static_cast<std::size_t>(start) * data::kImageElems,
                set.images.data() + static_cast<std::size_t>(end) * data::kImageElems,
                chunk.data());
      std::vector<int> labels(set.labels.begin() + start, set.labels.begin() + end);
      fp_grads.push_back(attack::input_gradient(fp_model, chunk, labels));
    }

    auto& cells = res.by_kind[set.kind];
    for (auto& q : q_models) {
      if (!q.model) throw ConfigError("gradient_alignment: missing model " + q.label());
      AlignmentCell cell;
      cell.bitwidth = q.bitwidth;
      double cos_sum = 0, mse_sum = 0;
      int used = 0, skipped = 0;
      int chunk_i = 0;
      for (int start = 0; start < N; start += batch_size, ++chunk_i) {
        const int end = std::min(N, start + batch_size);
        Shape s{end - start, 3, data::kImageDim, data::kImageDim};
        Tensor chunk(s);
        std::copy(set.images.data() + static_cast<std::size_t>(start) * data::kImageElems,
                  set.images.data() + static_cast<std::size_t>(end) * data::kImageElems,
                  chunk.data());
        std::vector<int> labels(set.labels.begin() + start, set.labels.begin() + end);
        Tensor gq = attack::input_gradient(*q.model, chunk, labels);
        const Tensor& gf = fp_grads[chunk_i];
        for (int b = 0; b < end - start; ++b) {
          const float* a = gf.data() + static_cast<std::size_t>(b) * data::kImageElems;
          const float* bb = gq.data() + static_cast<std::size_t>(b) * data::kImageElems;
          double dot = 0, na = 0, nb = 0, mse = 0;
          for (std::size_t i = 0; i < data::kImageElems; ++i) {
            dot += static_cast<double>(a[i]) * bb[i];
            na += static_cast<double>(a[i]) * a[i];
            nb += static_cast<double>(bb[i]) * bb[i];
            const double d = static_cast<double>(a[i]) - bb[i];
            mse += d * d;
          }
          if (na <= 0.0 || nb <= 0.0) {
            ++skipped;
            continue;
          }
          cos_sum += dot / (std::sqrt(na) * std::sqrt(nb));
          mse_sum += mse / static_cast<double>(data::kImageElems);
          ++used;
        }
      }
      cell.samples = used;
      cell.skipped = skipped;
      cell.cosine_mean = used > 0 ? cos_sum / used : 0.0;
      cell.mse_mean = used > 0 ? mse_sum / used : 0.0;
      cells.push_back(cell);
    }
  }
  return res;
}

SpatialReport spatial_sweep(std::vector<ModelRef>& models, const attack::PatchArtifact& patch,
                            const std::vector<attack::PatchPlacement>& placements,
                            const data::Dataset& test, const AsrOptions& opt) {
  test.validate();
  const bool targeted = patch.mode == "targeted_gap";

  SpatialReport rep;
  rep.cells.resize(placements.size());
  for (std::size_t p = 0; p < placements.size(); ++p) {
    rep.cells[p].place = placements[p];
    if (!attack::placement_valid(placements[p], patch.size)) {
      rep.cells[p].valid = false;
      rep.cells[p].note = "placement outside image bounds; skipped";
    }
  }

  // clean predictions once per model, shared across placements
  for (auto& mr : models) {
    if (!mr.model) continue;
    const auto clean_pred = predict_dataset(*mr.model, test, opt.batch_size);
    const auto eligible = eligible_indices(clean_pred, test, targeted, patch.target);
    for (std::size_t p = 0; p < placements.size(); ++p) {
      if (!rep.cells[p].valid) continue;
      AsrOptions fixed = opt;
      fixed.policy = PlacementPolicy::fixed;
      fixed.fixed_place = placements[p];
      rep.cells[p].by_bitwidth[mr.bitwidth] = asr_over_eligible(
          *mr.model, test, eligible, patch, fixed, targeted, patch.target);
    }
  }
  return rep;
}

SizeReport size_sweep(nn::Model& substitute, std::vector<ModelRef>& models,
                      const std::vector<int>& sizes, const attack::CraftConfig& craft_cfg,
                      const data::Dataset& craft_data, const data::Dataset& test,
                      const AsrOptions& opt) {
  SizeReport rep;
  for (int size : sizes) {
    if (size < 1 || size > data::kImageDim)
      throw ConfigError("size_sweep: patch size " + std::to_string(size) + " out of range");
    SizeCell cell;
    cell.size = size;
    attack::CraftConfig cfg = craft_cfg;
    cfg.size = size;
    cfg.seed = derive_seed(craft_cfg.seed, 0x512E, static_cast<std::uint64_t>(size));
    cell.patch = attack::craft_lavan(substitute, craft_data, cfg);
    for (auto& mr : models) {
      if (!mr.model) continue;
      cell.by_bitwidth[mr.bitwidth] = asr_untargeted(*mr.model, test, cell.patch, opt);
    }
    rep.cells.push_back(std::move(cell));
  }
  return rep;
}

PgdSweepReport pgd_accuracy_sweep(std::vector<ModelRef>& models,
                                  const std::vector<float>& epsilons,
                                  const attack::PixelAttackConfig& base_cfg,
                                  const data::Dataset& test, nn::Model* source,
                                  int batch_size) {
  PgdSweepReport rep;
  rep.epsilons = epsilons;
  for (auto& mr : models) {
    if (!mr.model) continue;
    PgdCurve curve;
    curve.label = mr.label();
    curve.bitwidth = mr.bitwidth;
    for (float eps : epsilons) {
      if (eps == 0.0f) {
        curve.accuracy.push_back(dataset_accuracy(*mr.model, test, batch_size));
        continue;
      }
      attack::PixelAttackConfig cfg = base_cfg;
      cfg.epsilon = eps;
      cfg.alpha = std::min(base_cfg.alpha, eps);
      int correct = 0;
      for (int start = 0; start < test.count(); start += batch_size) {
        std::vector<int> idx;
        for (int i = start; i < std::min(test.count(), start + batch_size); ++i)
          idx.push_back(i);
        std::vector<int> labels;
        for (int i : idx) labels.push_back(test.labels[i]);
        Tensor x = test.batch(idx);
        nn::Model& crafted_on = source ? *source : *mr.model;
        Tensor adv = attack::pgd(crafted_on, x, labels, cfg);
        const auto pred = ops::argmax_rows(mr.model->predict(adv));
        for (std::size_t b = 0; b < idx.size(); ++b)
          if (pred[b] == labels[b]) ++correct;
      }
      curve.accuracy.push_back(100.0 * correct / std::max(1, test.count()));
    }
    rep.curves.push_back(std::move(curve));
  }
  return rep;
}

DefenseReport defense_eval(std::vector<ModelRef>& models,
                           const std::vector<std::string>& defenses, const data::Dataset& clean,
                           const data::Dataset& adv, int runs, std::uint64_t seed,
                           int batch_size) {
  if (runs < 1) throw ConfigError("defense_eval: runs must be >= 1");
  DefenseReport rep;
  rep.runs = runs;
  const std::pair<const char*, const data::Dataset*> input_sets[2] = {{"clean", &clean},
                                                                      {"adv", &adv}};
  for (const auto& defense_name : defenses) {
    const data::TransformSpec spec = data::TransformSpec::from_name(defense_name);
    for (const auto& [input_name, ds] : input_sets) {
      for (auto& mr : models) {
        if (!mr.model) continue;
        DefenseCell cell;
        cell.defense = defense_name;
        cell.input = input_name;
        cell.bitwidth = mr.bitwidth;
        for (int run = 0; run < runs; ++run) {
          data::Dataset transformed = *ds;
          if (spec.enabled()) {
            for (int i = 0; i < transformed.count(); ++i) {
              Rng rng(derive_seed(seed, 0xDEF0 + static_cast<std::uint64_t>(run),
                                  static_cast<std::uint64_t>(i)));
              data::apply_transform(
                  transformed.images.data() + static_cast<std::size_t>(i) * data::kImageElems,
                  spec, rng);
            }
          }
          cell.per_run.push_back(dataset_accuracy(*mr.model, transformed, batch_size));
        }
        double sum = 0;
        for (double v : cell.per_run) sum += v;
        cell.mean = sum / runs;
        double var = 0;
        for (double v : cell.per_run) var += (v - cell.mean) * (v - cell.mean);
        cell.stddev = std::sqrt(var / runs);
        rep.cells.push_back(std::move(cell));
      }
    }
  }
  return rep;
}

}  // namespace qpl::harness
