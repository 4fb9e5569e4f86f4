#include <chrono>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>

#include "qpl/cli.hpp"
#include "qpl/ops.hpp"
#include "qpl/report.hpp"

namespace qpl::cli {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

}  // namespace

std::pair<data::Dataset, data::Dataset> resolve_dataset(const DatasetSpec& spec,
                                                        std::uint64_t seed) {
  if (spec.source == "synthetic") {
    data::Dataset train = data::synthesize_shapes(
        spec.subset_size, data::kClasses, derive_seed(seed, 0x7121, spec.subset_seed));
    train.split = "train";
    data::Dataset test = data::synthesize_shapes(
        spec.test_size, data::kClasses, derive_seed(seed, 0x7E57, spec.subset_seed));
    test.split = "test";
    return {std::move(train), std::move(test)};
  }
  std::string dir = spec.dir;
  if (dir.empty()) {
    const char* env = std::getenv("QPL_DATA_DIR");
    if (env) dir = env;
  }
  if (!data::cifar10_present(dir))
    throw MissingArtifact("cifar10 batches not found under '" + dir +
                          "' (set dataset.dir or QPL_DATA_DIR)");
  auto [train, test] = data::load_cifar10(dir);
  if (spec.subset_size < train.count())
    train = train.subset(spec.subset_size, derive_seed(seed, 0x5b5e7, spec.subset_seed));
  if (spec.test_size < test.count())
    test = test.subset(spec.test_size, derive_seed(seed, 0x5b5e8, spec.subset_seed));
  return {std::move(train), std::move(test)};
}

nn::Model load_checkpoint_checked(const std::string& path) {
  if (path.empty()) throw ConfigError("checkpoint path is empty");
  if (!fs::exists(path)) throw MissingArtifact("checkpoint not found: " + path);
  return nn::load_checkpoint(path);
}

namespace {

attack::PatchArtifact load_patch_checked(const std::string& path) {
  if (path.empty()) throw ConfigError("eval.patch is required for this command");
  if (!fs::exists(path)) throw MissingArtifact("patch artifact not found: " + path);
  return attack::load_patch(path);
}

// Keeps loaded models alive alongside the reference grid.
struct LoadedModels {
  std::deque<nn::Model> storage;
  std::vector<harness::ModelRef> refs;
};

LoadedModels load_eval_models(const EvalSpec& eval, ManifestWriter* manifest) {
  if (eval.checkpoints.empty()) throw ConfigError("eval.checkpoints must list at least one entry");
  LoadedModels out;
  for (const auto& ref : eval.checkpoints) {
    harness::ModelRef mr;
    mr.arch = ref.arch;
    mr.bitwidth = ref.bitwidth;
    mr.quant_mode = ref.quant_mode;
    try {
      out.storage.push_back(load_checkpoint_checked(ref.path));
      mr.model = &out.storage.back();
      if (manifest) manifest->add_input(ref.path);
    } catch (const MissingArtifact&) {
      throw;  // a listed checkpoint that is absent aborts the command
    }
    out.refs.push_back(mr);
  }
  return out;
}

// Patched copy of a dataset: one uniform placement per image from the seed.
data::Dataset patched_dataset(const data::Dataset& clean, const attack::PatchArtifact& patch,
                              std::uint64_t seed) {
  data::Dataset adv = clean;
  for (int i = 0; i < adv.count(); ++i) {
    Rng rng(derive_seed(seed, 0xADF0, static_cast<std::uint64_t>(i)));
    const attack::PatchPlacement place = attack::random_placement(rng, patch.size);
    Tensor img = clean.image(i);
    Tensor out = attack::apply_patch(img, patch, place);
    std::copy(out.data(), out.data() + out.numel(),
              adv.images.data() + static_cast<std::size_t>(i) * data::kImageElems);
  }
  adv.split = clean.split + "+patch";
  return adv;
}

harness::AsrOptions asr_options(const ExperimentConfig& cfg) {
  harness::AsrOptions opt;
  opt.runs = cfg.eval.runs;
  opt.seed = cfg.seed;
  opt.batch_size = cfg.eval.batch_size;
  if (cfg.eval.placement_policy == "fixed") {
    opt.policy = harness::PlacementPolicy::fixed;
    opt.fixed_place = {cfg.eval.fixed_place[0], cfg.eval.fixed_place[1], 0.0f, 1.0f};
  }
  return opt;
}

attack::PixelAttackConfig pixel_config(const ExperimentConfig& cfg) {
  attack::PixelAttackConfig p;
  p.epsilon = cfg.attack.epsilon;
  p.alpha = cfg.attack.alpha;
  p.steps = cfg.attack.steps;
  p.random_start = cfg.attack.random_start;
  p.seed = cfg.seed;
  return p;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("train", cfg.raw);
  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);

  nn::Model model = cfg.train.init_from.empty()
                        ? nn::build_model(cfg.model.arch, cfg.seed)
                        : load_checkpoint_checked(cfg.train.init_from);
  if (!cfg.train.init_from.empty()) {
    manifest.add_input(cfg.train.init_from);
    if (model.arch != cfg.model.arch)
      throw ConfigError("init_from checkpoint is " + model.arch + ", config wants " +
                        cfg.model.arch);
  }
  if (cfg.model.quant_mode == "ptq")
    throw ConfigError("quant_mode 'ptq' is produced by the quantize-ptq command, not train");
  if (cfg.model.quant_mode == "qat") {
    quant::QatSpec spec;
    spec.bitwidth = cfg.model.bitwidth;
    nn::qat_attach(model, spec);
  }

  nn::TrainConfig tc = cfg.train.cfg;
  tc.seed = cfg.seed;
  tc.validate();
  const auto t_train = Clock::now();
  nn::TrainResult result = nn::train(model, train_set, test_set, tc);
  manifest.add_duration("train", ms_since(t_train));

  if (cfg.model.quant_mode == "qat") {
    model.quant_mode = "qat";  // covers the passthrough 32-bit case
    model.quant_bitwidth = cfg.model.bitwidth;
  }

  json summary;
  summary["final_test_acc"] = result.final_test_acc;
  summary["epochs"] = json::array();
  for (const auto& e : result.history) {
    json je;
    je["epoch"] = e.epoch;
    je["lr"] = e.lr;
    je["train_loss"] = e.train_loss;
    je["train_acc"] = e.train_acc;
    je["test_acc"] = e.test_acc;
    summary["epochs"].push_back(std::move(je));
  }
  model.train_summary_json = summary.dump();

  const std::string ckpt = join(cfg.out_dir, "checkpoint.qnet");
  fs::create_directories(cfg.out_dir);
  nn::save_checkpoint(model, ckpt);
  manifest.add_output(ckpt);

  std::string csv = "epoch,lr,train_loss,train_acc,test_acc\n";
  for (const auto& e : result.history) {
    char line[160];
    std::snprintf(line, sizeof(line), "%d,%.6g,%.6f,%.2f,%.2f\n", e.epoch, e.lr, e.train_loss,
                  e.train_acc, e.test_acc);
    csv += line;
  }
  const std::string metrics = join(cfg.out_dir, "metrics.csv");
  report::write_file_atomic(metrics, csv);
  manifest.add_output(metrics);

  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

int cmd_quantize_ptq(const ExperimentConfig& cfg, const std::string& checkpoint) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("quantize-ptq", cfg.raw);
  nn::Model model = load_checkpoint_checked(checkpoint);
  manifest.add_input(checkpoint);
  if (model.quant_mode != "none")
    throw UsageError("quantize-ptq expects a full-precision checkpoint, got " + model.quant_mode);

  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);
  (void)test_set;
  if (cfg.eval.calib_size > train_set.count())
    throw ConfigError("calib_size exceeds the training subset");

  // explicit calibration sample ids, recorded in the manifest
  std::vector<int> ids(train_set.count());
  for (int i = 0; i < train_set.count(); ++i) ids[i] = i;
  Rng rng(derive_seed(cfg.seed, 0xCA11B));
  for (int i = train_set.count() - 1; i > 0; --i) std::swap(ids[i], ids[rng.uniform_int(0, i)]);
  ids.resize(cfg.eval.calib_size);

  data::Dataset calib;
  calib.source = train_set.source;
  calib.split = "calibration";
  for (int id : ids) {
    calib.labels.push_back(train_set.labels[id]);
    const float* p = train_set.image_ptr(id);
    calib.images.insert(calib.images.end(), p, p + data::kImageElems);
  }

  nn::ptq_calibrate(model, calib, cfg.model.bitwidth, std::min(128, cfg.eval.calib_size));

  const std::string ckpt = join(cfg.out_dir, "checkpoint.qnet");
  fs::create_directories(cfg.out_dir);
  nn::save_checkpoint(model, ckpt);
  manifest.add_output(ckpt);

  json extra;
  extra["calibration_ids"] = ids;
  report::write_json(join(cfg.out_dir, "calibration.json"), extra);
  manifest.add_output(join(cfg.out_dir, "calibration.json"));

  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

int cmd_attack_craft(const ExperimentConfig& cfg, const std::string& checkpoint) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("attack-craft", cfg.raw);
  nn::Model model = load_checkpoint_checked(checkpoint);
  manifest.add_input(checkpoint);
  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);
  (void)test_set;

  attack::CraftConfig craft;
  craft.size = cfg.attack.patch_size;
  craft.iters = cfg.attack.iters;
  craft.lr = cfg.attack.lr;
  craft.seed = cfg.seed;

  attack::PatchArtifact patch;
  if (cfg.attack.kind == "lavan") {
    patch = attack::craft_lavan(model, train_set, craft);
  } else if (cfg.attack.kind == "gap") {
    patch = attack::craft_gap(model, train_set, cfg.attack.target, cfg.attack.eot, craft);
  } else {
    throw ConfigError("attack-craft supports kinds 'lavan' and 'gap', got " + cfg.attack.kind);
  }

  const std::string out = join(cfg.out_dir, "patch.qpch");
  fs::create_directories(cfg.out_dir);
  attack::save_patch(patch, out);
  manifest.add_output(out);
  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

int cmd_eval_asr(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("eval-asr", cfg.raw);
  attack::PatchArtifact patch = load_patch_checked(cfg.eval.patch);
  manifest.add_input(cfg.eval.patch);
  auto models = load_eval_models(cfg.eval, &manifest);
  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);
  (void)train_set;

  const harness::AsrOptions opt = asr_options(cfg);
  json rows = json::array();
  std::string csv = "model,asr\n";
  for (auto& mr : models.refs) {
    harness::AsrResult r = patch.mode == "targeted_gap"
                               ? harness::asr_targeted(*mr.model, test_set, patch, patch.target, opt)
                               : harness::asr_untargeted(*mr.model, test_set, patch, opt);
    json row;
    row["model"] = mr.label();
    row["asr"] = report::to_json(r);
    rows.push_back(std::move(row));
    csv += mr.label() + "," + report::format_asr_cell(r) + "\n";
  }
  json results;
  results["rows"] = std::move(rows);

  report::write_json(join(cfg.out_dir, "asr.json"),
                     report::experiment_report("eval-asr", cfg.raw, results));
  report::write_file_atomic(join(cfg.out_dir, "asr.csv"), csv);
  manifest.add_output(join(cfg.out_dir, "asr.json"));
  manifest.add_output(join(cfg.out_dir, "asr.csv"));
  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

int cmd_eval_transfer(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("eval-transfer", cfg.raw);
  attack::PatchArtifact patch = load_patch_checked(cfg.eval.patch);
  manifest.add_input(cfg.eval.patch);
  auto models = load_eval_models(cfg.eval, &manifest);
  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);
  (void)train_set;

  harness::TransferMatrix tm =
      harness::transfer_matrix(patch, models.refs, test_set, asr_options(cfg));

  report::write_json(join(cfg.out_dir, "transfer.json"),
                     report::experiment_report("eval-transfer", cfg.raw, report::to_json(tm)));
  report::write_file_atomic(join(cfg.out_dir, "transfer.csv"), report::to_csv(tm));
  manifest.add_output(join(cfg.out_dir, "transfer.json"));
  manifest.add_output(join(cfg.out_dir, "transfer.csv"));
  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

int cmd_eval_spatial(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("eval-spatial", cfg.raw);
  attack::PatchArtifact patch = load_patch_checked(cfg.eval.patch);
  manifest.add_input(cfg.eval.patch);
  auto models = load_eval_models(cfg.eval, &manifest);
  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);
  (void)train_set;

  std::vector<attack::PatchPlacement> placements;
  for (const auto& p : cfg.eval.placements)
    placements.push_back({p[0], p[1], 0.0f, 1.0f});
  // rotations evaluate at a centered position so the footprint stays inside
  const int center = (data::kImageDim - patch.size) / 2;
  for (float deg : cfg.eval.rotations)
    placements.push_back({center, center, deg, 1.0f});

  harness::SpatialReport rep =
      harness::spatial_sweep(models.refs, patch, placements, test_set, asr_options(cfg));

  report::write_json(join(cfg.out_dir, "spatial.json"),
                     report::experiment_report("eval-spatial", cfg.raw, report::to_json(rep)));
  report::write_file_atomic(join(cfg.out_dir, "spatial.csv"), report::to_csv(rep));
  manifest.add_output(join(cfg.out_dir, "spatial.json"));
  manifest.add_output(join(cfg.out_dir, "spatial.csv"));
  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

int cmd_eval_sizes(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("eval-sizes", cfg.raw);
  if (cfg.eval.sizes.empty()) throw ConfigError("eval.sizes must list at least one size");
  nn::Model substitute = load_checkpoint_checked(cfg.eval.substitute);
  manifest.add_input(cfg.eval.substitute);
  auto models = load_eval_models(cfg.eval, &manifest);
  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);

  attack::CraftConfig craft;
  craft.iters = cfg.attack.iters;
  craft.lr = cfg.attack.lr;
  craft.seed = cfg.seed;

  harness::SizeReport rep = harness::size_sweep(substitute, models.refs, cfg.eval.sizes, craft,
                                                train_set, test_set, asr_options(cfg));

  for (const auto& cell : rep.cells) {
    const std::string p =
        join(cfg.out_dir, "patch_" + std::to_string(cell.size) + "x" +
                              std::to_string(cell.size) + ".qpch");
    attack::save_patch(cell.patch, p);
    manifest.add_output(p);
  }

  report::write_json(join(cfg.out_dir, "sizes.json"),
                     report::experiment_report("eval-sizes", cfg.raw, report::to_json(rep)));
  report::write_file_atomic(join(cfg.out_dir, "sizes.csv"), report::to_csv(rep));
  manifest.add_output(join(cfg.out_dir, "sizes.json"));
  manifest.add_output(join(cfg.out_dir, "sizes.csv"));
  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

int cmd_eval_pgd(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("eval-pgd", cfg.raw);
  if (cfg.eval.epsilons.empty()) throw ConfigError("eval.epsilons must list at least one value");
  auto models = load_eval_models(cfg.eval, &manifest);
  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);
  (void)train_set;

  std::optional<nn::Model> source;
  if (!cfg.eval.source_checkpoint.empty()) {
    source = load_checkpoint_checked(cfg.eval.source_checkpoint);
    manifest.add_input(cfg.eval.source_checkpoint);
  }

  harness::PgdSweepReport rep =
      harness::pgd_accuracy_sweep(models.refs, cfg.eval.epsilons, pixel_config(cfg), test_set,
                                  source ? &*source : nullptr, cfg.eval.batch_size);

  report::write_json(join(cfg.out_dir, "pgd.json"),
                     report::experiment_report("eval-pgd", cfg.raw, report::to_json(rep)));
  report::write_file_atomic(join(cfg.out_dir, "pgd.csv"), report::to_csv(rep));
  manifest.add_output(join(cfg.out_dir, "pgd.json"));
  manifest.add_output(join(cfg.out_dir, "pgd.csv"));
  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

int cmd_analyze_featmaps(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("analyze-featmaps", cfg.raw);
  attack::PatchArtifact patch = load_patch_checked(cfg.eval.patch);
  manifest.add_input(cfg.eval.patch);
  auto models = load_eval_models(cfg.eval, &manifest);
  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);
  (void)train_set;

  if (cfg.eval.image_index < 0 || cfg.eval.image_index >= test_set.count())
    throw ConfigError("eval.image_index outside the test set");

  // pixel-level input crafted on the reference model (source or first entry)
  nn::Model reference = cfg.eval.source_checkpoint.empty()
                            ? load_checkpoint_checked(cfg.eval.checkpoints.front().path)
                            : load_checkpoint_checked(cfg.eval.source_checkpoint);

  Tensor clean = test_set.image(cfg.eval.image_index);
  const int center = (data::kImageDim - patch.size) / 2;
  Tensor patched = attack::apply_patch(clean, patch, {center, center, 0.0f, 1.0f});
  Tensor batch(Shape{1, 3, 32, 32});
  std::copy(clean.data(), clean.data() + clean.numel(), batch.data());
  Tensor pixel =
      attack::pgd(reference, batch, {test_set.labels[cfg.eval.image_index]}, pixel_config(cfg));

  std::map<std::string, Tensor> inputs;
  inputs["clean"] = clean;
  inputs["patched"] = patched;
  inputs["pixel"] = pixel.viewed(Shape{3, 32, 32});

  std::vector<std::string> taps = {"conv1", "conv2", "conv3"};
  auto entries = harness::featuremap_dump(models.refs, inputs, taps, join(cfg.out_dir, "maps"));
  for (const auto& e : entries) {
    manifest.add_output(e.pgm_path);
    manifest.add_output(e.csv_path);
  }

  report::write_json(
      join(cfg.out_dir, "featuremaps.json"),
      report::experiment_report("analyze-featmaps", cfg.raw, report::to_json(entries)));
  manifest.add_output(join(cfg.out_dir, "featuremaps.json"));
  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

int cmd_analyze_gradalign(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("analyze-gradalign", cfg.raw);
  attack::PatchArtifact patch = load_patch_checked(cfg.eval.patch);
  manifest.add_input(cfg.eval.patch);
  if (cfg.eval.source_checkpoint.empty())
    throw ConfigError("analyze-gradalign needs eval.source_checkpoint (the fp32 reference)");
  nn::Model fp_model = load_checkpoint_checked(cfg.eval.source_checkpoint);
  manifest.add_input(cfg.eval.source_checkpoint);
  auto models = load_eval_models(cfg.eval, &manifest);
  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);
  (void)train_set;

  const int n = std::min(cfg.eval.align_samples, test_set.count());
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = test_set.labels[i];

  // patched inputs: per-image random placement
  Tensor patched(Shape{n, 3, 32, 32});
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(cfg.seed, 0xA119, static_cast<std::uint64_t>(i)));
    Tensor img = test_set.image(i);
    Tensor out = attack::apply_patch(img, patch, attack::random_placement(rng, patch.size));
    std::copy(out.data(), out.data() + out.numel(),
              patched.data() + static_cast<std::size_t>(i) * data::kImageElems);
  }
  // pixel inputs: PGD on the fp reference
  Tensor pixel(Shape{n, 3, 32, 32});
  const int B = cfg.eval.batch_size;
  for (int start = 0; start < n; start += B) {
    const int end = std::min(n, start + B);
    std::vector<int> chunk_idx(idx.begin() + start, idx.begin() + end);
    std::vector<int> chunk_labels(labels.begin() + start, labels.begin() + end);
    Tensor adv = attack::pgd(fp_model, test_set.batch(chunk_idx), chunk_labels, pixel_config(cfg));
    std::copy(adv.data(), adv.data() + adv.numel(),
              pixel.data() + static_cast<std::size_t>(start) * data::kImageElems);
  }

  std::vector<harness::AlignmentInputs> sets;
  sets.push_back({"patch", patched, labels});
  sets.push_back({"pixel", pixel, labels});

  harness::AlignmentResult res =
      harness::gradient_alignment(fp_model, models.refs, sets, cfg.eval.batch_size);

  report::write_json(join(cfg.out_dir, "gradalign.json"),
                     report::experiment_report("analyze-gradalign", cfg.raw, report::to_json(res)));
  report::write_file_atomic(join(cfg.out_dir, "gradalign.csv"), report::to_csv(res));
  manifest.add_output(join(cfg.out_dir, "gradalign.json"));
  manifest.add_output(join(cfg.out_dir, "gradalign.csv"));
  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

int cmd_eval_defense(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ManifestWriter manifest("eval-defense", cfg.raw);
  attack::PatchArtifact patch = load_patch_checked(cfg.eval.patch);
  manifest.add_input(cfg.eval.patch);
  auto models = load_eval_models(cfg.eval, &manifest);
  auto [train_set, test_set] = resolve_dataset(cfg.dataset, cfg.seed);
  (void)train_set;
  if (cfg.eval.defenses.empty()) throw ConfigError("eval.defenses must list at least one entry");

  data::Dataset adv = patched_dataset(test_set, patch, cfg.seed);
  harness::DefenseReport rep = harness::defense_eval(models.refs, cfg.eval.defenses, test_set,
                                                     adv, cfg.eval.runs, cfg.seed,
                                                     cfg.eval.batch_size);

  report::write_json(join(cfg.out_dir, "defense.json"),
                     report::experiment_report("eval-defense", cfg.raw, report::to_json(rep)));
  report::write_file_atomic(join(cfg.out_dir, "defense.csv"), report::to_csv(rep));
  manifest.add_output(join(cfg.out_dir, "defense.json"));
  manifest.add_output(join(cfg.out_dir, "defense.csv"));
  manifest.add_duration("total", ms_since(t0));
  manifest.write(cfg.out_dir);
  return kExitOk;
}

}  // namespace qpl::cli
