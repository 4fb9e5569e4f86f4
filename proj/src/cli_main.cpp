#include <cstdio>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "qpl/cli.hpp"
#include "qpl/version.hpp"

namespace qpl::cli {

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int workers = 0;
};

void add_common(CLI::App* sub, CommonFlags& flags, bool config_required = true) {
  auto* c = sub->add_option("--config", flags.config_path, "experiment configuration JSON");
  if (config_required) c->required();
  sub->add_option("--seed", flags.seed, "override the config seed");
  sub->add_option("--out", flags.out_dir, "override the output directory");
  sub->add_option("--workers", flags.workers, "worker thread count (default: physical cores)");
}

ExperimentConfig prepare(const CommonFlags& flags) {
  if (flags.workers > 0)
    set_workers(flags.workers);
  else
    set_workers(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
  ExperimentConfig cfg = load_config_file(flags.config_path);
  if (flags.seed) {
    cfg.seed = *flags.seed;
    cfg.raw["seed"] = *flags.seed;
  }
  if (!flags.out_dir.empty()) {
    cfg.out_dir = flags.out_dir;
    cfg.raw["out_dir"] = flags.out_dir;
  }
  return cfg;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"qpl: quantized-network adversarial-patch laboratory"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags train_f, ptq_f, craft_f, asr_f, transfer_f, spatial_f, sizes_f, pgd_f, featmap_f,
      gradalign_f, defense_f;
  std::string ptq_checkpoint, craft_checkpoint, suite_config, suite_out;
  std::optional<std::uint64_t> suite_seed;
  int suite_workers = 0;

  auto* trainc = app.add_subcommand("train", "train a model (fp32 or QAT)");
  add_common(trainc, train_f);

  auto* ptqc = app.add_subcommand("quantize-ptq", "post-training calibration of an fp32 checkpoint");
  add_common(ptqc, ptq_f);
  ptqc->add_option("--checkpoint", ptq_checkpoint, "fp32 input checkpoint")->required();

  auto* craftc = app.add_subcommand("attack-craft", "craft a LAVAN or GAP patch");
  add_common(craftc, craft_f);
  craftc->add_option("--checkpoint", craft_checkpoint, "substitute checkpoint")->required();

  auto* asrc = app.add_subcommand("eval-asr", "attack success rate of a patch");
  add_common(asrc, asr_f);
  auto* transferc = app.add_subcommand("eval-transfer", "transfer matrix across checkpoints");
  add_common(transferc, transfer_f);
  auto* spatialc = app.add_subcommand("eval-spatial", "patch position and rotation sweep");
  add_common(spatialc, spatial_f);
  auto* sizesc = app.add_subcommand("eval-sizes", "patch size sweep");
  add_common(sizesc, sizes_f);
  auto* pgdc = app.add_subcommand("eval-pgd", "robust accuracy vs epsilon");
  add_common(pgdc, pgd_f);
  auto* featmapc = app.add_subcommand("analyze-featmaps", "feature map dumps");
  add_common(featmapc, featmap_f);
  auto* gradalignc = app.add_subcommand("analyze-gradalign", "gradient alignment analysis");
  add_common(gradalignc, gradalign_f);
  auto* defensec = app.add_subcommand("eval-defense", "pre-processing defense study");
  add_common(defensec, defense_f);

  auto* suitec = app.add_subcommand("suite", "run a bundled experiment suite");
  suitec->add_option("--config", suite_config, "suite configuration JSON")->required();
  suitec->add_option("--seed", suite_seed, "override the suite seed");
  suitec->add_option("--out", suite_out, "override the suite output directory");
  suitec->add_option("--workers", suite_workers, "worker thread count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (trainc->parsed()) return cmd_train(prepare(train_f));
    if (ptqc->parsed()) return cmd_quantize_ptq(prepare(ptq_f), ptq_checkpoint);
    if (craftc->parsed()) return cmd_attack_craft(prepare(craft_f), craft_checkpoint);
    if (asrc->parsed()) return cmd_eval_asr(prepare(asr_f));
    if (transferc->parsed()) return cmd_eval_transfer(prepare(transfer_f));
    if (spatialc->parsed()) return cmd_eval_spatial(prepare(spatial_f));
    if (sizesc->parsed()) return cmd_eval_sizes(prepare(sizes_f));
    if (pgdc->parsed()) return cmd_eval_pgd(prepare(pgd_f));
    if (featmapc->parsed()) return cmd_analyze_featmaps(prepare(featmap_f));
    if (gradalignc->parsed()) return cmd_analyze_gradalign(prepare(gradalign_f));
    if (defensec->parsed()) return cmd_eval_defense(prepare(defense_f));
    if (suitec->parsed()) {
      if (suite_workers > 0)
        set_workers(suite_workers);
      else
        set_workers(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
      return cmd_suite(suite_config, suite_out, suite_seed);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const MissingArtifact& e) {
    std::fprintf(stderr, "missing artifact: %s\n", e.what());
    return kExitMissingArtifact;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace qpl::cli
