#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "camelion/config.hpp"
#include "camelion/error.hpp"
#include "camelion/experiment.hpp"
#include "camelion/metrics.hpp"
#include "camelion/phantom.hpp"
#include "camelion/pipeline.hpp"

namespace fs = std::filesystem;
using namespace camelion;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitPipeline = 4;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file layered over the defaults")->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.overrides, "Override one key, e.g. --set loop.max_iterations=3 (repeatable)");
  cmd->add_option("--seed", opts.seed, "Top-level seed; overrides the config file and --set");
}

RunConfig effective_config(const CommonOptions& opts) {
  RunConfig cfg = opts.config_path.empty() ? default_config() : load_config(opts.config_path);
  for (const auto& o : opts.overrides) apply_override(cfg, o);
  if (opts.seed) {
    cfg.seed = *opts.seed;
    cfg.propagate_seed();
  }
  cfg.validate();
  return cfg;
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
  try {
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("cannot create output directory: ") + e.what());
  }
  std::ofstream out(dir / "effective_config.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "effective_config.json").string());
  out << config_to_json(cfg) << '\n';
  if (!out) throw IoError("failed writing " + (dir / "effective_config.json").string());
}

int cmd_phantom(const CommonOptions& opts, const fs::path& out) {
  const RunConfig cfg = effective_config(opts);
  generate_cohort(cfg.phantom, cfg.n_atlas, cfg.n_test, cfg.protocol_a, cfg.protocol_b, out);
  echo_config(cfg, out);
  std::cout << (out / "manifest.json").string() << '\n';
  return kExitOk;
}

int cmd_run(const CommonOptions& opts, const fs::path& manifest_path, const std::string& method_name,
            const std::string& subject, const fs::path& runs) {
  const RunConfig cfg = effective_config(opts);
  const Method method = method_from_string(method_name);
  const Manifest manifest = read_manifest(manifest_path);
  std::vector<std::string> subjects;
  if (subject == "all") {
    for (const ManifestEntry* e : manifest.with_role(SubjectRole::Test)) subjects.push_back(e->id);
  } else {
    subjects.push_back(manifest.find(subject).id);
  }
  const Cohort cohort = load_cohort(manifest, cfg);
  echo_config(cfg, runs);
  for (const auto& id : subjects) {
    run_subject(manifest, cohort, id, method, cfg, runs);
    std::cout << arm_dir(runs, id, method).string() << '\n';
  }
  return kExitOk;
}

int cmd_eval(const CommonOptions& opts, const fs::path& manifest_path, const fs::path& runs, const fs::path& out) {
  const RunConfig cfg = effective_config(opts);
  const Manifest manifest = read_manifest(manifest_path);
  const Cohort cohort = load_cohort(manifest, cfg);
  const EvalOutput result = evaluate_runs(cohort, cfg, runs, out);
  echo_config(cfg, out);
  std::cout << (out / "dice.csv").string() << '\n';
  if (result.subjects >= 3)
    std::cout << (out / "correlations.csv").string() << '\n';
  else
    std::cerr << "note: volume correlations need at least 3 evaluated subjects (found " << result.subjects
              << "); correlations.csv not written\n";
  return kExitOk;
}

int cmd_config(const CommonOptions& opts, bool defaults) {
  const RunConfig cfg = defaults ? default_config() : effective_config(opts);
  std::cout << config_to_json(cfg) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrast-adaptive tissue segmentation on synthetic phantom cohorts"};
  app.require_subcommand(1);

  CommonOptions common;

  fs::path phantom_out;
  auto* phantom = app.add_subcommand("phantom", "Generate a phantom cohort and its manifest");
  phantom->add_option("--out", phantom_out, "Output directory for the cohort")->required();
  add_common(phantom, common);

  fs::path run_manifest;
  std::string run_method;
  std::string run_subject_id = "all";
  fs::path run_out;
  auto* run = app.add_subcommand("run", "Segment test subjects with one method");
  run->add_option("--manifest", run_manifest, "manifest.json written by the phantom command")->required();
  run->add_option("--method", run_method, "direct, nhm or camelion")->required();
  run->add_option("--subject", run_subject_id, "Test subject id, or 'all'")->capture_default_str();
  run->add_option("--out", run_out, "Runs directory; results go to <out>/<subject>/<method>/")->required();
  add_common(run, common);

  fs::path eval_manifest;
  fs::path eval_runs;
  fs::path eval_out;
  auto* eval = app.add_subcommand("eval", "Compute Dice, volumes and volume correlations from completed runs");
  eval->add_option("--manifest", eval_manifest, "manifest.json written by the phantom command")->required();
  eval->add_option("--runs", eval_runs, "Runs directory written by the run command")->required();
  eval->add_option("--out", eval_out, "Directory for dice.csv and correlations.csv")->required();
  add_common(eval, common);

  bool print_defaults = false;
  auto* config = app.add_subcommand("config", "Print the default or effective configuration as JSON");
  config->add_flag("--print-defaults", print_defaults, "Print the built-in defaults and ignore other options");
  add_common(config, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*phantom) return cmd_phantom(common, phantom_out);
    if (*run) return cmd_run(common, run_manifest, run_method, run_subject_id, run_out);
    if (*eval) return cmd_eval(common, eval_manifest, eval_runs, eval_out);
    if (*config) return cmd_config(common, print_defaults);
  } catch (const PipelineError& e) {
    std::cerr << "error: pipeline failed at stage '" << e.stage() << "' (iteration " << e.iteration()
              << "): " << e.what() << '\n';
    return kExitPipeline;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: pipeline failed: " << e.what() << '\n';
    return kExitPipeline;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPipeline;
  }
  return kExitConfig;
}
