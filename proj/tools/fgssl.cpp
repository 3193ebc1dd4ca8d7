// fgssl command-line entry point.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <iostream>

#include <CLI11.hpp>

#include "fgssl/config.hpp"
#include "fgssl/errors.hpp"
#include "fgssl/runtime.hpp"

namespace fs = std::filesystem;
using namespace fgssl;

namespace {

constexpr int kUsageExit = 2;
constexpr int kRuntimeExit = 1;

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // --section.key value
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_file, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.sets, "override as section.key=value (repeatable)");
  for (const auto& key : config::keys()) {
    cmd->add_option_function<std::string>(
        "--" + key, [&opts, key](const std::string& v) { opts.flags[key] = v; }, "config key " + key);
  }
}

config::ExperimentConfig resolve(const CommonOptions& opts) {
  config::KeyValues overrides = opts.flags;
  for (const auto& s : opts.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return config::resolve(opts.config_file, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained self-supervised pretraining toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", runtime::code_version());

  CommonOptions opts;
  auto* pretrain = app.add_subcommand("pretrain", "self-supervised pretraining");
  auto* finetune = app.add_subcommand("finetune", "supervised fine-tuning (from scratch or a checkpoint)");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a fine-tuned checkpoint on a manifest");
  auto* gradcam = app.add_subcommand("gradcam", "layer-wise Grad-CAM overlays");
  auto* synth = app.add_subcommand("synth-data", "generate the synthetic dataset");
  auto* split = app.add_subcommand("split", "stratified train/test split of a manifest");
  auto* profiles = app.add_subcommand("profiles", "print a built-in profile or list them");
  for (auto* cmd : {pretrain, finetune, evaluate, gradcam, synth, split}) add_common(cmd, opts);

  fs::path checkpoint;
  fs::path manifest;
  fs::path report;
  evaluate->add_option("--checkpoint", checkpoint, "fine-tuned checkpoint")->required();
  evaluate->add_option("--manifest", manifest, "manifest to evaluate on")->required();
  evaluate->add_option("--report", report, "write the report here as well as to stdout");

  runtime::GradcamRequest cam;
  std::string baseline;
  gradcam->add_option("--checkpoint", cam.checkpoint, "fine-tuned checkpoint")->required();
  gradcam->add_option("--layers", cam.stages, "backbone stages (default: all)")->delimiter(',');
  gradcam->add_option("--baseline", baseline, "second checkpoint shown on the left of a comparison");
  gradcam->add_option("images", cam.images, "input images")->required();

  std::string profile_name;
  profiles->add_option("name", profile_name, "profile to print");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageExit;
  }

  try {
    if (*profiles) {
      if (profile_name.empty()) {
        for (const auto& n : config::profile_names()) std::cout << n << '\n';
      } else {
        std::cout << config::profile_text(profile_name);
      }
      return 0;
    }
    const auto cfg = resolve(opts);
    if (*pretrain) {
      std::cout << runtime::cmd_pretrain(cfg).string() << '\n';
    } else if (*finetune) {
      std::cout << runtime::cmd_finetune(cfg).string() << '\n';
    } else if (*evaluate) {
      const auto r = runtime::cmd_evaluate(cfg, checkpoint, manifest,
                                           report.empty() ? std::nullopt : std::optional<fs::path>(report));
      std::cout << r.to_json().dump(2) << '\n';
    } else if (*gradcam) {
      if (!baseline.empty()) cam.baseline_checkpoint = baseline;
      for (const auto& p : runtime::cmd_gradcam(cfg, cam)) std::cout << p.string() << '\n';
    } else if (*synth) {
      std::cout << runtime::cmd_synth_data(cfg).string() << '\n';
    } else if (*split) {
      std::cout << runtime::cmd_split(cfg).string() << '\n';
    }
  } catch (const ParseError& e) {
    std::cerr << "config error (line " << e.line() << "): " << e.what() << '\n';
    return kUsageExit;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsageExit;
  } catch (const NumericsError& e) {
    std::cerr << "numerics error at step " << e.step() << ": " << e.what() << " (state dumped)\n";
    return kRuntimeExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeExit;
  }
  return 0;
}
