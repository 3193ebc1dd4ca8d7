#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fgssl/config.hpp"
#include "fgssl/data_pipeline.hpp"
#include "fgssl/evaluation.hpp"
#include "fgssl/pmg_network.hpp"

namespace fgssl::runtime {

// Identifies the source tree a binary was built from (git commit plus a
// dirty marker, or "unknown").
std::string code_version();

// Output directory owned by one process for the lifetime of the object.
// Creating it takes `.lock` with O_EXCL; a second owner gets RunLockedError.
class RunDirectory {
 public:
  explicit RunDirectory(const std::filesystem::path& root);
  ~RunDirectory();
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path checkpoints() const { return root_ / "checkpoints"; }
  std::filesystem::path metrics() const { return root_ / "metrics.jsonl"; }

  // Writes config.ini, config_hash and code_version.
  void describe(const config::ExperimentConfig& config) const;

 private:
  std::filesystem::path root_;
  std::filesystem::path lock_;
};

struct LoadedImages {
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  data::DatasetManifest manifest;
};

// Reads every manifest entry and resizes/center-crops it to `resize` then
// `crop` (skipped when the image already has that size).
LoadedImages load_images(const data::DatasetManifest& manifest, int resize, int crop);

model::PmgNetwork make_network(const config::ExperimentConfig& config, const std::vector<int64_t>& label_sizes);

// Each command returns the run directory it wrote to.
std::filesystem::path cmd_pretrain(const config::ExperimentConfig& config);
// Fine-tunes from config.init_checkpoint (or from scratch when empty) and
// writes eval_report.json when a test manifest is configured.
std::filesystem::path cmd_finetune(const config::ExperimentConfig& config);

// Deterministic report for a fine-tuned checkpoint on a manifest. Written
// to `output` when given. Missing inputs throw UsageError.
eval::EvalReport cmd_evaluate(const config::ExperimentConfig& config, const std::filesystem::path& checkpoint,
                              const std::filesystem::path& manifest,
                              const std::optional<std::filesystem::path>& output = std::nullopt);

struct GradcamRequest {
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> images;
  std::vector<int> stages;  // empty = config.gradcam_stages, else every backbone stage
  std::optional<std::filesystem::path> baseline_checkpoint;
};

// One overlay PNG per (image, stage), named <stem>_layer<k>.png. With a
// baseline checkpoint, <stem>_compare.png puts the baseline's layers on the
// left and the model's on the right. Unreadable images are skipped with a
// warning; InputError when none could be processed.
std::vector<std::filesystem::path> cmd_gradcam(const config::ExperimentConfig& config,
                                               const GradcamRequest& request);

// Generates the synthetic dataset (and a test set when
// data.synth_test_per_class > 0) under output_dir.
std::filesystem::path cmd_synth_data(const config::ExperimentConfig& config);

// Splits data.manifest into train.csv / test.csv under output_dir.
std::filesystem::path cmd_split(const config::ExperimentConfig& config);

}  // namespace fgssl::runtime
