#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fgssl/augmentation.hpp"
#include "fgssl/pmg_network.hpp"
#include "fgssl/train_engine.hpp"

namespace fgssl::config {

// Everything one experiment needs. Stored as INI sections
// (run, data, model, train, augment, ablation, eval) with one level of
// nesting; see keys() for the full list.
struct ExperimentConfig {
  // [run]
  std::string profile;
  std::filesystem::path output_dir = "runs/default";
  int checkpoint_every = 10;  // epochs; the final epoch is always saved
  int threads = 0;            // 0 = leave libtorch's default

  // [data]
  std::filesystem::path manifest;       // training manifest
  std::filesystem::path test_manifest;  // optional held-out manifest
  int image_size = 64;                  // training images are resized and center-cropped to this
  double split_fraction = 0.7;
  bool stratified = true;
  int synth_classes = 4;
  int synth_per_class = 16;
  int synth_test_per_class = 0;
  int synth_size = 64;
  std::uint64_t synth_seed = 7;

  // [model]
  std::string backbone = "small_cnn";
  model::SmallCnnOptions small_cnn;
  model::PmgOptions pmg;

  // [train] and [ablation]
  train::TrainConfig train;
  std::filesystem::path init_checkpoint;  // fine-tuning initialization
  std::filesystem::path resume;           // checkpoint to continue from
  bool allow_config_mismatch = false;
  std::string offdiag_source = "cross_branch";

  // [augment]
  augment::AugmentationPolicy augment;

  // [eval]
  int eval_resize = 64;
  int eval_crop = 64;
  int eval_batch = 64;
  std::vector<int> gradcam_stages;  // empty = every backbone stage
  double gradcam_alpha = 0.5;

  // Cross-field checks (ConfigError).
  void validate() const;
};

// "section.key" -> value text, sorted.
using KeyValues = std::map<std::string, std::string>;

// All recognized keys in canonical order.
std::vector<std::string> keys();

KeyValues to_key_values(const ExperimentConfig& config);
// Applies entries on top of `config`. Unknown keys or unparsable values
// throw ConfigError.
void apply_values(ExperimentConfig& config, const KeyValues& values);

// INI text. Duplicate keys, malformed lines and unknown keys throw
// ParseError / ConfigError.
KeyValues parse_ini(const std::string& text);
std::string to_ini(const ExperimentConfig& config);

// Built-in profiles shipped with the binary.
std::vector<std::string> profile_names();
const std::string& profile_text(const std::string& name);

// Resolution order: defaults, profile (named by run.profile in the file or
// in `overrides`), file, FGSSL_<SECTION>_<KEY> environment variables,
// then `overrides`.
ExperimentConfig resolve(const std::filesystem::path& file, const KeyValues& overrides,
                         bool use_environment = true);

// Environment variable name for a key, e.g. train.batch_size ->
// FGSSL_TRAIN_BATCH_SIZE.
std::string env_name(const std::string& key);

// 16 hex digits of FNV-1a over the canonical serialization. Keys that do not
// affect results (output dir, resume path, threads, mismatch override) are
// left out so relocating or resuming a run keeps its identity.
std::string config_hash(const ExperimentConfig& config);

}  // namespace fgssl::config
