#include "fgssl/runtime.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iostream>

#include "fgssl/augmentation.hpp"
#include "fgssl/errors.hpp"
#include "fgssl/grad_cam.hpp"
#include "fgssl/train_engine.hpp"

#ifndef FGSSL_CODE_VERSION
#define FGSSL_CODE_VERSION "unknown"
#endif

namespace fgssl::runtime {

namespace fs = std::filesystem;

std::string code_version() { return FGSSL_CODE_VERSION; }

RunDirectory::RunDirectory(const fs::path& root) : root_(root), lock_(root / ".lock") {
  fs::create_directories(root_);
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw RunLockedError("output directory " + root_.string() +
                           " is in use by another run (remove .lock if that run died)");
    }
    throw Error("cannot create lock file " + lock_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunDirectory::~RunDirectory() {
  std::error_code ec;
  fs::remove(lock_, ec);
}

void RunDirectory::describe(const config::ExperimentConfig& config) const {
  std::ofstream(root_ / "config.ini") << config::to_ini(config);
  std::ofstream(root_ / "config_hash") << config::config_hash(config) << '\n';
  std::ofstream(root_ / "code_version") << code_version() << '\n';
}

LoadedImages load_images(const data::DatasetManifest& manifest, int resize, int crop) {
  LoadedImages out;
  out.manifest = manifest;
  for (const auto& r : manifest.records) {
    auto img = read_image(manifest.root / r.path);
    if (img.height() != crop || img.width() != crop) img = augment::resize_center_crop(img, resize, crop);
    out.images.push_back(std::move(img));
    out.labels.push_back(r.label);
  }
  return out;
}

model::PmgNetwork make_network(const config::ExperimentConfig& config, const std::vector<int64_t>& label_sizes) {
  auto options = config.pmg;
  options.label_sizes = label_sizes;
  options.projector_dim = config.train.projector_dim;
  return model::PmgNetwork(model::make_backbone(config.backbone, config.small_cnn), options);
}

namespace {

void set_threads(const config::ExperimentConfig& config) {
  if (config.threads > 0) torch::set_num_threads(config.threads);
}

data::DatasetManifest require_manifest(const fs::path& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " is not set");
  if (!fs::exists(path)) throw UsageError(what + " " + path.string() + " does not exist");
  return data::load_manifest(path);
}

data::ChannelStats stats_for(const LoadedImages& data) {
  return data.manifest.stats ? *data.manifest.stats : data::compute_stats(data.images);
}

fs::path checkpoint_name(const RunDirectory& run, int epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04d.pt", epoch);
  return run.checkpoints() / name;
}

// Shared epoch loop for both modes. Checkpoints every `checkpoint_every`
// epochs and at the end; a NumericsError leaves a state dump behind.
void run_epochs(train::Trainer& trainer, const config::ExperimentConfig& config, const RunDirectory& run,
                const LoadedImages& data) {
  const std::string hash = config::config_hash(config);
  const bool finetune = config.train.mode == train::Mode::Finetune;
  train::MetricsLog log(run.metrics(), /*append=*/!config.resume.empty());
  while (trainer.state().epoch < config.train.epochs) {
    train::EpochStats stats;
    try {
      stats = trainer.train_epoch(data.images, finetune ? &data.labels : nullptr);
    } catch (const NumericsError&) {
      train::save_checkpoint(trainer, hash, config.backbone, run.checkpoints() / "numerics_dump.pt");
      throw;
    }
    log.write(stats);
    const int done = trainer.state().epoch;
    if (done % config.checkpoint_every == 0 || done == config.train.epochs) {
      train::save_checkpoint(trainer, hash, config.backbone, checkpoint_name(run, done));
    }
  }
  train::save_checkpoint(trainer, hash, config.backbone, run.checkpoints() / "final.pt");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

fs::path cmd_pretrain(const config::ExperimentConfig& config_in) {
  auto config = config_in;
  config.train.mode = train::Mode::Pretrain;
  config.validate();
  set_threads(config);
  const auto manifest = require_manifest(config.manifest, "data.manifest");
  const auto data = load_images(manifest, config.image_size, config.image_size);
  const auto stats = stats_for(data);

  RunDirectory run(config.output_dir);
  run.describe(config);
  torch::manual_seed(config.train.seed);
  const int steps = static_cast<int>(config.pmg.stage_indices.size()) + 1;
  auto net = make_network(config, train::pretrain_label_sizes(config.train, steps));
  train::Trainer trainer(net, config.train, config.augment, stats.mean, stats.stddev);
  if (!config.resume.empty()) {
    train::load_checkpoint(trainer, config::config_hash(config), config.resume, config.allow_config_mismatch);
  }
  run_epochs(trainer, config, run, data);
  return run.root();
}

fs::path cmd_finetune(const config::ExperimentConfig& config_in) {
  auto config = config_in;
  config.train.mode = train::Mode::Finetune;
  config.validate();
  set_threads(config);
  const auto manifest = require_manifest(config.manifest, "data.manifest");
  const auto data = load_images(manifest, config.image_size, config.image_size);
  const auto stats = stats_for(data);
  if (!config.init_checkpoint.empty() && !fs::exists(config.init_checkpoint)) {
    throw UsageError("train.init_checkpoint " + config.init_checkpoint.string() + " does not exist");
  }

  RunDirectory run(config.output_dir);
  run.describe(config);
  torch::manual_seed(config.train.seed);
  const int steps = static_cast<int>(config.pmg.stage_indices.size()) + 1;
  auto net = make_network(config, std::vector<int64_t>(steps, manifest.num_classes()));
  if (!config.init_checkpoint.empty()) train::load_pretrained_weights(net, config.init_checkpoint);
  train::Trainer trainer(net, config.train, config.augment, stats.mean, stats.stddev);
  if (!config.resume.empty()) {
    train::load_checkpoint(trainer, config::config_hash(config), config.resume, config.allow_config_mismatch);
  }
  run_epochs(trainer, config, run, data);

  if (!config.test_manifest.empty()) {
    cmd_evaluate(config, run.checkpoints() / "final.pt", config.test_manifest, run.root() / "eval_report.json");
  }
  return run.root();
}

eval::EvalReport cmd_evaluate(const config::ExperimentConfig& config, const fs::path& checkpoint,
                              const fs::path& manifest_path, const std::optional<fs::path>& output) {
  if (checkpoint.empty() || !fs::exists(checkpoint)) {
    throw UsageError("checkpoint " + checkpoint.string() + " does not exist");
  }
  const auto manifest = require_manifest(manifest_path, "manifest");
  set_threads(config);
  const auto meta = train::read_checkpoint_meta(checkpoint);
  if (meta.mode != train::Mode::Finetune) {
    throw ConfigMismatchError("checkpoint " + checkpoint.string() + " is not a fine-tuned model");
  }
  auto net = make_network(config, meta.label_sizes);
  train::load_network_weights(net, checkpoint);
  const int num_classes = static_cast<int>(meta.label_sizes.back());
  if (manifest.num_classes() != num_classes) {
    throw ConfigMismatchError("manifest has " + std::to_string(manifest.num_classes()) +
                              " classes; the checkpoint predicts " + std::to_string(num_classes));
  }
  const auto data = load_images(manifest, config.eval_resize, config.eval_crop);
  const auto probs = train::predict_proba(net, data.images, meta.mean, meta.stddev, config.eval_batch);
  auto report = eval::make_report(probs, data.labels, num_classes);
  report.config_hash = meta.config_hash;
  report.dataset_id = manifest.dataset_id;
  if (output) write_json(*output, report.to_json());
  return report;
}

std::vector<fs::path> cmd_gradcam(const config::ExperimentConfig& config, const GradcamRequest& request) {
  if (request.checkpoint.empty() || !fs::exists(request.checkpoint)) {
    throw UsageError("checkpoint " + request.checkpoint.string() + " does not exist");
  }
  if (request.images.empty()) throw UsageError("no images given");
  if (request.baseline_checkpoint && !fs::exists(*request.baseline_checkpoint)) {
    throw UsageError("baseline checkpoint " + request.baseline_checkpoint->string() + " does not exist");
  }
  set_threads(config);
  auto load = [&](const fs::path& path) {
    const auto meta = train::read_checkpoint_meta(path);
    auto net = make_network(config, meta.label_sizes);
    train::load_network_weights(net, path);
    return std::pair{net, meta};
  };
  auto [net, meta] = load(request.checkpoint);
  std::optional<std::pair<model::PmgNetwork, train::CheckpointMeta>> baseline;
  if (request.baseline_checkpoint) baseline = load(*request.baseline_checkpoint);

  std::vector<int> stages = request.stages.empty() ? config.gradcam_stages : request.stages;
  if (stages.empty()) {
    for (int s = 1; s <= net->backbone().num_stages(); ++s) stages.push_back(s);
  }

  fs::create_directories(config.output_dir);
  std::vector<fs::path> written;
  int failures = 0;
  for (const auto& path : request.images) {
    ImageTensor img;
    try {
      img = augment::resize_center_crop(read_image(path), config.eval_resize, config.eval_crop);
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << path.string() << ": " << e.what() << '\n';
      ++failures;
      continue;
    }
    auto maps_for = [&](model::PmgNetwork& model, const train::CheckpointMeta& m) {
      const auto probs = train::predict(model, img, m.mean, m.stddev);
      const int target = train::argmax_rows(probs, static_cast<int>(probs.size())).front();
      std::vector<ImageTensor> panels;
      for (const auto& h : eval::grad_cam_layers(model, img, target, stages, m.mean, m.stddev)) {
        panels.push_back(eval::overlay(img, h, static_cast<float>(config.gradcam_alpha)));
      }
      return panels;
    };
    const auto panels = maps_for(net, meta);
    const std::string stem = path.stem().string();
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto out = config.output_dir / (stem + "_layer" + std::to_string(stages[i]) + ".png");
      write_png(out, panels[i]);
      written.push_back(out);
    }
    if (baseline) {
      auto row = maps_for(baseline->first, baseline->second);
      row.insert(row.end(), panels.begin(), panels.end());
      const auto out = config.output_dir / (stem + "_compare.png");
      write_png(out, eval::tile_row(row));
      written.push_back(out);
    }
  }
  if (failures == static_cast<int>(request.images.size())) throw InputError("no image could be processed");
  return written;
}

fs::path cmd_synth_data(const config::ExperimentConfig& config) {
  data::SyntheticSpec spec;
  spec.num_classes = config.synth_classes;
  spec.per_class = config.synth_per_class;
  spec.image_size = config.synth_size;
  spec.seed = config.synth_seed;
  const auto train_dir = config.synth_test_per_class > 0 ? config.output_dir / "train" : config.output_dir;
  data::write_synthetic_dataset(data::synth_dataset(spec), spec, train_dir);
  if (config.synth_test_per_class > 0) {
    auto test_spec = spec;
    test_spec.per_class = config.synth_test_per_class;
    test_spec.seed = spec.seed + 1000003;  // disjoint stream from the training images
    data::write_synthetic_dataset(data::synth_dataset(test_spec), test_spec, config.output_dir / "test");
  }
  return config.output_dir;
}

fs::path cmd_split(const config::ExperimentConfig& config) {
  const auto manifest = require_manifest(config.manifest, "data.manifest");
  data::SplitSpec spec;
  spec.train_fraction = config.split_fraction;
  spec.seed = config.train.seed;
  spec.stratified = config.stratified;
  auto [train_part, test_part] = data::stratified_split(manifest, spec);
  fs::create_directories(config.output_dir);
  // Paths stay relative to the source directory so the images are not copied.
  const auto root = fs::absolute(manifest.root);
  for (auto* part : {&train_part, &test_part}) {
    for (auto& r : part->records) r.path = (root / r.path).string();
  }
  data::write_manifest(train_part, config.output_dir / "train.csv");
  data::write_manifest(test_part, config.output_dir / "test.csv");
  data::write_dataset_sidecar(manifest, config.output_dir);
  if (manifest.stats) data::write_stats(*manifest.stats, config.output_dir);
  return config.output_dir;
}

}  // namespace fgssl::runtime
