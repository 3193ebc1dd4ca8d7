#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fgssl/augmentation.hpp"
#include "fgssl/image.hpp"
#include "fgssl/jigsaw.hpp"
#include "fgssl/pmg_network.hpp"
#include "fgssl/rng.hpp"

namespace fgssl::train {

enum class Mode { Pretrain, Finetune };
std::string to_string(Mode mode);
Mode parse_mode(const std::string& s);

struct TrainConfig {
  int batch_size = 256;
  int epochs = 1000;
  double lr_init = 0.002;
  double momentum = 0.9;
  double weight_decay = 0.001;
  std::vector<int> granularity_schedule{8, 4, 2, 1};
  double lambda = 5e-3;
  double beta = 1.0;
  int64_t projector_dim = 512;
  int pool_size = 64;
  std::uint64_t seed = 0;
  Mode mode = Mode::Pretrain;

  // Pretraining ablation axes: jigsaw puzzles, progressive steps, Barlow term.
  bool use_jigsaw = true;
  bool progressive = true;
  bool use_barlow = true;
  // Grid used by the single (concatenated) step when progressive is off.
  int single_level_granularity = 4;

  // Fine-tuning: progressive jigsaw steps (off = plain single-head CE on the
  // final step) and horizontal flip probability.
  bool finetune_progressive = true;
  double finetune_flip = 0.5;

  // Throws ConfigError on non-positive values or a schedule whose length
  // differs from the network's step count.
  void validate(int steps) const;
};

// Per-step label-space sizes for pretraining: the permutation-pool size at
// each step's granularity (1 when the jigsaw task is off or the step is
// skipped).
std::vector<int64_t> pretrain_label_sizes(const TrainConfig& config, int steps);

// lr_init * (1 + cos(pi * epoch / epochs)) / 2.
double cosine_lr(int epoch, int epochs, double lr_init);

struct StepLoss {
  int step = 0;
  int granularity = 1;
  double total = 0.0;
  std::optional<double> barlow;
  std::optional<double> order;
};

struct BatchResult {
  std::vector<StepLoss> steps;
  int updates = 0;
};

struct EpochStats {
  int epoch = 0;  // 0-based index of the finished epoch
  double lr = 0.0;
  std::vector<StepLoss> steps;  // per-step means over the epoch's batches
  double seconds = 0.0;
};

struct TrainState {
  int epoch = 0;              // completed epochs
  std::int64_t global_step = 0;  // optimizer updates so far
  double best_metric = 0.0;
  Rng rng{0};
};

// Progressive trainer owning the optimizer for one network.
class Trainer {
 public:
  Trainer(model::PmgNetwork net, TrainConfig config, augment::AugmentationPolicy policy,
          std::array<float, 3> mean, std::array<float, 3> stddev);

  const TrainConfig& config() const { return config_; }
  model::PmgNetwork& network() { return net_; }
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }
  torch::optim::SGD& optimizer() { return *optimizer_; }
  const jigsaw::PermutationPool& pool(int granularity) const;
  const std::array<float, 3>& mean() const { return mean_; }
  const std::array<float, 3>& stddev() const { return stddev_; }

  void set_lr(double lr);

  // One batch of progressive pretraining: per step, a distorted view and a
  // jigsaw view of every image go through shared weights up to that step;
  // each step's loss gets its own backward pass and optimizer update.
  BatchResult pretrain_batch(std::span<const ImageTensor> images, Rng& rng);
  // One batch of progressive fine-tuning with cross-entropy per step.
  BatchResult finetune_batch(std::span<const ImageTensor> images, std::span<const int> labels, Rng& rng);

  // Single progressive step. With update=false nothing is trained and no
  // graph is built; the network stays in training mode so batch statistics
  // match what an update would see.
  StepLoss pretrain_step(std::span<const ImageTensor> images, int step, Rng& rng, bool update = true);
  StepLoss finetune_step(std::span<const ImageTensor> images, std::span<const int> labels, int step,
                         Rng& rng, bool update = true);

  // Full pass over the data in a (seed, epoch)-determined order with the
  // cosine learning rate for `state().epoch`. Labels are required when
  // fine-tuning.
  EpochStats train_epoch(const std::vector<ImageTensor>& images, const std::vector<int>* labels = nullptr);

  // Steps run per batch: 1..S when progressive, otherwise only S.
  std::vector<int> active_steps() const;

 private:
  void apply_update(const torch::Tensor& loss, int step);
  int step_grid(int step) const;

  model::PmgNetwork net_;
  TrainConfig config_;
  augment::AugmentationPolicy policy_;
  std::array<float, 3> mean_;
  std::array<float, 3> stddev_;
  std::map<int, jigsaw::PermutationPool> pools_;
  std::unique_ptr<torch::optim::SGD> optimizer_;
  TrainState state_;
};

// Softmax of the summed step logits on unshuffled images (N x m, row-major).
std::vector<double> predict_proba(model::PmgNetwork& net, const std::vector<ImageTensor>& images,
                                  const std::array<float, 3>& mean, const std::array<float, 3>& stddev,
                                  int batch_size = 64);
std::vector<double> predict(model::PmgNetwork& net, const ImageTensor& image,
                            const std::array<float, 3>& mean, const std::array<float, 3>& stddev);
// Argmax per row; ties go to the lowest class index.
std::vector<int> argmax_rows(std::span<const double> probabilities, int num_classes);

// ---- checkpoints ----

struct CheckpointMeta {
  std::string config_hash;
  Mode mode = Mode::Pretrain;
  int epoch = 0;
  std::int64_t global_step = 0;
  double best_metric = 0.0;
  std::string backbone;
  int64_t head_width = 0;
  int64_t projector_dim = 0;
  std::vector<int64_t> label_sizes;
  std::array<float, 3> mean{};
  std::array<float, 3> stddev{};
};

// Parameters and buffers keyed by module path, optimizer state, RNG states,
// config hash and counters in one archive.
void save_checkpoint(Trainer& trainer, const std::string& config_hash, const std::string& backbone,
                     const std::filesystem::path& path);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

// Restores the full training state. A config-hash mismatch throws
// ConfigMismatchError unless allow_config_mismatch; a corrupt archive throws
// CheckpointError.
CheckpointMeta load_checkpoint(Trainer& trainer, const std::string& config_hash,
                               const std::filesystem::path& path, bool allow_config_mismatch = false);

// Initializes a network from a checkpoint's backbone, conv heads and
// projectors; classifier heads are left untouched (re-initialized by the
// caller). Projector or head-width mismatch throws ConfigMismatchError.
CheckpointMeta load_pretrained_weights(model::PmgNetwork& net, const std::filesystem::path& path);
// Loads every parameter and buffer, classifiers included (for evaluation).
CheckpointMeta load_network_weights(model::PmgNetwork& net, const std::filesystem::path& path);

// ---- metrics log ----

// Appends one JSON object per line.
class MetricsLog {
 public:
  explicit MetricsLog(const std::filesystem::path& path, bool append = false);
  void write(const EpochStats& stats, std::optional<double> train_accuracy = std::nullopt);

 private:
  std::ofstream out_;
};

}  // namespace fgssl::train
