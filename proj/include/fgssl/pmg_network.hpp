#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fgssl/image.hpp"

namespace fgssl::model {

// Convolutional feature extractor split into numbered stages (1-based).
class StagedBackboneImpl : public torch::nn::Module {
 public:
  virtual int num_stages() const = 0;
  virtual int64_t stage_channels(int stage) const = 0;
  // Total downsampling factor of a stage's output relative to the input.
  virtual int stage_stride(int stage) const = 0;
  // Outputs of stages 1..last_stage, in order. Later stages are not run.
  virtual std::vector<torch::Tensor> forward_stages(const torch::Tensor& x, int last_stage) = 0;
};

// Desk-scale CNN: each stage halves resolution with a strided 3x3 conv and
// then applies `blocks[i] - 1` further 3x3 convs, all conv-BN-ReLU.
struct SmallCnnOptions {
  int64_t in_channels = 3;
  std::vector<int64_t> channels{16, 32, 64, 128};
  std::vector<int> blocks{1, 2, 2, 2};
};

class SmallCnnImpl : public StagedBackboneImpl {
 public:
  explicit SmallCnnImpl(SmallCnnOptions options = {});
  int num_stages() const override { return static_cast<int>(stages_.size()); }
  int64_t stage_channels(int stage) const override;
  int stage_stride(int stage) const override { return 1 << stage; }
  std::vector<torch::Tensor> forward_stages(const torch::Tensor& x, int last_stage) override;

 private:
  SmallCnnOptions options_;
  std::vector<torch::nn::Sequential> stages_;
};

// 50-layer bottleneck residual network. Stage 1 is the stem (7x7 conv +
// max pool); stages 2..5 are the four residual groups.
class ResNet50Impl : public StagedBackboneImpl {
 public:
  explicit ResNet50Impl(int64_t in_channels = 3);
  int num_stages() const override { return 5; }
  int64_t stage_channels(int stage) const override;
  int stage_stride(int stage) const override;
  std::vector<torch::Tensor> forward_stages(const torch::Tensor& x, int last_stage) override;

 private:
  std::vector<torch::nn::Sequential> stages_;
};

std::shared_ptr<StagedBackboneImpl> make_backbone(const std::string& name,
                                                  const SmallCnnOptions& small = {});

struct PmgOptions {
  // Backbone stages feeding progressive steps 1..S-1; step S concatenates them.
  std::vector<int> stage_indices{2, 3, 4};
  int64_t head_width = 512;
  int64_t projector_hidden = 512;
  int64_t projector_dim = 512;
  // Label-space size per step (pool sizes when pretraining, class count when
  // fine-tuning). Must have S entries.
  std::vector<int64_t> label_sizes{1, 1, 1, 1};
};

// Per-step features: pooled conv-head vectors for each stage run so far and
// the vector the step's heads consume (one stage vector, or the
// concatenation of all of them at the final step).
struct StageFeatureSet {
  int step = 0;
  std::vector<torch::Tensor> stage_vectors;
  torch::Tensor features;
};

class PmgNetworkImpl : public torch::nn::Module {
 public:
  PmgNetworkImpl(std::shared_ptr<StagedBackboneImpl> backbone, PmgOptions options);

  int num_steps() const { return static_cast<int>(options_.stage_indices.size()) + 1; }
  const PmgOptions& options() const { return options_; }
  StagedBackboneImpl& backbone() { return *backbone_; }

  // Throws StepError unless 1 <= step <= S. Steps before S only run the
  // backbone up to their own stage.
  StageFeatureSet extract_stage_features(const torch::Tensor& x, int step);
  // All S steps from a single backbone pass.
  std::vector<StageFeatureSet> extract_all_steps(const torch::Tensor& x);
  // H^l logits for the step. ShapeError on dimension mismatch.
  torch::Tensor classify_step(const StageFeatureSet& features, int step);
  // Projector embedding (B x D) for the step.
  torch::Tensor project(const StageFeatureSet& features, int step);

  // Replaces all classifier heads, e.g. when switching from pretraining to
  // fine-tuning. zero_init gives a uniform softmax.
  void reset_classifiers(const std::vector<int64_t>& label_sizes, bool zero_init = false);

  // Backbone stage maps (1..num_stages) plus the per-step logits computed
  // from them, for attribution.
  struct StageTrace {
    std::vector<torch::Tensor> stage_maps;
    std::vector<torch::Tensor> logits;
  };
  StageTrace trace(const torch::Tensor& x);

  // Parameters split for weight decay: vectors (biases, norm affine) are
  // excluded.
  std::vector<torch::Tensor> decay_parameters() const;
  std::vector<torch::Tensor> no_decay_parameters() const;

 private:
  void check_step(int step) const;
  torch::Tensor head_vector(int head, const torch::Tensor& stage_map);
  int64_t step_input_width(int step) const;

  PmgOptions options_;
  std::shared_ptr<StagedBackboneImpl> backbone_;
  torch::nn::ModuleList conv_heads_;
  torch::nn::ModuleList projectors_;
  torch::nn::ModuleList classifiers_;
};
TORCH_MODULE(PmgNetwork);

// Granularity for a step from the progressive schedule. The schedule must
// have exactly `steps` entries (ConfigError otherwise).
int step_granularity(const std::vector<int>& schedule, int steps, int step);

// Stacks images into an N x C x H x W float tensor, normalizing per channel.
torch::Tensor images_to_tensor(std::span<const ImageTensor> images,
                               const std::array<float, 3>& mean,
                               const std::array<float, 3>& stddev);

// Order-independent fingerprint of all parameters and buffers.
double parameter_checksum(const torch::nn::Module& module);

}  // namespace fgssl::model
