#include "fgssl/pmg_network.hpp"

#include <algorithm>
#include <string>

#include "fgssl/errors.hpp"

namespace fgssl::model {

namespace nn = torch::nn;

namespace {

// Appends conv-BN-ReLU to `seq` (nested Sequentials cannot be stored).
void conv_bn_relu(nn::Sequential& seq, int64_t in, int64_t out, int64_t kernel, int64_t stride) {
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(false)));
  seq->push_back(nn::BatchNorm2d(out));
  seq->push_back(nn::ReLU(nn::ReLUOptions(true)));
}

class BottleneckImpl : public nn::Module {
 public:
  BottleneckImpl(int64_t in, int64_t planes, int64_t stride)
      : conv1_(nn::Conv2dOptions(in, planes, 1).bias(false)),
        bn1_(planes),
        conv2_(nn::Conv2dOptions(planes, planes, 3).stride(stride).padding(1).bias(false)),
        bn2_(planes),
        conv3_(nn::Conv2dOptions(planes, planes * 4, 1).bias(false)),
        bn3_(planes * 4) {
    register_module("conv1", conv1_);
    register_module("bn1", bn1_);
    register_module("conv2", conv2_);
    register_module("bn2", bn2_);
    register_module("conv3", conv3_);
    register_module("bn3", bn3_);
    if (stride != 1 || in != planes * 4) {
      downsample_ = register_module(
          "downsample",
          nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, planes * 4, 1).stride(stride).bias(false)),
                         nn::BatchNorm2d(planes * 4)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1_(conv1_(x)));
    out = torch::relu(bn2_(conv2_(out)));
    out = bn3_(conv3_(out));
    auto identity = downsample_ ? downsample_->forward(x) : x;
    return torch::relu(out + identity);
  }

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn1_;
  nn::Conv2d conv2_;
  nn::BatchNorm2d bn2_;
  nn::Conv2d conv3_;
  nn::BatchNorm2d bn3_;
  nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(Bottleneck);

constexpr std::array<int64_t, 5> kResNetChannels{64, 256, 512, 1024, 2048};

}  // namespace

SmallCnnImpl::SmallCnnImpl(SmallCnnOptions options) : options_(std::move(options)) {
  if (options_.channels.empty() || options_.channels.size() != options_.blocks.size()) {
    throw ConfigError("small CNN needs one block count per stage");
  }
  int64_t in = options_.in_channels;
  for (std::size_t s = 0; s < options_.channels.size(); ++s) {
    if (options_.blocks[s] < 1) throw ConfigError("each stage needs at least one conv");
    const int64_t out = options_.channels[s];
    nn::Sequential stage;
    conv_bn_relu(stage, in, out, 3, 2);
    for (int b = 1; b < options_.blocks[s]; ++b) conv_bn_relu(stage, out, out, 3, 1);
    stages_.push_back(register_module("stage" + std::to_string(s + 1), stage));
    in = out;
  }
}

int64_t SmallCnnImpl::stage_channels(int stage) const {
  if (stage < 1 || stage > num_stages()) throw StepError("no backbone stage " + std::to_string(stage));
  return options_.channels[stage - 1];
}

std::vector<torch::Tensor> SmallCnnImpl::forward_stages(const torch::Tensor& x, int last_stage) {
  if (last_stage < 1 || last_stage > num_stages()) {
    throw StepError("no backbone stage " + std::to_string(last_stage));
  }
  std::vector<torch::Tensor> outs;
  auto h = x;
  for (int s = 0; s < last_stage; ++s) {
    h = stages_[s]->forward(h);
    outs.push_back(h);
  }
  return outs;
}

ResNet50Impl::ResNet50Impl(int64_t in_channels) {
  stages_.push_back(register_module(
      "stage1",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, 64, 7).stride(2).padding(3).bias(false)),
                     nn::BatchNorm2d(64), nn::ReLU(nn::ReLUOptions(true)),
                     nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)))));
  constexpr std::array<int, 4> depth{3, 4, 6, 3};
  constexpr std::array<int64_t, 4> planes{64, 128, 256, 512};
  int64_t in = 64;
  for (std::size_t g = 0; g < depth.size(); ++g) {
    nn::Sequential group;
    for (int b = 0; b < depth[g]; ++b) {
      const int64_t stride = (b == 0 && g > 0) ? 2 : 1;
      group->push_back(Bottleneck(in, planes[g], stride));
      in = planes[g] * 4;
    }
    stages_.push_back(register_module("stage" + std::to_string(g + 2), group));
  }
}

int64_t ResNet50Impl::stage_channels(int stage) const {
  if (stage < 1 || stage > 5) throw StepError("no backbone stage " + std::to_string(stage));
  return kResNetChannels[stage - 1];
}

int ResNet50Impl::stage_stride(int stage) const {
  if (stage < 1 || stage > 5) throw StepError("no backbone stage " + std::to_string(stage));
  return stage <= 2 ? 4 : 4 << (stage - 2);
}

std::vector<torch::Tensor> ResNet50Impl::forward_stages(const torch::Tensor& x, int last_stage) {
  if (last_stage < 1 || last_stage > 5) throw StepError("no backbone stage " + std::to_string(last_stage));
  std::vector<torch::Tensor> outs;
  auto h = x;
  for (int s = 0; s < last_stage; ++s) {
    h = stages_[s]->forward(h);
    outs.push_back(h);
  }
  return outs;
}

std::shared_ptr<StagedBackboneImpl> make_backbone(const std::string& name,
                                                  const SmallCnnOptions& small) {
  if (name == "small_cnn") return std::make_shared<SmallCnnImpl>(small);
  if (name == "resnet50") return std::make_shared<ResNet50Impl>(small.in_channels);
  throw ConfigError("unknown backbone '" + name + "' (expected small_cnn or resnet50)");
}

PmgNetworkImpl::PmgNetworkImpl(std::shared_ptr<StagedBackboneImpl> backbone, PmgOptions options)
    : options_(std::move(options)), backbone_(std::move(backbone)) {
  if (!backbone_) throw ConfigError("PMG network needs a backbone");
  if (options_.stage_indices.empty()) throw ConfigError("at least one backbone stage must be exposed");
  if (!std::is_sorted(options_.stage_indices.begin(), options_.stage_indices.end()) ||
      std::adjacent_find(options_.stage_indices.begin(), options_.stage_indices.end()) !=
          options_.stage_indices.end()) {
    throw ConfigError("exposed stages must be strictly increasing");
  }
  for (int s : options_.stage_indices) {
    if (s < 1 || s > backbone_->num_stages()) {
      throw ConfigError("exposed stage " + std::to_string(s) + " does not exist in the backbone");
    }
  }
  if (options_.head_width < 2 || options_.projector_dim < 2 || options_.projector_hidden < 1) {
    throw ConfigError("head width and projector dimension must be >= 2");
  }
  if (static_cast<int>(options_.label_sizes.size()) != num_steps()) {
    throw ConfigError("need one label-space size per progressive step (" +
                      std::to_string(num_steps()) + ")");
  }
  register_module("backbone", backbone_);

  const int64_t half = std::max<int64_t>(1, options_.head_width / 2);
  for (int s : options_.stage_indices) {
    nn::Sequential head;
    conv_bn_relu(head, backbone_->stage_channels(s), half, 1, 1);
    conv_bn_relu(head, half, options_.head_width, 3, 1);
    conv_heads_->push_back(head);
  }
  for (int step = 1; step <= num_steps(); ++step) {
    projectors_->push_back(nn::Sequential(
        nn::Linear(nn::LinearOptions(step_input_width(step), options_.projector_hidden).bias(false)),
        nn::BatchNorm1d(options_.projector_hidden), nn::ReLU(nn::ReLUOptions(true)),
        nn::Linear(options_.projector_hidden, options_.projector_dim)));
  }
  register_module("conv_heads", conv_heads_);
  register_module("projectors", projectors_);
  reset_classifiers(options_.label_sizes);
}

int64_t PmgNetworkImpl::step_input_width(int step) const {
  return step == num_steps() ? options_.head_width * static_cast<int64_t>(options_.stage_indices.size())
                             : options_.head_width;
}

void PmgNetworkImpl::check_step(int step) const {
  if (step < 1 || step > num_steps()) {
    throw StepError("step " + std::to_string(step) + " outside [1, " + std::to_string(num_steps()) + "]");
  }
}

void PmgNetworkImpl::reset_classifiers(const std::vector<int64_t>& label_sizes, bool zero_init) {
  if (static_cast<int>(label_sizes.size()) != num_steps()) {
    throw ConfigError("need one label-space size per progressive step");
  }
  nn::ModuleList heads;
  for (int step = 1; step <= num_steps(); ++step) {
    if (label_sizes[step - 1] < 1) throw ConfigError("label space must be non-empty");
    nn::Linear head(step_input_width(step), label_sizes[step - 1]);
    if (zero_init) {
      torch::NoGradGuard guard;
      head->weight.zero_();
      head->bias.zero_();
    }
    heads->push_back(head);
  }
  options_.label_sizes = label_sizes;
  classifiers_ = named_children().contains("classifiers") ? replace_module("classifiers", heads)
                                                           : register_module("classifiers", heads);
}

torch::Tensor PmgNetworkImpl::head_vector(int head, const torch::Tensor& stage_map) {
  auto map = conv_heads_[head]->as<nn::Sequential>()->forward(stage_map);
  return std::get<0>(map.flatten(2).max(2));
}

StageFeatureSet PmgNetworkImpl::extract_stage_features(const torch::Tensor& x, int step) {
  check_step(step);
  StageFeatureSet out;
  out.step = step;
  if (step < num_steps()) {
    auto maps = backbone_->forward_stages(x, options_.stage_indices[step - 1]);
    out.stage_vectors.push_back(head_vector(step - 1, maps.back()));
    out.features = out.stage_vectors.back();
    return out;
  }
  auto maps = backbone_->forward_stages(x, options_.stage_indices.back());
  for (std::size_t h = 0; h < options_.stage_indices.size(); ++h) {
    out.stage_vectors.push_back(head_vector(static_cast<int>(h), maps[options_.stage_indices[h] - 1]));
  }
  out.features = torch::cat(out.stage_vectors, 1);
  return out;
}

std::vector<StageFeatureSet> PmgNetworkImpl::extract_all_steps(const torch::Tensor& x) {
  auto maps = backbone_->forward_stages(x, options_.stage_indices.back());
  std::vector<torch::Tensor> vectors;
  for (std::size_t h = 0; h < options_.stage_indices.size(); ++h) {
    vectors.push_back(head_vector(static_cast<int>(h), maps[options_.stage_indices[h] - 1]));
  }
  std::vector<StageFeatureSet> out;
  for (int step = 1; step < num_steps(); ++step) {
    out.push_back({step, {vectors[step - 1]}, vectors[step - 1]});
  }
  out.push_back({num_steps(), vectors, torch::cat(vectors, 1)});
  return out;
}

torch::Tensor PmgNetworkImpl::classify_step(const StageFeatureSet& features, int step) {
  check_step(step);
  if (features.step != step || features.features.dim() != 2 ||
      features.features.size(1) != step_input_width(step)) {
    throw ShapeError("features for step " + std::to_string(features.step) +
                     " do not fit the step " + std::to_string(step) + " classifier");
  }
  return classifiers_[step - 1]->as<nn::Linear>()->forward(features.features);
}

torch::Tensor PmgNetworkImpl::project(const StageFeatureSet& features, int step) {
  check_step(step);
  if (features.step != step || features.features.dim() != 2 ||
      features.features.size(1) != step_input_width(step)) {
    throw ShapeError("features for step " + std::to_string(features.step) +
                     " do not fit the step " + std::to_string(step) + " projector");
  }
  return projectors_[step - 1]->as<nn::Sequential>()->forward(features.features);
}

PmgNetworkImpl::StageTrace PmgNetworkImpl::trace(const torch::Tensor& x) {
  StageTrace out;
  out.stage_maps = backbone_->forward_stages(x, backbone_->num_stages());
  for (auto& m : out.stage_maps) {
    if (m.requires_grad()) m.retain_grad();
  }
  std::vector<torch::Tensor> vectors;
  for (std::size_t h = 0; h < options_.stage_indices.size(); ++h) {
    vectors.push_back(head_vector(static_cast<int>(h), out.stage_maps[options_.stage_indices[h] - 1]));
  }
  for (int step = 1; step < num_steps(); ++step) {
    out.logits.push_back(classify_step({step, {vectors[step - 1]}, vectors[step - 1]}, step));
  }
  out.logits.push_back(classify_step({num_steps(), vectors, torch::cat(vectors, 1)}, num_steps()));
  return out;
}

std::vector<torch::Tensor> PmgNetworkImpl::decay_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : parameters()) {
    if (p.dim() > 1) out.push_back(p);
  }
  return out;
}

std::vector<torch::Tensor> PmgNetworkImpl::no_decay_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : parameters()) {
    if (p.dim() <= 1) out.push_back(p);
  }
  return out;
}

int step_granularity(const std::vector<int>& schedule, int steps, int step) {
  if (static_cast<int>(schedule.size()) != steps) {
    throw ConfigError("granularity schedule has " + std::to_string(schedule.size()) +
                      " entries but the network has " + std::to_string(steps) + " steps");
  }
  if (step < 1 || step > steps) throw StepError("step " + std::to_string(step) + " out of range");
  return schedule[step - 1];
}

torch::Tensor images_to_tensor(std::span<const ImageTensor> images, const std::array<float, 3>& mean,
                               const std::array<float, 3>& stddev) {
  if (images.empty()) throw ShapeError("empty image batch");
  const int h = images.front().height();
  const int w = images.front().width();
  const int c = images.front().channels();
  if (c > 3) throw ShapeError("at most 3 channels supported");
  auto out = torch::empty({static_cast<int64_t>(images.size()), c, h, w}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = images[n];
    if (img.height() != h || img.width() != w || img.channels() != c) {
      throw ShapeError("images in a batch must share one shape");
    }
    const auto src = img.data();
    float* base = dst + n * plane * c;
    for (int k = 0; k < c; ++k) {
      const float m = mean[k];
      const float inv = 1.0f / stddev[k];
      float* chan = base + k * plane;
      for (std::size_t i = 0; i < plane; ++i) chan[i] = (src[i * c + k] - m) * inv;
    }
  }
  return out;
}

double parameter_checksum(const torch::nn::Module& module) {
  torch::NoGradGuard guard;
  double sum = 0.0;
  for (const auto& p : module.parameters()) sum += p.to(torch::kDouble).abs().sum().item<double>() + p.numel();
  for (const auto& b : module.buffers()) {
    if (b.is_floating_point()) sum += b.to(torch::kDouble).abs().sum().item<double>();
  }
  return sum;
}

}  // namespace fgssl::model
