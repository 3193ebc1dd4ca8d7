#include "fgssl/train_engine.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "fgssl/errors.hpp"
#include "fgssl/ssl_objectives.hpp"

namespace fgssl::train {

namespace {

constexpr std::uint64_t kStreamOrder = 1;
constexpr std::uint64_t kStreamBatch = 2;

torch::Tensor to_label_tensor(std::span<const int> labels) {
  auto t = torch::empty({static_cast<int64_t>(labels.size())}, torch::kLong);
  auto* p = t.data_ptr<int64_t>();
  for (std::size_t i = 0; i < labels.size(); ++i) p[i] = labels[i];
  return t;
}

void check_finite(const torch::Tensor& loss, int step) {
  if (!std::isfinite(loss.item<double>())) throw NumericsError("non-finite loss", step);
}

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::Pretrain ? "pretrain" : "finetune"; }

Mode parse_mode(const std::string& s) {
  if (s == "pretrain") return Mode::Pretrain;
  if (s == "finetune") return Mode::Finetune;
  throw ConfigError("mode must be pretrain or finetune, got '" + s + "'");
}

void TrainConfig::validate(int steps) const {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch statistics)");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (!(lr_init > 0) || momentum < 0 || weight_decay < 0) {
    throw ConfigError("lr_init must be positive; momentum and weight_decay non-negative");
  }
  if (!(lambda > 0) || beta < 0) throw ConfigError("lambda must be positive and beta non-negative");
  if (projector_dim < 2) throw ConfigError("projector_dim must be >= 2");
  if (pool_size < 1) throw ConfigError("pool_size must be positive");
  if (static_cast<int>(granularity_schedule.size()) != steps) {
    throw ConfigError("granularity schedule has " + std::to_string(granularity_schedule.size()) +
                      " entries; the network has " + std::to_string(steps) + " progressive steps");
  }
  for (int g : granularity_schedule) {
    if (g < 1) throw ConfigError("granularities must be positive");
  }
  if (single_level_granularity < 1) throw ConfigError("single_level_granularity must be positive");
  if (mode == Mode::Pretrain && !use_barlow && !use_jigsaw) {
    throw ConfigError("pretraining needs the jigsaw or the Barlow term enabled");
  }
  if (finetune_flip < 0 || finetune_flip > 1) throw ConfigError("finetune flip probability must be in [0,1]");
}

std::vector<int64_t> pretrain_label_sizes(const TrainConfig& config, int steps) {
  std::vector<int64_t> sizes(steps, 1);
  if (!config.use_jigsaw) return sizes;
  for (int step = 1; step <= steps; ++step) {
    if (!config.progressive && step != steps) continue;
    const int n = config.progressive ? config.granularity_schedule.at(step - 1) : config.single_level_granularity;
    sizes[step - 1] = static_cast<int64_t>(
        std::min<std::uint64_t>(static_cast<std::uint64_t>(config.pool_size), jigsaw::permutation_count(n)));
  }
  return sizes;
}

double cosine_lr(int epoch, int epochs, double lr_init) {
  if (epochs <= 0 || epoch < 0 || epoch > epochs) throw ConfigError("epoch outside [0, epochs]");
  return lr_init * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / epochs));
}

Trainer::Trainer(model::PmgNetwork net, TrainConfig config, augment::AugmentationPolicy policy,
                 std::array<float, 3> mean, std::array<float, 3> stddev)
    : net_(std::move(net)), config_(std::move(config)), policy_(policy), mean_(mean), stddev_(stddev) {
  config_.validate(net_->num_steps());
  policy_.validate();
  state_.rng = derive_rng(config_.seed, {0});

  if (config_.mode == Mode::Pretrain && config_.use_jigsaw) {
    std::vector<int> grids = config_.progressive ? config_.granularity_schedule
                                                 : std::vector<int>{config_.single_level_granularity};
    for (int n : grids) {
      if (pools_.contains(n)) continue;
      const auto cap = jigsaw::permutation_count(n);
      const int size = static_cast<int>(std::min<std::uint64_t>(config_.pool_size, cap));
      pools_.emplace(n, jigsaw::build_permutation_pool(n, size, config_.seed * 1000003ULL + n));
    }
  }

  std::vector<torch::optim::OptimizerParamGroup> groups;
  auto decay = std::make_unique<torch::optim::SGDOptions>(config_.lr_init);
  decay->momentum(config_.momentum).weight_decay(config_.weight_decay);
  auto no_decay = std::make_unique<torch::optim::SGDOptions>(config_.lr_init);
  no_decay->momentum(config_.momentum).weight_decay(0.0);
  groups.emplace_back(net_->decay_parameters(), std::move(decay));
  groups.emplace_back(net_->no_decay_parameters(), std::move(no_decay));
  optimizer_ = std::make_unique<torch::optim::SGD>(
      std::move(groups), torch::optim::SGDOptions(config_.lr_init).momentum(config_.momentum));
}

const jigsaw::PermutationPool& Trainer::pool(int granularity) const {
  const auto it = pools_.find(granularity);
  if (it == pools_.end()) throw ConfigError("no permutation pool for granularity " + std::to_string(granularity));
  return it->second;
}

std::vector<int> Trainer::active_steps() const {
  const bool progressive = config_.mode == Mode::Pretrain ? config_.progressive : config_.finetune_progressive;
  if (!progressive) return {net_->num_steps()};
  std::vector<int> steps(net_->num_steps());
  std::iota(steps.begin(), steps.end(), 1);
  return steps;
}

int Trainer::step_grid(int step) const {
  if (config_.mode == Mode::Pretrain && !config_.progressive) return config_.single_level_granularity;
  return model::step_granularity(config_.granularity_schedule, net_->num_steps(), step);
}

void Trainer::set_lr(double lr) {
  for (auto& group : optimizer_->param_groups()) {
    static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
  }
}

void Trainer::apply_update(const torch::Tensor& loss, int step) {
  check_finite(loss, step);
  optimizer_->zero_grad();
  loss.backward();
  optimizer_->step();
  ++state_.global_step;
}

StepLoss Trainer::pretrain_step(std::span<const ImageTensor> images, int step, Rng& rng, bool update) {
  if (config_.mode != Mode::Pretrain) throw ConfigError("trainer is not in pretrain mode");
  const int n = step_grid(step);
  std::vector<ImageTensor> augmented;
  std::vector<ImageTensor> jigsawed;
  std::vector<int> labels;
  for (const auto& img : images) {
    if (config_.use_barlow) augmented.push_back(augment::distort(img, policy_, rng));
    if (config_.use_jigsaw) {
      auto [shuffled, label] = jigsaw::sample_puzzle(img, pool(n), rng);
      jigsawed.push_back(std::move(shuffled));
      labels.push_back(label);
    } else {
      jigsawed.push_back(augment::distort(img, policy_, rng));
    }
  }

  std::optional<torch::NoGradGuard> no_grad;
  if (!update) no_grad.emplace();

  const auto fb = net_->extract_stage_features(model::images_to_tensor(jigsawed, mean_, stddev_), step);
  std::vector<torch::Tensor> logits;
  std::vector<torch::Tensor> label_tensors;
  if (config_.use_jigsaw) {
    logits.push_back(net_->classify_step(fb, step));
    label_tensors.push_back(to_label_tensor(labels));
  }
  torch::Tensor za;
  torch::Tensor zb;
  if (config_.use_barlow) {
    const auto fa = net_->extract_stage_features(model::images_to_tensor(augmented, mean_, stddev_), step);
    za = net_->project(fa, step);
    zb = net_->project(fb, step);
  }
  const auto loss = ssl::pretrain_loss(za, zb, logits, label_tensors,
                                       {config_.use_barlow, config_.use_jigsaw, config_.lambda, config_.beta});
  check_finite(loss.total, step);

  StepLoss out;
  out.step = step;
  out.granularity = n;
  out.total = loss.total.item<double>();
  if (loss.barlow) out.barlow = loss.barlow->item<double>();
  if (loss.order) out.order = loss.order->item<double>();
  if (update) apply_update(loss.total, step);
  return out;
}

StepLoss Trainer::finetune_step(std::span<const ImageTensor> images, std::span<const int> labels, int step,
                                Rng& rng, bool update) {
  if (config_.mode != Mode::Finetune) throw ConfigError("trainer is not in finetune mode");
  if (images.size() != labels.size()) throw ShapeError("one label per image required");
  const int n = step_grid(step);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<ImageTensor> inputs;
  inputs.reserve(images.size());
  for (const auto& img : images) {
    ImageTensor x = coin(rng) < config_.finetune_flip ? augment::hflip(img) : img;
    if (n > 1) x = jigsaw::shuffle(x, jigsaw::random_permutation(n, rng));
    inputs.push_back(std::move(x));
  }

  std::optional<torch::NoGradGuard> no_grad;
  if (!update) no_grad.emplace();
  const auto features = net_->extract_stage_features(model::images_to_tensor(inputs, mean_, stddev_), step);
  const auto logits = net_->classify_step(features, step);
  const auto target = to_label_tensor(labels);
  if (target.min().item<int64_t>() < 0 || target.max().item<int64_t>() >= logits.size(1)) {
    throw LabelError("class label outside the classifier's range");
  }
  const auto loss = torch::nn::functional::cross_entropy(logits, target);
  check_finite(loss, step);
  StepLoss out;
  out.step = step;
  out.granularity = n;
  out.total = loss.item<double>();
  if (update) apply_update(loss, step);
  return out;
}

BatchResult Trainer::pretrain_batch(std::span<const ImageTensor> images, Rng& rng) {
  net_->train();
  BatchResult result;
  for (int step : active_steps()) {
    result.steps.push_back(pretrain_step(images, step, rng));
    ++result.updates;
  }
  return result;
}

BatchResult Trainer::finetune_batch(std::span<const ImageTensor> images, std::span<const int> labels, Rng& rng) {
  net_->train();
  BatchResult result;
  for (int step : active_steps()) {
    result.steps.push_back(finetune_step(images, labels, step, rng));
    ++result.updates;
  }
  return result;
}

EpochStats Trainer::train_epoch(const std::vector<ImageTensor>& images, const std::vector<int>* labels) {
  if (images.size() < 2) throw ShapeError("training needs at least two images");
  if (config_.mode == Mode::Finetune && (!labels || labels->size() != images.size())) {
    throw ShapeError("fine-tuning needs one label per image");
  }
  const auto start = std::chrono::steady_clock::now();
  const int epoch = state_.epoch;
  EpochStats stats;
  stats.epoch = epoch;
  stats.lr = cosine_lr(std::min(epoch, config_.epochs), config_.epochs, config_.lr_init);
  set_lr(stats.lr);

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  Rng order_rng = derive_rng(config_.seed, {static_cast<std::uint64_t>(epoch), kStreamOrder});
  std::shuffle(order.begin(), order.end(), order_rng);

  const std::size_t bs = static_cast<std::size_t>(config_.batch_size);
  std::map<int, StepLoss> sums;
  std::map<int, int> counts;
  std::vector<ImageTensor> batch;
  std::vector<int> batch_labels;
  for (std::size_t begin = 0, b = 0; begin < order.size(); begin += bs, ++b) {
    const std::size_t end = std::min(order.size(), begin + bs);
    if (end - begin < 2) break;  // batch statistics need two samples
    batch.clear();
    batch_labels.clear();
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back(images[order[i]]);
      if (labels) batch_labels.push_back((*labels)[order[i]]);
    }
    Rng rng = derive_rng(config_.seed, {static_cast<std::uint64_t>(epoch), kStreamBatch, b});
    const auto result = config_.mode == Mode::Pretrain ? pretrain_batch(batch, rng)
                                                       : finetune_batch(batch, batch_labels, rng);
    for (const auto& s : result.steps) {
      auto& acc = sums[s.step];
      acc.step = s.step;
      acc.granularity = s.granularity;
      acc.total += s.total;
      if (s.barlow) acc.barlow = acc.barlow.value_or(0.0) + *s.barlow;
      if (s.order) acc.order = acc.order.value_or(0.0) + *s.order;
      ++counts[s.step];
    }
  }
  for (auto& [step, acc] : sums) {
    const double n = counts[step];
    acc.total /= n;
    if (acc.barlow) *acc.barlow /= n;
    if (acc.order) *acc.order /= n;
    stats.steps.push_back(acc);
  }
  ++state_.epoch;
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

std::vector<double> predict_proba(model::PmgNetwork& net, const std::vector<ImageTensor>& images,
                                  const std::array<float, 3>& mean, const std::array<float, 3>& stddev,
                                  int batch_size) {
  const bool was_training = net->is_training();
  net->eval();
  torch::NoGradGuard guard;
  std::vector<double> out;
  for (std::size_t begin = 0; begin < images.size(); begin += batch_size) {
    const std::size_t end = std::min(images.size(), begin + static_cast<std::size_t>(batch_size));
    const auto x = model::images_to_tensor(std::span(images).subspan(begin, end - begin), mean, stddev);
    const auto steps = net->extract_all_steps(x);
    torch::Tensor summed;
    for (const auto& f : steps) {
      auto logits = net->classify_step(f, f.step).to(torch::kDouble);
      summed = summed.defined() ? summed + logits : logits;
    }
    const auto probs = torch::softmax(summed, 1).contiguous();
    out.insert(out.end(), probs.data_ptr<double>(), probs.data_ptr<double>() + probs.numel());
  }
  net->train(was_training);
  return out;
}

std::vector<double> predict(model::PmgNetwork& net, const ImageTensor& image, const std::array<float, 3>& mean,
                            const std::array<float, 3>& stddev) {
  return predict_proba(net, {image}, mean, stddev, 1);
}

std::vector<int> argmax_rows(std::span<const double> probabilities, int num_classes) {
  std::vector<int> out;
  for (std::size_t i = 0; i + num_classes <= probabilities.size(); i += num_classes) {
    const auto row = probabilities.subspan(i, num_classes);
    out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

MetricsLog::MetricsLog(const std::filesystem::path& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw Error("cannot open metrics log " + path.string());
}

void MetricsLog::write(const EpochStats& stats, std::optional<double> train_accuracy) {
  for (const auto& s : stats.steps) {
    nlohmann::ordered_json j;
    j["epoch"] = stats.epoch;
    j["step"] = s.step;
    j["granularity"] = s.granularity;
    j["loss_total"] = s.total;
    if (s.barlow) j["loss_barlow"] = *s.barlow;
    if (s.order) j["loss_order"] = *s.order;
    j["lr"] = stats.lr;
    if (train_accuracy) j["train_accuracy"] = *train_accuracy;
    j["wall_time"] = stats.seconds;
    out_ << j.dump() << '\n';
  }
  out_.flush();
}

}  // namespace fgssl::train
