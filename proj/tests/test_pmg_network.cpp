#include <doctest.h>

#include "fgssl/errors.hpp"
#include "fgssl/pmg_network.hpp"

using namespace fgssl;
using namespace fgssl::model;

namespace {

PmgNetwork small_net(std::vector<int64_t> labels = {5, 5, 5, 5}) {
  PmgOptions opts;
  opts.head_width = 16;
  opts.projector_hidden = 32;
  opts.projector_dim = 24;
  opts.label_sizes = std::move(labels);
  return PmgNetwork(make_backbone("small_cnn"), opts);
}

}  // namespace

TEST_CASE("small CNN stage shapes") {
  auto bb = make_backbone("small_cnn");
  CHECK(bb->num_stages() == 4);
  const auto maps = bb->forward_stages(torch::randn({2, 3, 64, 64}), 4);
  REQUIRE(maps.size() == 4);
  for (int s = 1; s <= 4; ++s) {
    CHECK(maps[s - 1].size(1) == bb->stage_channels(s));
    CHECK(maps[s - 1].size(2) == 64 / bb->stage_stride(s));
  }
  CHECK(bb->forward_stages(torch::randn({1, 3, 32, 32}), 2).size() == 2);
  CHECK_THROWS_AS(bb->forward_stages(torch::randn({1, 3, 32, 32}), 5), StepError);
  CHECK_THROWS_AS(make_backbone("vgg"), ConfigError);
}

TEST_CASE("resnet50 stage channels and strides") {
  auto bb = make_backbone("resnet50");
  CHECK(bb->num_stages() == 5);
  CHECK(bb->stage_channels(5) == 2048);
  CHECK(bb->stage_stride(5) == 32);
  const auto maps = bb->forward_stages(torch::randn({1, 3, 64, 64}), 3);
  REQUIRE(maps.size() == 3);
  CHECK(maps[2].size(1) == 512);
  CHECK(maps[2].size(2) == 8);
}

TEST_CASE("every step yields logits and embeddings of the right shape") {
  torch::manual_seed(0);
  auto net = small_net({3, 4, 5, 6});
  CHECK(net->num_steps() == 4);
  const auto x = torch::randn({3, 3, 64, 64});
  for (int step = 1; step <= 4; ++step) {
    const auto f = net->extract_stage_features(x, step);
    CHECK(f.step == step);
    CHECK(f.features.size(0) == 3);
    CHECK(f.features.size(1) == (step == 4 ? 3 * 16 : 16));
    CHECK(net->classify_step(f, step).size(1) == 2 + step);
    const auto z = net->project(f, step);
    CHECK(z.size(0) == 3);
    CHECK(z.size(1) == 24);
  }
  CHECK_THROWS_AS(net->extract_stage_features(x, 0), StepError);
  CHECK_THROWS_AS(net->extract_stage_features(x, 5), StepError);
}

TEST_CASE("single-pass extraction matches per-step extraction in eval mode") {
  torch::manual_seed(1);
  auto net = small_net();
  net->eval();
  const auto x = torch::randn({2, 3, 64, 64});
  const auto all = net->extract_all_steps(x);
  REQUIRE(all.size() == 4);
  for (int step = 1; step <= 4; ++step) {
    const auto one = net->extract_stage_features(x, step);
    CHECK(torch::allclose(all[step - 1].features, one.features, 1e-5, 1e-6));
  }
}

TEST_CASE("classify_step rejects features from another step") {
  auto net = small_net();
  const auto x = torch::randn({2, 3, 64, 64});
  const auto f1 = net->extract_stage_features(x, 1);
  CHECK_THROWS_AS(net->classify_step(f1, 4), ShapeError);
  CHECK_THROWS_AS(net->project(f1, 4), ShapeError);
}

TEST_CASE("zero-initialized classifiers give a uniform softmax") {
  auto net = small_net();
  net->reset_classifiers({7, 7, 7, 7}, true);
  net->eval();
  const auto f = net->extract_stage_features(torch::randn({2, 3, 64, 64}), 4);
  const auto p = torch::softmax(net->classify_step(f, 4), 1);
  CHECK(torch::allclose(p, torch::full_like(p, 1.0 / 7.0)));
  CHECK_THROWS_AS(net->reset_classifiers({7, 7}), ConfigError);
}

TEST_CASE("gradients reach the backbone from the final step") {
  torch::manual_seed(2);
  auto net = small_net();
  const auto f = net->extract_stage_features(torch::randn({4, 3, 64, 64}), 4);
  net->classify_step(f, 4).sum().backward();
  bool any = false;
  for (const auto& p : net->backbone().parameters()) {
    if (p.grad().defined() && p.grad().abs().sum().item<double>() > 0) any = true;
  }
  CHECK(any);
}

TEST_CASE("weight-decay groups partition the parameters") {
  auto net = small_net();
  const auto decay = net->decay_parameters();
  const auto rest = net->no_decay_parameters();
  CHECK(decay.size() + rest.size() == net->parameters().size());
  for (const auto& p : decay) CHECK(p.dim() > 1);
  for (const auto& p : rest) CHECK(p.dim() <= 1);
}

TEST_CASE("step_granularity and images_to_tensor") {
  CHECK(step_granularity({8, 4, 2, 1}, 4, 1) == 8);
  CHECK(step_granularity({8, 4, 2, 1}, 4, 4) == 1);
  CHECK_THROWS_AS(step_granularity({8, 4, 2}, 4, 1), ConfigError);
  CHECK_THROWS_AS(step_granularity({8, 4, 2, 1}, 4, 5), StepError);

  std::vector<ImageTensor> imgs{ImageTensor(4, 4, 3, 0.5f), ImageTensor(4, 4, 3, 1.0f)};
  const auto t = images_to_tensor(imgs, {0.5f, 0.5f, 0.5f}, {0.25f, 0.25f, 0.25f});
  CHECK(t.sizes() == torch::IntArrayRef({2, 3, 4, 4}));
  CHECK(t[0].abs().max().item<float>() == 0.0f);
  CHECK(t[1][2][3][3].item<float>() == doctest::Approx(2.0f));
  std::vector<ImageTensor> mixed{ImageTensor(4, 4, 3), ImageTensor(8, 8, 3)};
  CHECK_THROWS_AS(images_to_tensor(mixed, {0, 0, 0}, {1, 1, 1}), ShapeError);
}

TEST_CASE("parameter checksum tracks weights") {
  torch::manual_seed(3);
  auto a = small_net();
  torch::manual_seed(3);
  auto b = small_net();
  CHECK(parameter_checksum(*a) == parameter_checksum(*b));
  {
    torch::NoGradGuard g;
    b->parameters().front().add_(0.1);
  }
  CHECK(parameter_checksum(*a) != parameter_checksum(*b));
}
