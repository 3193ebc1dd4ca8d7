#include <doctest.h>

#include <algorithm>

#include "fgssl/augmentation.hpp"
#include "fgssl/errors.hpp"

using namespace fgssl;
using namespace fgssl::augment;

namespace {

ImageTensor random_image(int h, int w, Rng& rng) {
  ImageTensor img(h, w, 3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : img.data()) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("identity policy leaves the image untouched") {
  Rng rng(5);
  const auto img = random_image(48, 40, rng);
  auto policy = AugmentationPolicy::identity();
  CHECK(distort(img, policy, rng) == img);
}

TEST_CASE("distort is deterministic given the rng state") {
  Rng seed_rng(6);
  const auto img = random_image(32, 32, seed_rng);
  const AugmentationPolicy policy;
  Rng a(77), b(77);
  CHECK(distort(img, policy, a) == distort(img, policy, b));
}

TEST_CASE("distort keeps shape and clamps to [0,1]") {
  Rng rng(7);
  const AugmentationPolicy policy;
  for (int i = 0; i < 100; ++i) {
    const auto img = random_image(32, 24, rng);
    const auto out = distort(img, policy, rng);
    CHECK(out.height() == 32);
    CHECK(out.width() == 24);
    CHECK(out.channels() == 3);
    CHECK(out.all_finite());
    CHECK(out.in_unit_range());
  }
}

TEST_CASE("invalid policies are rejected") {
  AugmentationPolicy p;
  p.flip.probability = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.resized_crop.lo = 0.9;
  p.resized_crop.hi = 0.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  CHECK_NOTHROW(p.validate());
  CHECK(p.ops().size() == 6);
  CHECK(p.ops().front().first == "resized_crop");
}

TEST_CASE("eval transform: 256x256 input yields its central 224x224") {
  Rng rng(8);
  const auto img = random_image(256, 256, rng);
  const auto out = resize_center_crop(img, 256, 224);
  CHECK(out == img.crop(16, 16, 224, 224));
}

TEST_CASE("eval transform normalizes constants per channel") {
  const ImageTensor img(224, 224, 3, 0.5f);
  EvalTransform t;
  t.mean = {0.4f, 0.5f, 0.6f};
  t.stddev = {0.2f, 0.25f, 0.1f};
  const auto out = eval_transform(img, t);
  REQUIRE(out.height() == 224);
  for (int c = 0; c < 3; ++c) {
    const float expected = (0.5f - t.mean[c]) / t.stddev[c];
    CHECK(out.at(0, 0, c) == doctest::Approx(expected).epsilon(1e-6));
    CHECK(out.at(223, 100, c) == doctest::Approx(expected).epsilon(1e-6));
  }
  CHECK(eval_transform(img, t) == out);
}

TEST_CASE("eval transform rejects tiny images") {
  CHECK_THROWS_AS(resize_center_crop(ImageTensor(31, 64, 3), 256, 224), InputError);
}

TEST_CASE("resizing to the same size is exact") {
  Rng rng(9);
  const auto img = random_image(64, 64, rng);
  CHECK(resize_center_crop(img, 64, 64) == img);
}

TEST_CASE("individual ops") {
  ImageTensor img(2, 3, 3);
  for (int x = 0; x < 3; ++x) img.at(0, x, 0) = 0.1f * (x + 1);
  const auto f = hflip(img);
  CHECK(f.at(0, 0, 0) == img.at(0, 2, 0));
  CHECK(hflip(f) == img);

  ImageTensor rgb(1, 1, 3);
  rgb.at(0, 0, 0) = 1.0f;
  const auto g = to_grayscale(rgb);
  CHECK(g.channels() == 3);
  CHECK(g.at(0, 0, 0) == g.at(0, 0, 1));
  CHECK(g.at(0, 0, 1) == g.at(0, 0, 2));

  ImageTensor s(1, 2, 3);
  s.at(0, 0, 0) = 0.2f;
  s.at(0, 1, 0) = 0.8f;
  const auto sol = solarize(s, 0.5);
  CHECK(sol.at(0, 0, 0) == doctest::Approx(0.2f));
  CHECK(sol.at(0, 1, 0) == doctest::Approx(0.2f));

  const ImageTensor flat(16, 16, 3, 0.3f);
  const auto blurred = gaussian_blur(flat, 1.5);
  for (float v : blurred.data()) CHECK(v == doctest::Approx(0.3f).epsilon(1e-5));
  CHECK(adjust_color(flat, 1.0, 1.0, 1.0, 0.0).at(5, 5, 1) == doctest::Approx(0.3f).epsilon(1e-5));
}
