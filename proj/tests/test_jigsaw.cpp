#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fgssl/errors.hpp"
#include "fgssl/jigsaw.hpp"
#include "oracles.hpp"

using namespace fgssl;
using namespace fgssl::jigsaw;

namespace {

// Pixel value encodes its coordinates, so every patch is distinguishable.
ImageTensor coordinate_image(int h, int w, int c = 3) {
  ImageTensor img(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) img.at(y, x, k) = static_cast<float>((y * w + x) * c + k) / (h * w * c);
  return img;
}

ImageTensor random_image(int h, int w, Rng& rng) {
  ImageTensor img(h, w, 3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : img.data()) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("split_patches returns row-major patches") {
  const auto img = coordinate_image(8, 8);
  const auto patches = split_patches(img, 2);
  REQUIRE(patches.size() == 4);
  for (const auto& p : patches) {
    CHECK(p.height() == 4);
    CHECK(p.width() == 4);
  }
  CHECK(patches[1] == img.crop(0, 4, 4, 4));
  CHECK(patches[2] == img.crop(4, 0, 4, 4));
  CHECK(patches[3] == img.crop(4, 4, 4, 4));
}

TEST_CASE("split_patches with n=1 returns the image") {
  const auto img = coordinate_image(12, 20);
  const auto patches = split_patches(img, 1);
  REQUIRE(patches.size() == 1);
  CHECK(patches[0] == img);
}

TEST_CASE("224x224 at n=8 gives 64 patches of 28x28") {
  const ImageTensor img(224, 224, 3, 0.25f);
  const auto patches = split_patches(img, 8);
  CHECK(patches.size() == 64);
  CHECK(patches.front().height() == 28);
  CHECK(patches.back().width() == 28);
}

TEST_CASE("non-divisible dims raise DivisibilityError naming n, H and W") {
  const ImageTensor img(30, 32, 3);
  try {
    split_patches(img, 4);
    FAIL("expected DivisibilityError");
  } catch (const DivisibilityError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('4') != std::string::npos);
    CHECK(msg.find("30") != std::string::npos);
    CHECK(msg.find("32") != std::string::npos);
  }
  CHECK_THROWS_AS(shuffle(img, PermutationSpec::identity(4)), DivisibilityError);
}

TEST_CASE("assemble inverts split and rejects bad input") {
  Rng rng(3);
  const auto img = random_image(16, 24, rng);
  for (int n : {1, 2, 4, 8}) CHECK(assemble_patches(split_patches(img, n), n) == img);

  auto patches = split_patches(img, 2);
  patches.pop_back();
  CHECK_THROWS_AS(assemble_patches(patches, 2), ShapeError);
  auto ragged = split_patches(img, 2);
  ragged[1] = ImageTensor(4, 4, 3);
  CHECK_THROWS_AS(assemble_patches(ragged, 2), ShapeError);
}

TEST_CASE("shuffle puts input patch perm[k] in slot k") {
  const auto img = coordinate_image(8, 8);
  PermutationSpec spec{2, {1, 0, 3, 2}, std::nullopt};
  const auto out = shuffle(img, spec);
  const auto in_p = split_patches(img, 2);
  const auto out_p = split_patches(out, 2);
  // left/right swap in both rows
  CHECK(out_p[0] == in_p[1]);
  CHECK(out_p[1] == in_p[0]);
  CHECK(out_p[2] == in_p[3]);
  CHECK(out_p[3] == in_p[2]);

  CHECK(shuffle(img, PermutationSpec::identity(2)) == img);
  CHECK(shuffle(out, spec.inverse()) == img);
}

TEST_CASE("permutation specs validate bijections") {
  CHECK(is_bijection({2, 0, 1}, 3));
  CHECK_FALSE(is_bijection({0, 0, 1}, 3));
  CHECK_FALSE(is_bijection({0, 1}, 3));
  CHECK_THROWS(PermutationSpec{2, {0, 1, 2, 2}, std::nullopt}.validate());
  CHECK_THROWS(PermutationSpec{1, {1}, std::nullopt}.validate());
  CHECK(inverse({2, 0, 1}) == Permutation{1, 2, 0});
  CHECK(hamming_distance({0, 1, 2, 3}, {1, 0, 3, 2}) == 4);
}

TEST_CASE("pool n=1 is the identity alone") {
  const auto pool = build_permutation_pool(1, 1, 0);
  REQUIRE(pool.size() == 1);
  CHECK(pool[0] == Permutation{0});
}

TEST_CASE("pool n=2, size 24 enumerates S4 with identity first") {
  const auto pool = build_permutation_pool(2, 24, 11);
  REQUIRE(pool.size() == 24);
  CHECK(pool[0] == Permutation{0, 1, 2, 3});
  std::set<Permutation> expected;
  Permutation p{0, 1, 2, 3};
  do expected.insert(p);
  while (std::next_permutation(p.begin(), p.end()));
  CHECK(std::set<Permutation>(pool.permutations().begin(), pool.permutations().end()) == expected);
}

TEST_CASE("pool n=2, size 2 adds a derangement for any seed") {
  // Brute force: the largest distance from the identity over S4 is 4.
  int best = 0;
  Permutation p{0, 1, 2, 3};
  do best = std::max(best, oracle::hamming(p, {0, 1, 2, 3}));
  while (std::next_permutation(p.begin(), p.end()));
  REQUIRE(best == 4);
  for (std::uint64_t seed : {0ULL, 1ULL, 17ULL, 123456789ULL}) {
    const auto pool = build_permutation_pool(2, 2, seed);
    CHECK(hamming_distance(pool[0], pool[1]) == best);
  }
}

TEST_CASE("pool capacity and determinism") {
  CHECK_THROWS_AS(build_permutation_pool(2, 25, 0), CapacityError);
  CHECK_THROWS_AS(build_permutation_pool(1, 2, 0), CapacityError);
  CHECK_THROWS_AS(build_permutation_pool(2, 0, 0), CapacityError);
  const auto a = build_permutation_pool(4, 16, 5);
  const auto b = build_permutation_pool(4, 16, 5);
  CHECK(a.permutations() == b.permutations());
  std::set<Permutation> distinct(a.permutations().begin(), a.permutations().end());
  CHECK(distinct.size() == 16);
  CHECK(a[0] == PermutationSpec::identity(4).permutation);
  CHECK(a.spec(3).pool_index == 3);
}

TEST_CASE("sample_puzzle: singleton pool, determinism, uniform labels") {
  Rng rng(1);
  const auto img = random_image(16, 16, rng);
  const auto single = build_permutation_pool(1, 1, 0);
  const auto [same, label] = sample_puzzle(img, single, rng);
  CHECK(label == 0);
  CHECK(same == img);

  const auto pool = build_permutation_pool(2, 8, 4);
  Rng r1(99), r2(99);
  const auto x1 = sample_puzzle(img, pool, r1);
  const auto x2 = sample_puzzle(img, pool, r2);
  CHECK(x1.first == x2.first);
  CHECK(x1.second == x2.second);

  // Each label's count should be within 3 binomial sigmas of N/8.
  const int draws = 10000;
  std::vector<int> counts(8, 0);
  const ImageTensor tiny(2, 2, 1);
  Rng r(2024);
  for (int i = 0; i < draws; ++i) ++counts[sample_puzzle(tiny, pool, r).second];
  const double p = 1.0 / 8.0;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - draws * p) <= 3 * sigma);
}

TEST_CASE("shuffle preserves the multiset of patches and the histogram") {
  Rng rng(8);
  const auto img = random_image(32, 32, rng);
  for (int n : {2, 4, 8}) {
    const auto spec = random_permutation(n, rng);
    const auto out = shuffle(img, spec);
    std::vector<float> a(img.data().begin(), img.data().end());
    std::vector<float> b(out.data().begin(), out.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    CHECK(shuffle(out, spec.inverse()) == img);
  }
}
