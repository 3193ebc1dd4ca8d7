#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fgssl/image.hpp"
#include "fgssl/rng.hpp"

namespace fgssl::jigsaw {

using Permutation = std::vector<int>;

// A patch permutation on an n x n grid. Slot k of a shuffled image holds
// input patch permutation[k]; pool_index is the order-prediction label when
// the permutation was drawn from a pool.
struct PermutationSpec {
  int granularity = 1;
  Permutation permutation{0};
  std::optional<int> pool_index;

  // Identity permutation at granularity n.
  static PermutationSpec identity(int n);
  // Throws ShapeError when the permutation is not a bijection on 0..n^2-1,
  // or when n == 1 and the permutation is not the identity.
  void validate() const;
  PermutationSpec inverse() const;
};

bool is_bijection(const Permutation& p, std::size_t size);
Permutation inverse(const Permutation& p);
int hamming_distance(const Permutation& a, const Permutation& b);

// Fixed, seed-deterministic set of permutations at one granularity. Entry 0 is
// always the identity, and the index of an entry is its class label.
class PermutationPool {
 public:
  PermutationPool(int granularity, std::vector<Permutation> permutations, std::uint64_t seed);

  int granularity() const { return granularity_; }
  std::uint64_t seed() const { return seed_; }
  int size() const { return static_cast<int>(permutations_.size()); }
  const Permutation& operator[](int index) const { return permutations_.at(index); }
  const std::vector<Permutation>& permutations() const { return permutations_; }
  PermutationSpec spec(int index) const;
  // Smallest Hamming distance between any two pool entries (0 for a singleton).
  int min_pairwise_distance() const;

 private:
  int granularity_;
  std::uint64_t seed_;
  std::vector<Permutation> permutations_;
};

// Number of distinct permutations of n^2 patches, saturated at uint64 max.
std::uint64_t permutation_count(int n);

// Greedy max-min-Hamming pool. Candidate permutations are drawn from the seeded
// stream (or all of S_{n^2} when that is small enough to enumerate) and the
// candidate farthest from the current pool is appended until pool_size entries
// exist. Throws CapacityError when pool_size > (n^2)!.
PermutationPool build_permutation_pool(int n, int pool_size, std::uint64_t seed);

// Patches of an image in row-major order. Throws DivisibilityError unless
// n divides both H and W.
std::vector<ImageTensor> split_patches(const ImageTensor& img, int n);
// Inverse of split_patches. Throws ShapeError on wrong count or ragged shapes.
ImageTensor assemble_patches(const std::vector<ImageTensor>& patches, int n);

void check_divisible(const ImageTensor& img, int n);

ImageTensor shuffle(const ImageTensor& img, const PermutationSpec& spec);

// Uniform pool draw; returns the shuffled image and the pool index label.
std::pair<ImageTensor, int> sample_puzzle(const ImageTensor& img, const PermutationPool& pool,
                                          Rng& rng);

// Uniformly random permutation of n^2 patches (not restricted to a pool).
PermutationSpec random_permutation(int n, Rng& rng);

}  // namespace fgssl::jigsaw
