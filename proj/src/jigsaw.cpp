#include "fgssl/jigsaw.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "fgssl/errors.hpp"

namespace fgssl::jigsaw {

namespace {

// Above this many patches the permutation group is sampled, not enumerated.
constexpr int kMaxEnumeratedPatches = 8;
constexpr int kCandidatesPerRound = 256;

Permutation identity_permutation(int size) {
  Permutation p(size);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

void check_granularity(int n) {
  if (n < 1) throw ShapeError("granularity must be >= 1, got " + std::to_string(n));
}

}  // namespace

bool is_bijection(const Permutation& p, std::size_t size) {
  if (p.size() != size) return false;
  std::vector<char> seen(size, 0);
  for (int v : p) {
    if (v < 0 || static_cast<std::size_t>(v) >= size || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

Permutation inverse(const Permutation& p) {
  Permutation inv(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) inv[p[k]] = static_cast<int>(k);
  return inv;
}

int hamming_distance(const Permutation& a, const Permutation& b) {
  int d = 0;
  for (std::size_t k = 0; k < a.size(); ++k) d += a[k] != b[k];
  return d;
}

PermutationSpec PermutationSpec::identity(int n) {
  check_granularity(n);
  return PermutationSpec{n, identity_permutation(n * n), std::nullopt};
}

void PermutationSpec::validate() const {
  check_granularity(granularity);
  if (!is_bijection(permutation, static_cast<std::size_t>(granularity) * granularity)) {
    throw ShapeError("permutation is not a bijection on " +
                     std::to_string(granularity * granularity) + " patches");
  }
}

PermutationSpec PermutationSpec::inverse() const {
  return PermutationSpec{granularity, jigsaw::inverse(permutation), std::nullopt};
}

PermutationPool::PermutationPool(int granularity, std::vector<Permutation> permutations,
                                 std::uint64_t seed)
    : granularity_(granularity), seed_(seed), permutations_(std::move(permutations)) {
  check_granularity(granularity);
  const auto patches = static_cast<std::size_t>(granularity) * granularity;
  if (permutations_.empty() || permutations_.front() != identity_permutation(patches)) {
    throw ShapeError("permutation pool must start with the identity");
  }
  for (const auto& p : permutations_) {
    if (!is_bijection(p, patches)) throw ShapeError("pool entry is not a bijection");
  }
}

PermutationSpec PermutationPool::spec(int index) const {
  return PermutationSpec{granularity_, permutations_.at(index), index};
}

int PermutationPool::min_pairwise_distance() const {
  if (permutations_.size() < 2) return 0;
  int best = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < permutations_.size(); ++i) {
    for (std::size_t j = i + 1; j < permutations_.size(); ++j) {
      best = std::min(best, hamming_distance(permutations_[i], permutations_[j]));
    }
  }
  return best;
}

std::uint64_t permutation_count(int n) {
  check_granularity(n);
  const std::uint64_t patches = static_cast<std::uint64_t>(n) * n;
  std::uint64_t total = 1;
  for (std::uint64_t k = 2; k <= patches; ++k) {
    if (total > std::numeric_limits<std::uint64_t>::max() / k) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    total *= k;
  }
  return total;
}

PermutationPool build_permutation_pool(int n, int pool_size, std::uint64_t seed) {
  check_granularity(n);
  if (pool_size < 1) throw CapacityError("pool_size must be >= 1");
  if (static_cast<std::uint64_t>(pool_size) > permutation_count(n)) {
    throw CapacityError("pool_size " + std::to_string(pool_size) + " exceeds the " +
                        std::to_string(permutation_count(n)) +
                        " distinct permutations at granularity " + std::to_string(n));
  }
  const int patches = n * n;
  std::vector<Permutation> pool{identity_permutation(patches)};
  Rng rng(seed);

  if (patches <= kMaxEnumeratedPatches) {
    std::vector<Permutation> candidates;
    Permutation p = identity_permutation(patches);
    while (std::next_permutation(p.begin(), p.end())) candidates.push_back(p);
    std::shuffle(candidates.begin(), candidates.end(), rng);

    std::vector<int> min_dist(candidates.size());
    std::vector<char> used(candidates.size(), 0);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      min_dist[c] = hamming_distance(candidates[c], pool.front());
    }
    while (static_cast<int>(pool.size()) < pool_size) {
      std::size_t best = candidates.size();
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (!used[c] && (best == candidates.size() || min_dist[c] > min_dist[best])) best = c;
      }
      used[best] = 1;
      pool.push_back(candidates[best]);
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        min_dist[c] = std::min(min_dist[c], hamming_distance(candidates[c], pool.back()));
      }
    }
    return PermutationPool(n, std::move(pool), seed);
  }

  Permutation candidate = identity_permutation(patches);
  while (static_cast<int>(pool.size()) < pool_size) {
    Permutation best;
    int best_dist = 0;
    for (int c = 0; c < kCandidatesPerRound; ++c) {
      std::shuffle(candidate.begin(), candidate.end(), rng);
      int d = std::numeric_limits<int>::max();
      for (const auto& q : pool) {
        d = std::min(d, hamming_distance(candidate, q));
        if (d <= best_dist) break;
      }
      if (d > best_dist) {
        best_dist = d;
        best = candidate;
      }
    }
    // best_dist == 0 means every candidate duplicated a pool entry; draw again.
    if (best_dist > 0) pool.push_back(std::move(best));
  }
  return PermutationPool(n, std::move(pool), seed);
}

void check_divisible(const ImageTensor& img, int n) {
  check_granularity(n);
  if (img.height() % n != 0 || img.width() % n != 0) {
    throw DivisibilityError("image " + std::to_string(img.height()) + "x" +
                            std::to_string(img.width()) + " (H=" + std::to_string(img.height()) +
                            ", W=" + std::to_string(img.width()) +
                            ") is not divisible by granularity n=" + std::to_string(n));
  }
}

std::vector<ImageTensor> split_patches(const ImageTensor& img, int n) {
  check_divisible(img, n);
  const int ph = img.height() / n;
  const int pw = img.width() / n;
  std::vector<ImageTensor> patches;
  patches.reserve(static_cast<std::size_t>(n) * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) patches.push_back(img.crop(r * ph, c * pw, ph, pw));
  }
  return patches;
}

ImageTensor assemble_patches(const std::vector<ImageTensor>& patches, int n) {
  check_granularity(n);
  if (patches.size() != static_cast<std::size_t>(n) * n) {
    throw ShapeError("expected " + std::to_string(n * n) + " patches, got " +
                     std::to_string(patches.size()));
  }
  const auto& first = patches.front();
  for (const auto& p : patches) {
    if (p.height() != first.height() || p.width() != first.width() ||
        p.channels() != first.channels() || p.empty()) {
      throw ShapeError("patches have ragged shapes");
    }
  }
  ImageTensor out(first.height() * n, first.width() * n, first.channels());
  for (int k = 0; k < n * n; ++k) {
    out.paste(patches[k], (k / n) * first.height(), (k % n) * first.width());
  }
  return out;
}

ImageTensor shuffle(const ImageTensor& img, const PermutationSpec& spec) {
  spec.validate();
  const int n = spec.granularity;
  check_divisible(img, n);
  if (n == 1) return img;
  const int ph = img.height() / n;
  const int pw = img.width() / n;
  ImageTensor out(img.height(), img.width(), img.channels());
  for (int k = 0; k < n * n; ++k) {
    const int src = spec.permutation[k];
    out.paste(img.crop((src / n) * ph, (src % n) * pw, ph, pw), (k / n) * ph, (k % n) * pw);
  }
  return out;
}

std::pair<ImageTensor, int> sample_puzzle(const ImageTensor& img, const PermutationPool& pool,
                                          Rng& rng) {
  std::uniform_int_distribution<int> pick(0, pool.size() - 1);
  const int label = pick(rng);
  return {shuffle(img, pool.spec(label)), label};
}

PermutationSpec random_permutation(int n, Rng& rng) {
  auto spec = PermutationSpec::identity(n);
  std::shuffle(spec.permutation.begin(), spec.permutation.end(), rng);
  return spec;
}

}  // namespace fgssl::jigsaw
