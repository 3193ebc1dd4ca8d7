// Reference implementations used as test oracles. They share no code with
// the library: plain loops, extended precision, brute force.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using Real = boost::multiprecision::cpp_bin_float_50;
using Matrix = std::vector<std::vector<double>>;  // rows = batch, cols = dims

// Pearson correlation between column i of A and column j of B, computed in
// 50-digit arithmetic with population statistics. A nonzero eps is added to
// each standard deviation, as in the guarded normalization.
inline std::vector<std::vector<Real>> cross_correlation(const Matrix& a, const Matrix& b, double eps = 0.0) {
  const std::size_t batch = a.size();
  const std::size_t da = a.front().size();
  const std::size_t db = b.front().size();
  auto column_stats = [&](const Matrix& m, std::size_t col) {
    Real mean = 0;
    for (std::size_t r = 0; r < batch; ++r) mean += Real(m[r][col]);
    mean /= batch;
    Real ss = 0;
    for (std::size_t r = 0; r < batch; ++r) ss += (Real(m[r][col]) - mean) * (Real(m[r][col]) - mean);
    return std::pair{mean, sqrt(ss / batch) + Real(eps)};
  };
  std::vector<std::vector<Real>> c(da, std::vector<Real>(db));
  for (std::size_t i = 0; i < da; ++i) {
    const auto [mi, si] = column_stats(a, i);
    for (std::size_t j = 0; j < db; ++j) {
      const auto [mj, sj] = column_stats(b, j);
      Real cov = 0;
      for (std::size_t r = 0; r < batch; ++r) cov += (Real(a[r][i]) - mi) * (Real(b[r][j]) - mj);
      c[i][j] = cov / batch / (si * sj);
    }
  }
  return c;
}

inline Real barlow(const std::vector<std::vector<Real>>& c, double lambda) {
  Real on = 0;
  Real off = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < c[i].size(); ++j) {
      if (i == j) {
        on += (1 - c[i][j]) * (1 - c[i][j]);
      } else {
        off += c[i][j] * c[i][j];
      }
    }
  }
  return on + Real(lambda) * off;
}

inline int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

inline int min_pairwise(const std::vector<std::vector<int>>& pool) {
  int best = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) best = std::min(best, hamming(pool[i], pool[j]));
  }
  return best;
}

// Greedy max-min Hamming selection over random candidates: each round
// draws `candidates` shuffles of a running permutation from mt19937_64(seed)
// and keeps the first one with the largest distance to the pool.
inline std::vector<std::vector<int>> greedy_pool(int patches, int size, std::uint64_t seed, int candidates) {
  std::vector<int> id(patches);
  for (int i = 0; i < patches; ++i) id[i] = i;
  std::vector<std::vector<int>> pool{id};
  std::mt19937_64 rng(seed);
  std::vector<int> running = id;
  while (static_cast<int>(pool.size()) < size) {
    std::vector<int> chosen;
    int chosen_d = 0;
    for (int c = 0; c < candidates; ++c) {
      std::shuffle(running.begin(), running.end(), rng);
      int d = std::numeric_limits<int>::max();
      for (const auto& q : pool) d = std::min(d, hamming(running, q));
      if (d > chosen_d) {
        chosen_d = d;
        chosen = running;
      }
    }
    if (chosen_d > 0) pool.push_back(chosen);
  }
  return pool;
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& y) {
  int hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i];
  return static_cast<double>(hit) / y.size();
}

// Macro F1 over classes appearing in labels or predictions, counting
// true/false positives directly.
inline double macro_f1(const std::vector<int>& pred, const std::vector<int>& y) {
  std::set<int> classes(y.begin(), y.end());
  classes.insert(pred.begin(), pred.end());
  double sum = 0.0;
  for (int c : classes) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      tp += pred[i] == c && y[i] == c;
      fp += pred[i] == c && y[i] != c;
      fn += pred[i] != c && y[i] == c;
    }
    sum += tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return sum / classes.size();
}

// Fraction of (positive, negative) pairs ranked correctly; ties count 1/2.
inline double auc_pairs(const std::vector<double>& score, const std::vector<int>& y) {
  double good = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      good += score[i] > score[j] ? 1.0 : score[i] == score[j] ? 0.5 : 0.0;
    }
  }
  return good / pairs;
}

}  // namespace oracle
