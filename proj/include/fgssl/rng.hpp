#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

namespace fgssl {

using Rng = std::mt19937_64;

// Independent stream for a (seed, coordinates...) tuple. Batch order and all
// per-batch randomness are derived this way so a run is a pure function of
// its seed and can be resumed at any epoch boundary.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
  std::seed_seq::result_type parts[16];
  std::size_t n = 0;
  parts[n++] = static_cast<std::uint32_t>(seed);
  parts[n++] = static_cast<std::uint32_t>(seed >> 32);
  for (auto c : coords) {
    if (n + 2 > 16) break;
    parts[n++] = static_cast<std::uint32_t>(c);
    parts[n++] = static_cast<std::uint32_t>(c >> 32);
  }
  std::seed_seq seq(parts, parts + n);
  return Rng(seq);
}

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

}  // namespace fgssl
