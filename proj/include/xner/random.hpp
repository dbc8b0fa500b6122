#ifndef XNER_RANDOM_HPP_
#define XNER_RANDOM_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace xner {

using Rng = std::mt19937_64;

inline std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Independent generator for a named stage ("init", "shuffle", "subsample", ...)
/// so that consuming randomness in one stage never perturbs another.
inline Rng substream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  const std::uint64_t h = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace xner

#endif  // XNER_RANDOM_HPP_
