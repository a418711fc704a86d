#pragma once

#include <cstdint>
#include <iterator>
#include <random>

namespace assg {

/// Mixes a base seed with two stream identifiers into an independent seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t words[2];
  seq.generate(std::begin(words), std::end(words));
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace assg
