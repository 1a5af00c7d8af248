#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tsqr::rng {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer.
[[nodiscard]] std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives a stream key from a master seed and a path of counters
/// (replication index, chunk index, ...). Distinct paths give unrelated keys.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master,
                                        std::initializer_list<std::uint64_t> path) noexcept;

/// Engine seeded from a derived stream key.
[[nodiscard]] Engine make_stream(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path);

/// Uniform on the open interval (0, 1) from 53 random bits.
[[nodiscard]] inline double uniform_open(Engine& eng) noexcept {
  return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace tsqr::rng
