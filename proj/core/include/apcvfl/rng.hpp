#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace apcvfl {

using Rng = std::mt19937_64;

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Derives an independent stream seed for a named sub-task ("g1P", "cv/3", ...)
/// so that adding a consumer never shifts the random draws of another one.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) noexcept;

/// Seeded permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

/// Draws `count` distinct indices from 0..n-1, returned in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng);

}  // namespace apcvfl
