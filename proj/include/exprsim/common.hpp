#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace exprsim {

inline constexpr const char* kToolVersion = "0.4.0";

/// Malformed or inconsistent input data (bad rows, missing ids, shape
/// mismatches). The CLI maps this to its data-error exit code.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A computation produced or encountered degenerate numerics (non-finite
/// loss or gradients, near-zero norms).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// FNV-1a over raw bytes. Used for stable face ids and file digests.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t state = 14695981039346656037ull) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 1099511628211ull;
  }
  return state;
}

std::string to_hex(std::uint64_t value);

/// Derives an independent rng stream from a base seed (splitmix64 mix),
/// so e.g. init / batching / dropout do not share a generator.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

using Rng = std::mt19937_64;

}  // namespace exprsim
