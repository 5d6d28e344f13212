#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace crl {

using Rng = std::mt19937_64;

/// Derives an independent generator for a named purpose ("env", "reset/0",
/// "explore", ...) from a run's master seed. The same (seed, name) pair always
/// yields the same stream.
Rng child_stream(std::uint64_t master_seed, std::string_view name);

double uniform01(Rng& rng);

}  // namespace crl
