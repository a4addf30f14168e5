#pragma once

#include <cstdint>

#include "mfp/types.hpp"

namespace mfp {

std::uint64_t mix64(std::uint64_t z);

// Seed of substream `id` under `master`; distinct ids give decorrelated engines.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t id);

// M blocks of N x d increments, each coordinate Normal(0, dt). Particle i draws
// from its own engine seeded with derive_seed(seed, stream_base + i).
Path brownian_increments(std::uint64_t seed, int N, int M, int d, double dt, std::uint64_t stream_base = 0);

// Sum consecutive groups of `factor` increments.
Path coarsen(const Path& dW, int factor);

} // namespace mfp
