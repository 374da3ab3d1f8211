#pragma once

#include <cstdint>
#include <random>

#include "tensorcov/tensor.hpp"

namespace tcov {

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic normal stream keyed by (seed, stream). Distinct streams are
/// independent, so replicates can be drawn in any order or in parallel.
/// Normals come from Box-Muller on the raw mt19937_64 output so the values
/// do not depend on the standard library's distribution implementation.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream);

    double uniform();  // in (0, 1)
    double normal();
    VectorXd normals(Index n);

private:
    std::mt19937_64 engine_;
    double spare_ = 0;
    bool has_spare_ = false;
};

} // namespace tcov
