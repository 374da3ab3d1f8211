#pragma once

#include <set>
#include <utility>

#include "tensorcov/tensor.hpp"

namespace tcov {

/// Off-diagonal nonzero pattern of a square matrix, stored as unordered
/// pairs i < j (the symmetric partner is implied).
struct SupportPattern {
    Index dim = 0;
    std::set<std::pair<Index, Index>> pairs;
    double threshold = 0;

    bool contains(Index i, Index j) const
    {
        if (i == j) return false;
        return pairs.count(i < j ? std::pair{i, j} : std::pair{j, i}) > 0;
    }
    Index size() const { return static_cast<Index>(pairs.size()); }
};

} // namespace tcov
