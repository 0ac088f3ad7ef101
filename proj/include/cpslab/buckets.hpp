#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "cpslab/skeleton.hpp"
#include "cpslab/walk.hpp"

namespace cpslab {

/// Key of a conditioning bucket: (index n of the mark, walk level before it).
using MarkKey = std::pair<std::size_t, int>;

/// Weighted mark counts per (n, level) bucket, down/retire/up.
struct MarkCounts {
    std::map<MarkKey, std::array<double, 3>> counts;

    void add(std::size_t n, int level, int mark, double weight = 1.0);
    double total(const MarkKey& key) const;
    /// (count + smoothing) / (total + 3 smoothing); an unseen bucket gets (1/3, 1/3, 1/3).
    MarkProbs probs(std::size_t n, int level, double smoothing) const;
    /// Merge in key order (addition is exact per key, so order never matters).
    void merge(const MarkCounts& other);
};

/// Marks of every skeleton, bucketed by (n, level before the mark). Skeletons must be
/// d = 1; a skeleton whose last stop is not a retirement contributes its moves only.
MarkCounts count_marks(const std::vector<LadderSkeleton>& skeletons, const std::vector<double>& weights = {});

/// Synthetic snapped skeleton carrying the marks of a walk (stop n at grid index n).
LadderSkeleton skeleton_from_walk(const RetiredWalk& walk);

/// Skeleton with the given marks that may stop before retirement (a censored history).
LadderSkeleton skeleton_from_marks(double x0, double eps, const std::vector<int>& marks);

}  // namespace cpslab
