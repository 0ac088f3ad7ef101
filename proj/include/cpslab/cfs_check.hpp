#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cpslab/buckets.hpp"
#include "cpslab/cps.hpp"
#include "cpslab/esscher.hpp"
#include "cpslab/paths.hpp"
#include "cpslab/skeleton.hpp"

namespace cpslab {

/// Two-sided Wilson score interval for a binomial proportion.
struct Proportion {
    double estimate = 0.0;
    double stderr_ = 0.0;
    double lower = 0.0;
    double upper = 1.0;
};

Proportion wilson_interval(std::size_t hits, std::size_t n, double z = 2.5758293035489004);

struct TubeQuery {
    std::size_t v = 0;          // grid index of the history cut
    std::vector<double> target;  // f at grid indices v..N
    double eta = 0.0;
    std::size_t draws = 0;
};

struct TubeResult {
    Proportion probability;  // 99% Wilson bounds
    std::size_t hits = 0;
    std::size_t draws = 0;
    bool evidence = false;  // lower confidence bound > 0
};

/// P(sup_{t in [v,T]} |S_t - f_t| < eta | history up to v) from conditional continuations.
TubeResult tube_probability(const SamplePath& history, const TubeQuery& query, const ContinuationSampler& sampler,
                            std::uint64_t seed);

struct MarkRow {
    std::size_t stop = 0;
    int level = 0;
    double down = 0.0;
    double retire = 0.0;
    double up = 0.0;
    bool populated = false;
    bool flagged = false;  // populated and some mark never observed
};

struct MarkAudit {
    std::vector<MarkRow> rows;
    std::size_t populated = 0;
    std::size_t flagged = 0;
    bool passed = false;  // at least one populated bucket and none flagged
};

/// Empirical mark frequencies per (stop, level) bucket of d = 1 skeletons; a bucket with
/// at least `min_count` samples must show all three marks.
MarkAudit mark_positivity(const std::vector<LadderSkeleton>& skeletons, std::size_t min_count = 200);

struct HullRow {
    std::size_t stop = 0;
    std::vector<int> level;
    std::size_t size = 0;
    double zero_mass = 0.0;
    InteriorMargin margin;
    bool populated = false;
    bool passed = false;
};

struct HullAudit {
    std::vector<HullRow> rows;
    std::size_t populated = 0;
    std::size_t failed = 0;
    bool passed = false;
};

/// check_interior and positive retired mass for every (stop, level-vector) bucket of
/// skeletons with at least `min_count` samples.
HullAudit interior_hull_audit(const std::vector<LadderSkeleton>& skeletons, std::size_t min_count = 200);

/// Audit on a single increment cloud (one synthetic bucket).
HullRow interior_hull_audit(const IncrementCloud& cloud);

/// Paths held constant from the first grid time at which they reach `level` (a
/// martingale absorbed at a barrier: fails conditional full support).
std::vector<SamplePath> freeze_at_level(const std::vector<SamplePath>& paths, double level);

}  // namespace cpslab
