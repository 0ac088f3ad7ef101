#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "cpslab/common.hpp"
#include "cpslab/paths.hpp"

namespace cpslab {

enum class LadderMode { multiplicative, additive };

struct LadderOptions {
    /// d = 1 only: move the anchor to the exact barrier so the walk stays on the
    /// grid x0 (1+eps)^k (or x0 + k eps in additive mode).
    bool snap = true;
    /// Anchor used at tau_0 instead of S_0 (must be inside S_0's band).
    std::optional<std::vector<double>> initial_anchor;
    std::size_t max_stops = 1'000'000;
};

struct LadderStop {
    std::size_t grid_index = 0;
    double tau = 0.0;
    std::vector<double> anchor;
    /// d = 1: sign of the move (+1/-1); d >= 2: 1 for a move. 0 at retirement and at n = 0.
    int mark = 0;
    /// Anchor position on the eps-grid relative to the initial anchor, per coordinate.
    std::vector<int> level;
};

struct SnapDiagnostics {
    /// Largest |log(S_tau / anchor)| at a stop (snapped) or log-overshoot past the barrier (unsnapped).
    double max_overshoot = 0.0;
    /// Stops emitted at the same grid time because one grid step crossed several levels.
    std::size_t multi_level_crossings = 0;
};

/// Stopping-time ladder of a path: tau_0 = 0, tau_{n+1} = first grid time at which
/// some coordinate leaves the open band around the current anchor, and a final
/// stop at T with mark 0.
struct LadderSkeleton {
    double eps = 0.0;
    LadderMode mode = LadderMode::multiplicative;
    std::size_t dim = 1;
    bool snapped = false;
    std::vector<LadderStop> stops;
    std::size_t retired_at = 0;  // index n* of the stop at T
    SnapDiagnostics diagnostics;

    std::size_t size() const { return stops.size(); }
};

/// True iff `value` is strictly inside the open band around `anchor`.
bool inside_band(double value, double anchor, double eps, LadderMode mode);

LadderSkeleton extract_ladder(const SamplePath& path, double eps, LadderMode mode = LadderMode::multiplicative,
                              const LadderOptions& options = {});

std::vector<LadderSkeleton> extract_ladders(const std::vector<SamplePath>& paths, double eps, LadderMode mode,
                                            const LadderOptions& options = {}, Exec exec = {});

/// Delta_n = anchor_n - anchor_{n-1} for n = 1..n*, zero on the retirement step.
std::vector<std::vector<double>> ladder_increments(const LadderSkeleton& skeleton);

namespace reference {

std::vector<LadderSkeleton> extract_ladders(const std::vector<SamplePath>& paths, double eps, LadderMode mode,
                                            const LadderOptions& options = {});

}  // namespace reference

}  // namespace cpslab
