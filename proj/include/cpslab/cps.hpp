#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cpslab/buckets.hpp"
#include "cpslab/common.hpp"
#include "cpslab/esscher.hpp"
#include "cpslab/paths.hpp"
#include "cpslab/skeleton.hpp"
#include "cpslab/walk.hpp"

namespace cpslab {

/// Shadow price of one path at its skeleton stops. Vectors of d-vectors are flattened
/// stop-major: price[n * dim + i].
struct CpsPath {
    std::size_t dim = 1;
    std::vector<std::size_t> grid_index;
    std::vector<double> tau;
    std::vector<double> price;   // S at the stop
    std::vector<double> shadow;  // S~ at the stop
    std::vector<double> prefix_likelihood;  // L_n, n = 0..n*
    double likelihood = 1.0;

    std::size_t stops() const { return grid_index.size(); }
};

struct ConsistentPriceSystem {
    std::size_t dim = 1;
    double eps = 0.0;
    double eps_effective = 0.0;  // (1+eps)^3 - 1
    std::vector<CpsPath> paths;
    std::vector<double> sample_weights;  // reference weights, sum 1
};

struct StopResidual {
    std::size_t n = 0;
    std::size_t alive = 0;
    double residual = 0.0;  // weighted mean of M_n - M_{n-1} (first coordinate with the largest |z|)
    double stderr_ = 0.0;
    bool checked = false;
    bool pass = true;
};

struct MartingaleCertificate {
    std::vector<StopResidual> stops;
    std::size_t checked = 0;
    std::size_t failures = 0;
    bool passed = true;
    double likelihood_mean = 0.0;
    double likelihood_stderr = 0.0;
};

struct SandwichReport {
    bool passed = true;
    double worst_stop = 0.0;  // max |ln(S~/S)| at stops
    double worst_grid = 0.0;  // max over grid times of the certified |ln(S~/S)|
    double stop_bound = 0.0;  // ln(1+eps) (plus the per-path grid tolerance at check time)
    double grid_bound = 0.0;  // 3 ln(1+eps)
    std::size_t worst_path = 0;
    std::size_t worst_index = 0;
    std::size_t worst_asset = 0;
    double worst_time = 0.0;
    std::vector<double> per_path_worst;  // certified worst |ln ratio| per path
    std::string message;
};

struct CpsOptions {
    double smoothing = 1.0;  // Laplace constant for the reference mark probabilities
    std::size_t min_certificate_paths = 30;
    double certificate_z = 3.0;
    std::size_t min_bucket = 30;        // d >= 2: smallest conditioning bucket solved on its own
    std::vector<double> sample_weights;  // reference weight per skeleton, default equal
    bool throw_on_sandwich = true;
};

struct Cps1dResult {
    ConsistentPriceSystem cps;
    MartingaleCertificate certificate;
    SandwichReport sandwich;
    MarkCounts counts;
    std::map<int, double> terminal_law;  // retirement level -> sum w L / sum w
    double censored_mass = 0.0;          // sum w L of skeletons without a retirement stop
};

/// d = 1 construction: S~ at stop n is the walk value X_n, L = prod Z_n with reference
/// mark probabilities estimated per (n, level) bucket. `paths` may be empty (stop prices
/// then equal the anchors and the sandwich is not audited).
Cps1dResult build_cps_1d(const std::vector<LadderSkeleton>& skeletons, const std::vector<SamplePath>& paths,
                         const RetirementSchedule& schedule, const CpsOptions& options = {}, Exec exec = {});

struct EsscherRecord {
    std::size_t n = 0;       // largest stop index in the bucket
    std::string bucket;      // level vector, "residual" or "tail"
    std::size_t size = 0;
    EsscherResult result;
};

struct CpsMultiResult {
    ConsistentPriceSystem cps;
    MartingaleCertificate certificate;
    SandwichReport sandwich;
    std::vector<EsscherRecord> solves;
    std::vector<double> l2_per_step;  // weighted E|Delta_n|^2
    double l2_total = 0.0;
    double l2_stderr = 0.0;
    double worst_moment_error = 0.0;  // max over solves of the (i), (ii) residuals
    std::size_t pooled_atoms = 0;
};

/// Esscher chain: per stop index n and level-vector bucket, tilt the increments so
/// their weighted mean is 0 with eta_n = 2^-n; sparse or failing buckets are pooled.
CpsMultiResult build_cps_multi(const std::vector<LadderSkeleton>& skeletons, const std::vector<SamplePath>& paths,
                               const CpsOptions& options = {}, Exec exec = {});

/// Audit of S~ against S: ratios at stops and the certified interval
/// [S~_n/(1+eps), S~_n (1+eps)] for grid times between stops n and n+1. The grid
/// tolerance of a path is its largest one-step |ln S_{k+1}/S_k|.
SandwichReport verify_sandwich(const ConsistentPriceSystem& cps, const std::vector<SamplePath>& paths, double eps);

/// Construction eps for a requested spread: (1+target)^(1/3) - 1.
double construction_eps(double target_spread);

using ContinuationSampler =
    std::function<std::vector<SamplePath>(const SamplePath& path, std::size_t v, std::size_t n, std::uint64_t seed)>;

struct ShadowEstimate {
    double value = 0.0;
    double ess = 0.0;  // effective sample size of the continuation weights
    std::size_t draws = 0;
};

/// Nested Monte Carlo S~_t = E_Q[X_inf | F_t] at grid index v of a d = 1 path, by
/// weighting continuation skeletons with the d = 1 model's likelihood increments.
ShadowEstimate interpolate_shadow(const SamplePath& path, std::size_t v, double eps, const RetirementSchedule& schedule,
                                  const MarkCounts& counts, double smoothing, const ContinuationSampler& sampler,
                                  std::size_t draws, std::uint64_t seed);

}  // namespace cpslab
