#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpslab/common.hpp"
#include "cpslab/facelift.hpp"
#include "cpslab/paths.hpp"
#include "cpslab/skeleton.hpp"
#include "cpslab/walk.hpp"

namespace cpslab {

inline constexpr const char* kVersion = "0.1.0";

struct ModelConfig {
    std::string type;  // gbm | gfbm | integrated
    GbmSpec gbm;
    FbmSpec fbm;
    double drift_rate = 0.0;  // f_t = drift_rate * t for gfbm / integrated

    std::size_t dim() const { return type == "gbm" ? gbm.dim() : 1; }
    double s0() const { return type == "gbm" ? gbm.s0.front() : fbm.s0; }
};

struct LadderConfig {
    double eps = 0.0;
    std::optional<double> target_spread;
    LadderMode mode = LadderMode::multiplicative;
    bool snap = true;
};

struct ScheduleConfig {
    std::string type;  // constant | integrability
    double alpha = 0.5;
};

struct CpsConfig {
    std::optional<ScheduleConfig> schedule;
    double smoothing = 1.0;
    std::size_t min_bucket = 30;
};

struct FaceliftConfig {
    PayoffCurve payoff;
    std::vector<double> eps;
    std::optional<double> delta;
};

struct TubeConfig {
    std::size_t v_index = 0;
    double eta = 0.0;
    std::size_t draws = 0;
};

struct AuditConfig {
    std::size_t min_count = 200;
    std::optional<TubeConfig> tube;
};

struct ExperimentConfig {
    nlohmann::json raw;
    std::uint64_t seed = 0;
    std::size_t n_paths = 0;
    int workers = 1;
    std::filesystem::path output = "out";
    ModelConfig model;
    double horizon = 1.0;
    std::size_t steps = 0;
    std::optional<LadderConfig> ladder;
    std::optional<CpsConfig> cps;
    std::optional<FaceliftConfig> facelift;
    std::optional<AuditConfig> audit;

    /// FNV-1a of the canonical config (keys sorted, seed override applied, workers
    /// and output directory removed: neither changes results).
    std::string hash() const;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::filesystem::path> output;
};

/// Validates with field paths in the messages (ValidationError). Relative payoff file
/// names resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".",
                              const Overrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& file, const Overrides& overrides = {});

RetirementSchedule make_schedule(const ScheduleConfig& sc, double x0, double eps);

std::vector<SamplePath> simulate_model(const ExperimentConfig& cfg);

struct StageReport {
    std::vector<std::string> artifacts;
    nlohmann::json summary;
};

StageReport stage_simulate(const ExperimentConfig& cfg);
StageReport stage_ladder(const ExperimentConfig& cfg);
StageReport stage_cps(const ExperimentConfig& cfg);
StageReport stage_facelift(const ExperimentConfig& cfg);
StageReport stage_audit(const ExperimentConfig& cfg);
/// Every configured stage in order.
StageReport stage_run(const ExperimentConfig& cfg);

}  // namespace cpslab
