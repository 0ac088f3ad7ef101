#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpslab/cps.hpp"
#include "cpslab/facelift.hpp"
#include "cpslab/paths.hpp"
#include "cpslab/skeleton.hpp"

namespace cpslab {

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);
double parse_double(const std::string& s);

/// Long format `path_id,t,asset_0,..,asset_{d-1}`, rows of a path in grid order.
void write_paths_csv(std::ostream& os, const std::vector<SamplePath>& paths);
std::vector<SamplePath> read_paths_csv(std::istream& is);

/// `path_id,n,k,tau,anchor_0..,level_0..,mark`; the sidecar carries eps, mode and diagnostics.
void write_skeletons_csv(std::ostream& os, const std::vector<LadderSkeleton>& skeletons);
nlohmann::json skeletons_sidecar(const std::vector<LadderSkeleton>& skeletons);
std::vector<LadderSkeleton> read_skeletons_csv(std::istream& is, const nlohmann::json& sidecar);

/// `path_id,n,tau,S_0..,Stilde_0..,L` with L the running likelihood L_n.
void write_cps_csv(std::ostream& os, const ConsistentPriceSystem& cps);

/// Payoff file: {"samples": [[x, g], ...], "left_limit": number | "inf",
/// "right_slope": number, "lower_bound": number}. Every key is required.
PayoffCurve payoff_from_json(const nlohmann::json& j);

std::string read_file(const std::filesystem::path& p);
/// Throws ValidationError naming the file when it is missing.
std::string read_artifact(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& content);

}  // namespace cpslab
