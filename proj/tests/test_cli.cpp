#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cpslab/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("cpslab_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_config(const json& j, const std::string& name = "config.json")
    {
        const auto p = dir_ / name;
        std::ofstream(p) << j.dump(2);
        return p;
    }

    Result run(const std::string& args)
    {
        const auto err = dir_ / "stderr.txt";
        const std::string cmd = std::string(CPSLAB_CLI) + " " + args + " > /dev/null 2> " + err.string();
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.err = cpslab::read_file(err);
        return r;
    }

    json manifest(const fs::path& out) { return json::parse(cpslab::read_file(out / "manifest.json")); }

    static json base_config()
    {
        json payoff = {{"left_limit", 0.0}, {"right_slope", 1.0}, {"lower_bound", 0.0}};
        payoff["samples"] = json::array();
        for (int i = 1; i <= 40; ++i)
            payoff["samples"].push_back({10.0 * i, std::max(10.0 * i - 100.0, 0.0)});
        return {{"seed", 7},
                {"n_paths", 200},
                {"model", {{"type", "gbm"}, {"s0", 100.0}, {"mu", 0.0}, {"sigma", 0.2}}},
                {"grid", {{"T", 1.0}, {"N", 100}}},
                {"ladder", {{"eps", 0.05}}},
                {"cps", {{"schedule", {{"type", "constant"}, {"alpha", 0.5}}}}},
                {"facelift", {{"payoff", payoff}, {"eps", {0.05, 0.02}}, {"delta", 1.0}}},
                {"audit", {{"min_count", 50}, {"tube", {{"v_index", 50}, {"eta", 10.0}, {"draws", 200}}}}}};
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, RunIsReproducibleAcrossWorkers)
{
    const auto cfg = write_config(base_config());
    ASSERT_EQ(run("run --config " + cfg.string() + " --workers 1 --out " + (dir_ / "a").string()).code, 0);
    ASSERT_EQ(run("run --config " + cfg.string() + " --workers 3 --out " + (dir_ / "b").string()).code, 0);
    const auto a = manifest(dir_ / "a"), b = manifest(dir_ / "b");
    EXPECT_EQ(a["artifacts"], b["artifacts"]);
    EXPECT_EQ(a["config_hash"], b["config_hash"]);
    for (const char* f : {"paths.csv", "skeletons.csv", "skeletons.json", "cps.csv", "cps_summary.json", "squeeze.csv",
                          "squeeze.json", "audit_marks.csv", "audit.json"}) {
        EXPECT_TRUE(a["artifacts"].contains(f)) << f;
        EXPECT_EQ(cpslab::read_file(dir_ / "a" / f), cpslab::read_file(dir_ / "b" / f)) << f;
    }
}

TEST_F(Cli, StagesEqualRun)
{
    const auto cfg = write_config(base_config());
    const std::string out = " --out " + (dir_ / "s").string();
    for (const char* stage : {"simulate", "ladder", "cps", "facelift", "audit"})
        ASSERT_EQ(run(std::string(stage) + " --config " + cfg.string() + out).code, 0) << stage;
    ASSERT_EQ(run("run --config " + cfg.string() + " --out " + (dir_ / "r").string()).code, 0);
    EXPECT_EQ(manifest(dir_ / "s")["artifacts"], manifest(dir_ / "r")["artifacts"]);
}

TEST_F(Cli, SeedOverrideChangesResults)
{
    const auto cfg = write_config(base_config());
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "a").string()).code, 0);
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --seed 8 --out " + (dir_ / "b").string()).code, 0);
    EXPECT_NE(manifest(dir_ / "a")["artifacts"]["paths.csv"], manifest(dir_ / "b")["artifacts"]["paths.csv"]);
    EXPECT_NE(manifest(dir_ / "a")["config_hash"], manifest(dir_ / "b")["config_hash"]);
    EXPECT_EQ(manifest(dir_ / "b")["seed"], 8);
}

TEST_F(Cli, RefusesPayoffWithoutRightSlope)
{
    auto j = base_config();
    j["facelift"]["payoff"].erase("right_slope");
    const auto r = run("run --config " + write_config(j).string() + " --out " + (dir_ / "o").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("right_slope"), std::string::npos) << r.err;
}

TEST_F(Cli, PayoffFromFile)
{
    auto j = base_config();
    std::ofstream(dir_ / "put.json") << json({{"samples", {{50.0, 50.0}, {100.0, 0.0}, {150.0, 0.0}}},
                                              {"left_limit", 100.0},
                                              {"right_slope", 0.0},
                                              {"lower_bound", 0.0}})
                                            .dump();
    j["facelift"]["payoff"] = "put.json";
    j.erase("audit");
    const auto cfg = write_config(j);
    ASSERT_EQ(run("run --config " + cfg.string() + " --out " + (dir_ / "o").string()).code, 0);
    const auto sq = json::parse(cpslab::read_file(dir_ / "o" / "squeeze.json"));
    for (const auto& row : sq["rows"])
        EXPECT_NEAR(row["upper"].get<double>(), 100.0, 1e-9);
}

TEST_F(Cli, RejectsIncreasingEps)
{
    auto j = base_config();
    j["facelift"]["eps"] = {0.01, 0.05};
    const auto r = run("run --config " + write_config(j).string() + " --out " + (dir_ / "o").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("facelift.eps"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingFieldsAreNamed)
{
    for (const char* key : {"seed", "n_paths", "grid", "model"}) {
        auto j = base_config();
        j.erase(key);
        const auto r = run("run --config " + write_config(j).string() + " --out " + (dir_ / "o").string());
        EXPECT_EQ(r.code, 1) << key;
        EXPECT_NE(r.err.find(std::string("config.") + key), std::string::npos) << r.err;
    }
    auto j = base_config();
    j["cps"].erase("schedule");
    EXPECT_EQ(run("run --config " + write_config(j).string() + " --out " + (dir_ / "o").string()).code, 1);
}

TEST_F(Cli, StageWithoutUpstreamArtifact)
{
    const auto cfg = write_config(base_config());
    const auto r = run("ladder --config " + cfg.string() + " --out " + (dir_ / "empty").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("paths.csv"), std::string::npos) << r.err;
}

TEST_F(Cli, ConstantPayoffSqueezesToConstant)
{
    auto j = base_config();
    j["n_paths"] = 100;
    j["facelift"] = {{"payoff",
                      {{"samples", {{50.0, 3.0}, {100.0, 3.0}, {200.0, 3.0}}},
                       {"left_limit", 3.0},
                       {"right_slope", 0.0},
                       {"lower_bound", 0.0}}},
                     {"eps", {0.1}}};
    j.erase("audit");
    j.erase("cps");
    ASSERT_EQ(run("run --config " + write_config(j).string() + " --out " + (dir_ / "o").string()).code, 0);
    std::istringstream csv(cpslab::read_file(dir_ / "o" / "squeeze.csv"));
    std::string head, row;
    std::getline(csv, head);
    std::getline(csv, row);
    EXPECT_EQ(head, "eps,upper,lower,envelope,mc_stderr_lower,n_paths,seed");
    std::vector<double> f;
    std::istringstream rs(row);
    for (std::string cell; std::getline(rs, cell, ',');)
        f.push_back(cpslab::parse_double(cell));
    ASSERT_EQ(f.size(), 7u);
    EXPECT_EQ(f[0], 0.1);
    EXPECT_NEAR(f[1], 3.0, 1e-12);
    EXPECT_NEAR(f[2], 3.0, 1e-12);
    EXPECT_NEAR(f[3], 3.0, 1e-12);
    EXPECT_EQ(f[5], 100.0);
}

TEST_F(Cli, MultiAssetRun)
{
    json j = {{"seed", 3},
              {"n_paths", 300},
              {"model", {{"type", "gbm"}, {"s0", {100.0, 50.0}}, {"mu", 0.0}, {"sigma", {0.1, 0.08}}}},
              {"grid", {{"T", 1.0}, {"N", 100}}},
              {"ladder", {{"target_spread", 0.1}}},
              {"cps", {{"min_bucket", 30}}},
              {"audit", {{"min_count", 100}}}};
    ASSERT_EQ(run("run --config " + write_config(j).string() + " --out " + (dir_ / "o").string()).code, 0);
    const auto s = json::parse(cpslab::read_file(dir_ / "o" / "cps_summary.json"));
    EXPECT_EQ(s["construction"], "esscher_chain");
    EXPECT_TRUE(s["sandwich"]["passed"].get<bool>());
    EXPECT_TRUE(fs::exists(dir_ / "o" / "audit_hull.csv"));
}

TEST_F(Cli, UsageErrors)
{
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("run --config /nonexistent.json").code, 1);
    EXPECT_EQ(run("--version").code, 0);
}
