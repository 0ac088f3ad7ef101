#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "cpslab/buckets.hpp"
#include "cpslab/cps.hpp"

using namespace cpslab;

namespace {

std::vector<SamplePath> gfbm_paths(double h, std::size_t n, std::size_t steps, std::uint64_t seed)
{
    FbmSpec s;
    s.hurst = h;
    s.sigma = 0.3;
    s.s0 = 100.0;
    return sample_gfbm(s, make_grid(TimeGrid::uniform(1.0, steps)), n, seed);
}

std::vector<LadderSkeleton> walk_skeletons(std::size_t n, std::uint64_t seed, double eps = 0.1)
{
    std::vector<LadderSkeleton> out;
    for (const auto& w : sample_reference_walks(1.0, eps, MarkProbs{0.4, 0.2, 0.4}, 500, n, seed))
        out.push_back(skeleton_from_walk(w));
    return out;
}

}  // namespace

TEST(Buckets, CountsAndSmoothing)
{
    MarkCounts mc;
    mc.add(1, 0, +1);
    mc.add(1, 0, +1);
    mc.add(1, 0, 0);
    const auto p = mc.probs(1, 0, 1.0);
    EXPECT_NEAR(p.up, 3.0 / 6.0, 1e-15);
    EXPECT_NEAR(p.retire, 2.0 / 6.0, 1e-15);
    EXPECT_NEAR(p.down, 1.0 / 6.0, 1e-15);
    const auto unseen = mc.probs(7, 3, 1.0);
    EXPECT_NEAR(unseen.down, 1.0 / 3.0, 1e-15);
    EXPECT_EQ(mc.total({1, 0}), 3.0);
}

TEST(Buckets, SkeletonFromMarks)
{
    const auto sk = skeleton_from_marks(100.0, 0.1, {+1, +1, -1, 0});
    ASSERT_EQ(sk.stops.size(), 5u);
    EXPECT_NEAR(sk.stops[3].anchor[0], 110.0, 1e-12);
    EXPECT_EQ(sk.stops[4].mark, 0);
    const auto mc = count_marks({sk});
    EXPECT_EQ(mc.total({2, 1}), 1.0);
}

TEST(Cps1d, ConstantScheduleOnWalks)
{
    const auto sk = walk_skeletons(20000, 1);
    const auto r = build_cps_1d(sk, {}, RetirementSchedule::constant(0.5));
    EXPECT_TRUE(r.certificate.passed);
    EXPECT_GT(r.certificate.checked, 3u);
    EXPECT_GT(r.certificate.likelihood_mean, 0.0);
    for (const auto& cp : r.cps.paths) {
        EXPECT_EQ(cp.prefix_likelihood.front(), 1.0);
        EXPECT_EQ(cp.prefix_likelihood.back(), cp.likelihood);
        for (std::size_t n = 0; n < cp.stops(); ++n)
            EXPECT_EQ(cp.shadow[n], cp.price[n]);
    }
}

TEST(Cps1d, EmpiricalLawIsAMartingaleWhereMarksAreSeen)
{
    // negligible smoothing: buckets are the empirical law, and the early buckets see every mark
    const auto sk = walk_skeletons(20000, 2);
    CpsOptions o;
    o.smoothing = 1e-9;
    const auto r = build_cps_1d(sk, {}, RetirementSchedule::constant(0.5), o);
    for (std::size_t n : {1u, 2u}) {
        double mean = 0.0;
        for (const auto& cp : r.cps.paths)
            mean += cp.prefix_likelihood[std::min(n, cp.prefix_likelihood.size() - 1)];
        EXPECT_NEAR(mean / double(r.cps.paths.size()), 1.0, 1e-7) << n;
    }
}

TEST(Cps1d, ExactTreeEquivalence)
{
    // leaves of the enumerated tree as weighted skeletons: the empirical law reproduces the tree
    const MarkProbs ref{0.35, 0.25, 0.4};
    const auto sched = RetirementSchedule::constant(0.5);
    const auto tree = enumerate_tree(1.0, 0.1, sched, ref, 8);
    std::vector<LadderSkeleton> sk;
    std::vector<double> w;
    std::map<int, double> expected;
    for (const auto& node : tree.nodes) {
        if (tree.internal(node))
            continue;
        std::vector<int> marks;
        for (long at = static_cast<long>(&node - tree.nodes.data()); tree.nodes[at].parent >= 0;
             at = tree.nodes[at].parent) {
            const auto& cur = tree.nodes[at];
            const auto& par = tree.nodes[cur.parent];
            marks.insert(marks.begin(), cur.retired ? 0 : cur.level - par.level);
        }
        sk.push_back(skeleton_from_marks(1.0, 0.1, marks));
        w.push_back(node.p_ref);
        if (node.retired)
            expected[node.level] += node.p_ref * node.likelihood;
    }
    CpsOptions o;
    o.smoothing = 0.0;
    o.sample_weights = w;
    const auto r = build_cps_1d(sk, {}, sched, o);
    for (const auto& [lvl, m] : expected)
        EXPECT_NEAR(r.terminal_law.at(lvl), m, 1e-12) << lvl;
    EXPECT_TRUE(r.certificate.passed);
    for (const auto& s : r.certificate.stops)
        EXPECT_NEAR(s.residual, 0.0, 1e-12);
}

TEST(Cps1d, SandwichOnFractionalPaths)
{
    for (double h : {0.3, 0.7}) {
        const auto paths = gfbm_paths(h, 300, 1000, 5);
        const double eps = 0.1;
        const auto sk = extract_ladders(paths, eps, LadderMode::multiplicative);
        const auto r = build_cps_1d(sk, paths, RetirementSchedule::constant(0.5));
        EXPECT_TRUE(r.sandwich.passed) << r.sandwich.message;
        EXPECT_NEAR(r.cps.eps_effective, std::pow(1.1, 3) - 1.0, 1e-15);
        EXPECT_NEAR(r.sandwich.grid_bound, 3.0 * std::log(1.1), 1e-15);
    }
}

TEST(Cps1d, WorkerInvariance)
{
    const auto paths = gfbm_paths(0.5, 64, 300, 9);
    const auto sk = extract_ladders(paths, 0.05, LadderMode::multiplicative);
    const auto a = build_cps_1d(sk, paths, RetirementSchedule::constant(0.5), {}, Exec{1});
    const auto b = build_cps_1d(sk, paths, RetirementSchedule::constant(0.5), {}, Exec{4});
    for (std::size_t p = 0; p < a.cps.paths.size(); ++p)
        EXPECT_EQ(a.cps.paths[p].prefix_likelihood, b.cps.paths[p].prefix_likelihood);
    EXPECT_EQ(a.terminal_law, b.terminal_law);
}

TEST(Sandwich, DetectsCorruption)
{
    const auto paths = gfbm_paths(0.5, 10, 500, 2);
    const auto sk = extract_ladders(paths, 0.1, LadderMode::multiplicative);
    auto r = build_cps_1d(sk, paths, RetirementSchedule::constant(0.5));
    r.cps.paths[3].shadow[0] *= 1.5;
    const auto rep = verify_sandwich(r.cps, paths, 0.1);
    EXPECT_FALSE(rep.passed);
    EXPECT_EQ(rep.worst_path, 3u);
    EXPECT_FALSE(rep.message.empty());
}

TEST(CpsMulti, IndependentGbmChain)
{
    GbmSpec spec{{0.05, 0.0}, {0.2, 0.3}, {100.0, 100.0}, {}};
    const auto paths = sample_gbm(spec, make_grid(TimeGrid::uniform(1.0, 500)), 3000, 4);
    const auto sk = extract_ladders(paths, 0.1, LadderMode::multiplicative);
    const auto r = build_cps_multi(sk, paths);
    EXPECT_LE(r.worst_moment_error, 1e-8);
    for (const auto& s : r.solves) {
        EXPECT_NEAR(s.result.moments.mass, 1.0, 1e-8);
        EXPECT_LT(s.result.moments.mean.norm(), 1e-8 * std::max(1.0, s.result.moments.mean.size() * 1.0));
        EXPECT_LE(s.result.moments.second, s.result.eta + 1e-8);
        EXPECT_LE(s.result.moments.off_zero, s.result.eta + 1e-8);
    }
    EXPECT_LE(r.l2_total, 2.0 + 3.0 * r.l2_stderr);
    EXPECT_TRUE(r.sandwich.passed) << r.sandwich.message;
    EXPECT_TRUE(r.certificate.passed);
}

TEST(CpsMulti, WorkerInvariance)
{
    GbmSpec spec{{0.0, 0.0}, {0.2, 0.3}, {100.0, 50.0}, {}};
    const auto paths = sample_gbm(spec, make_grid(TimeGrid::uniform(1.0, 200)), 400, 6);
    const auto sk = extract_ladders(paths, 0.1, LadderMode::multiplicative);
    const auto a = build_cps_multi(sk, paths, {}, Exec{1});
    const auto b = build_cps_multi(sk, paths, {}, Exec{3});
    for (std::size_t p = 0; p < a.cps.paths.size(); ++p)
        EXPECT_EQ(a.cps.paths[p].prefix_likelihood, b.cps.paths[p].prefix_likelihood);
    EXPECT_EQ(a.l2_total, b.l2_total);
}

TEST(ConstructionEps, CubeRoot)
{
    EXPECT_NEAR(std::pow(1.0 + construction_eps(0.331), 3), 1.331, 1e-14);
    EXPECT_NEAR(construction_eps(0.331), 0.1, 1e-14);
    EXPECT_THROW(construction_eps(0.0), DomainError);
}

TEST(Shadow, NestedEstimateStaysNearAnchor)
{
    const double eps = 0.1;
    GbmSpec spec{{0.0}, {0.3}, {100.0}, {}};
    const auto paths = sample_gbm(spec, make_grid(TimeGrid::uniform(1.0, 200)), 2000, 3);
    const auto sk = extract_ladders(paths, eps, LadderMode::multiplicative);
    const auto counts = count_marks(sk);
    const auto sched = RetirementSchedule::constant(0.5);
    ContinuationSampler sampler = [&](const SamplePath& p, std::size_t v, std::size_t n, std::uint64_t s) {
        return continue_gbm(p, v, spec, n, s);
    };
    const auto& path = paths[0];
    const std::size_t v = 100;
    std::size_t n = 0;
    while (n + 1 < sk[0].stops.size() && sk[0].stops[n + 1].grid_index <= v && sk[0].stops[n + 1].mark != 0)
        ++n;
    const double x = sk[0].stops[n].anchor[0];
    const auto est = interpolate_shadow(path, v, eps, sched, counts, 1.0, sampler, 4000, 11);
    EXPECT_GT(est.ess, 10.0);
    EXPECT_GT(est.value, x / std::pow(1 + eps, 2));
    EXPECT_LT(est.value, x * std::pow(1 + eps, 2));
}
