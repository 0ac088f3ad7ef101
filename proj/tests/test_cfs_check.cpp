#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cpslab/cfs_check.hpp"

using namespace cpslab;

namespace {

// Discretely monitored P(|sigma W_{k dt}| < eta, k = 1..steps) by kernel recursion on a
// midpoint grid of (-eta, eta).
double tube_kernel(double sigma, double dt, std::size_t steps, double eta, std::size_t cells = 801)
{
    const double h = 2.0 * eta / double(cells);
    const double sd = sigma * std::sqrt(dt);
    auto phi = [&](double z) { return std::exp(-0.5 * z * z / (sd * sd)) / (sd * std::sqrt(2.0 * std::numbers::pi)); };
    std::vector<double> x(cells), p(cells), q(cells);
    for (std::size_t i = 0; i < cells; ++i)
        x[i] = -eta + (double(i) + 0.5) * h;
    for (std::size_t i = 0; i < cells; ++i)
        p[i] = phi(x[i]);
    std::vector<double> kern(2 * cells);
    for (std::size_t d = 0; d < 2 * cells; ++d)
        kern[d] = phi((double(d) - double(cells)) * h);
    for (std::size_t k = 1; k < steps; ++k) {
        for (std::size_t j = 0; j < cells; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < cells; ++i)
                s += p[i] * kern[j + cells - i];
            q[j] = s * h;
        }
        std::swap(p, q);
    }
    double total = 0.0;
    for (double v : p)
        total += v * h;
    return total;
}

// Continuous-time P(sup_{[0,tau]} |sigma W| < a), eigenfunction series.
double tube_series(double sigma, double tau, double a)
{
    double s = 0.0;
    for (int n = 0; n < 50; ++n) {
        const double k = 2.0 * n + 1.0;
        s += (n % 2 ? -1.0 : 1.0) / k * std::exp(-k * k * std::numbers::pi * std::numbers::pi * sigma * sigma * tau / (8.0 * a * a));
    }
    return 4.0 / std::numbers::pi * s;
}

ContinuationSampler arithmetic_bm(double sigma)
{
    return [sigma](const SamplePath& path, std::size_t v, std::size_t n, std::uint64_t seed) {
        std::vector<SamplePath> out(n, path);
        const auto& g = *path.grid;
        for (std::size_t j = 0; j < n; ++j) {
            auto rng = stream_rng(seed, j);
            std::normal_distribution<double> z;
            double s = path.value(v);
            for (std::size_t k = v + 1; k < g.size(); ++k) {
                s += sigma * std::sqrt(g[k] - g[k - 1]) * z(rng);
                out[j].values[k] = s;
            }
        }
        return out;
    };
}

std::vector<LadderSkeleton> gfbm_skeletons(double h, std::size_t n, std::uint64_t seed, double eps,
                                           std::vector<SamplePath>* keep = nullptr)
{
    FbmSpec s;
    s.hurst = h;
    s.sigma = 0.3;
    s.s0 = 100.0;
    auto paths = sample_gfbm(s, make_grid(TimeGrid::uniform(1.0, 500)), n, seed);
    auto sk = extract_ladders(paths, eps, LadderMode::multiplicative);
    if (keep)
        *keep = std::move(paths);
    return sk;
}

}  // namespace

TEST(Wilson, MatchesStatsmodels)
{
    const auto a = wilson_interval(5, 100);
    EXPECT_NEAR(a.lower, 0.016848316042600647, 1e-12);
    EXPECT_NEAR(a.upper, 0.13915030290164004, 1e-12);
    const auto b = wilson_interval(0, 50);
    EXPECT_EQ(b.lower, 0.0);
    EXPECT_NEAR(b.upper, 0.11715209171762801, 1e-12);
    const auto c = wilson_interval(37, 40);
    EXPECT_NEAR(c.lower, 0.7482310238479384, 1e-12);
    EXPECT_NEAR(c.upper, 0.9808367446706148, 1e-12);
}

TEST(TubeOracle, KernelApproachesSeries)
{
    const double cont = tube_series(5.0, 0.5, 4.0);
    EXPECT_NEAR(cont, 0.485, 5e-3);
    const double coarse = tube_kernel(5.0, 0.5 / 50, 50, 4.0);
    const double fine = tube_kernel(5.0, 0.5 / 400, 400, 4.0);
    EXPECT_GT(coarse, fine);
    EXPECT_GT(fine, cont);
    EXPECT_LT(fine - cont, 0.6 * (coarse - cont));
}

TEST(Tube, MonteCarloMatchesKernel)
{
    const std::size_t steps = 40, v = 20;
    const auto g = make_grid(TimeGrid::uniform(1.0, steps));
    SamplePath hist{g, 1, std::vector<double>(steps + 1, 100.0)};
    TubeQuery q;
    q.v = v;
    q.eta = 4.0;
    q.draws = 20000;
    q.target.assign(steps + 1 - v, 100.0);
    const auto r = tube_probability(hist, q, arithmetic_bm(5.0), 3);
    const double exact = tube_kernel(5.0, 1.0 / double(steps), steps - v, 4.0);
    EXPECT_NEAR(r.probability.estimate, exact, 4.0 * r.probability.stderr_);
    EXPECT_TRUE(r.evidence);
    EXPECT_EQ(r.draws, 20000u);
}

TEST(Tube, RejectsMismatchedTarget)
{
    const auto g = make_grid(TimeGrid::uniform(1.0, 10));
    SamplePath hist{g, 1, std::vector<double>(11, 100.0)};
    TubeQuery q;
    q.v = 5;
    q.eta = 1.0;
    q.draws = 10;
    q.target.assign(6, 101.0);
    EXPECT_THROW(tube_probability(hist, q, arithmetic_bm(1.0), 1), DomainError);
    q.target.assign(5, 100.0);
    EXPECT_THROW(tube_probability(hist, q, arithmetic_bm(1.0), 1), DomainError);
}

TEST(Tube, FractionalContinuation)
{
    FbmSpec s;
    s.hurst = 0.7;
    s.sigma = 0.3;
    s.s0 = 100.0;
    const auto g = make_grid(TimeGrid::uniform(1.0, 100));
    const auto path = sample_gfbm(s, g, 1, 5).front();
    TubeQuery q;
    q.v = 50;
    q.eta = 0.1 * 100.0;
    q.draws = 2000;
    q.target.assign(51, path.value(50));
    ContinuationSampler sampler = [&](const SamplePath& p, std::size_t v, std::size_t n, std::uint64_t seed) {
        return continue_gfbm(p, v, s, n, seed);
    };
    const auto r = tube_probability(path, q, sampler, 8);
    EXPECT_TRUE(r.evidence);
    EXPECT_GT(r.probability.lower, 0.0);
}

TEST(MarkPositivity, FractionalPathsShowAllMarks)
{
    const auto sk = gfbm_skeletons(0.7, 10000, 1, 0.1);
    const auto a = mark_positivity(sk, 200);
    EXPECT_GT(a.populated, 0u);
    EXPECT_EQ(a.flagged, 0u);
    EXPECT_TRUE(a.passed);
}

TEST(MarkPositivity, AbsorbedPathsAreFlagged)
{
    std::vector<SamplePath> paths;
    gfbm_skeletons(0.5, 4000, 2, 0.05, &paths);
    const double barrier = 100.0 * 1.05 * 1.05;
    const auto frozen = freeze_at_level(paths, barrier);
    for (const auto& p : frozen) {
        bool hit = false;
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (hit)
                EXPECT_EQ(p.value(k), p.value(k - 1));
            hit = hit || p.value(k) >= barrier;
        }
    }
    const auto sk = extract_ladders(frozen, 0.05, LadderMode::multiplicative);
    const auto a = mark_positivity(sk, 200);
    EXPECT_GT(a.flagged, 0u);
    EXPECT_FALSE(a.passed);
    bool level_two = false;
    for (const auto& r : a.rows)
        if (r.flagged && r.level == 2) {
            level_two = true;
            EXPECT_EQ(r.down, 0.0);
        }
    EXPECT_TRUE(level_two);
}

TEST(HullAudit, IndependentGbmBucketsAreInterior)
{
    GbmSpec spec{{0.0, 0.0}, {0.1, 0.08}, {100.0, 100.0}, {}};
    const auto paths = sample_gbm(spec, make_grid(TimeGrid::uniform(1.0, 200)), 3000, 3);
    const auto sk = extract_ladders(paths, 0.05, LadderMode::multiplicative);
    const auto a = interior_hull_audit(sk, 200);
    EXPECT_GT(a.populated, 0u);
    EXPECT_TRUE(a.passed);

    IncrementCloud one_sided{{Eigen::VectorXd::Constant(2, 1.0), Eigen::VectorXd::Zero(2)}, {0.5, 0.5}};
    EXPECT_FALSE(interior_hull_audit(one_sided).passed);
}
