#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "cpslab/paths.hpp"

using namespace cpslab;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double variance(const std::vector<double>& v)
{
    const double m = mean(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return s / double(v.size() - 1);
}

FbmSpec fbm(double h, double sigma = 0.3)
{
    FbmSpec s;
    s.hurst = h;
    s.sigma = sigma;
    s.s0 = 100.0;
    return s;
}

}  // namespace

TEST(TimeGrid, RejectsBadGrids)
{
    EXPECT_THROW(TimeGrid({0.0}), DomainError);
    EXPECT_THROW(TimeGrid({0.1, 0.2}), DomainError);
    EXPECT_THROW(TimeGrid({0.0, 0.5, 0.5}), DomainError);
    EXPECT_THROW(TimeGrid::uniform(0.0, 10), DomainError);
    const auto g = TimeGrid::uniform(1.0, 4);
    EXPECT_EQ(g.index_of(0.75), 3u);
    EXPECT_THROW(g.index_of(0.3), ValidationError);
}

TEST(FbmCovariance, SymmetricAndBrownianAtHalf)
{
    for (double h : {0.1, 0.3, 0.5, 0.7, 0.9})
        for (double t : {0.0, 0.1, 0.37, 1.0, 2.5})
            for (double s : {0.05, 0.5, 1.0, 3.0})
                EXPECT_EQ(fbm_covariance(t, s, h), fbm_covariance(s, t, h));
    for (double t : {0.0, 0.1, 0.37, 1.0, 2.5})
        for (double s : {0.05, 0.5, 1.0, 3.0})
            EXPECT_NEAR(fbm_covariance(t, s, 0.5), std::min(t, s), 1e-15);
    EXPECT_THROW(fbm_covariance(1.0, 1.0, 1.0), DomainError);
}

TEST(FbmCovariance, FactorReproducesMatrix)
{
    std::vector<double> t;
    for (int k = 1; k <= 200; ++k)
        t.push_back(k / 200.0);
    const auto c = fbm_covariance_matrix(t, 0.7);
    const auto f = factor_covariance(c);
    EXPECT_EQ(f.jitter, 0.0);
    EXPECT_LT((f.lower * f.lower.transpose() - c).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FbmCovariance, JitterRescuesSemidefinite)
{
    Eigen::MatrixXd c(3, 3);
    c << 1, 1, 0, 1, 1, 0, 0, 0, 1;
    const auto f = factor_covariance(c);
    EXPECT_GT(f.jitter, 0.0);
    EXPECT_LE(f.retries, 3);
    Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(3, 3);
    EXPECT_THROW(factor_covariance(bad), NumericalError);
}

TEST(FbmDriver, IncrementVarianceMatchesScaling)
{
    // Var(B_t - B_s) = |t - s|^{2H}
    const auto g = make_grid(TimeGrid::uniform(1.0, 16));
    for (double h : {0.3, 0.7}) {
        const auto x = sample_fbm_driver(h, g, 20000, 11);
        std::vector<double> inc, end;
        for (const auto& row : x) {
            inc.push_back(row[12] - row[4]);
            end.push_back(row[16]);
        }
        const double v_inc = std::pow(0.5, 2 * h);
        // sample variance of a normal: sd = v sqrt(2/(n-1))
        EXPECT_NEAR(variance(inc), v_inc, 4.0 * v_inc * std::sqrt(2.0 / 19999.0)) << h;
        EXPECT_NEAR(variance(end), 1.0, 4.0 * std::sqrt(2.0 / 19999.0)) << h;
        EXPECT_EQ(x[0][0], 0.0);
    }
}

TEST(SampleGbm, LognormalMean)
{
    const auto g = make_grid(TimeGrid::uniform(1.0, 50));
    const auto paths = sample_gbm(0.1, 0.2, 100.0, g, 20000, 5);
    std::vector<double> st;
    for (const auto& p : paths)
        st.push_back(p.value(50));
    const double se = std::sqrt(variance(st) / double(st.size()));
    EXPECT_NEAR(mean(st), 100.0 * std::exp(0.1), 3.0 * se);
}

TEST(SampleGbm, ZeroVolatilityIsRejectedButZeroDriftIsExact)
{
    const auto g = make_grid(TimeGrid::uniform(1.0, 10));
    EXPECT_THROW(sample_gbm(0.0, 0.0, 100.0, g, 10, 1), DomainError);
    const auto p = sample_gfbm(fbm(0.5, 0.0), g, 3, 1);
    for (const auto& path : p)
        for (double v : path.values)
            EXPECT_EQ(v, 100.0);
}

TEST(SampleGbm, CorrelationRecovered)
{
    const auto g = make_grid(TimeGrid::uniform(1.0, 1));
    GbmSpec s{{0.0, 0.0}, {0.2, 0.3}, {100.0, 50.0}, Eigen::MatrixXd(2, 2)};
    s.correlation << 1.0, 0.6, 0.6, 1.0;
    const auto paths = sample_gbm(s, g, 20000, 9);
    std::vector<double> a, b;
    for (const auto& p : paths) {
        a.push_back(std::log(p.value(1, 0) / 100.0));
        b.push_back(std::log(p.value(1, 1) / 50.0));
    }
    const double ma = mean(a), mb = mean(b);
    double cab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        cab += (a[i] - ma) * (b[i] - mb);
    cab /= double(a.size() - 1);
    const double rho = cab / std::sqrt(variance(a) * variance(b));
    // sd of the sample correlation ~ (1 - rho^2) / sqrt(n)
    EXPECT_NEAR(rho, 0.6, 4.0 * 0.64 / std::sqrt(20000.0));
}

TEST(Sampling, PositiveAndDeterministic)
{
    const auto g = make_grid(TimeGrid::uniform(2.0, 64));
    const auto a = sample_gfbm(fbm(0.3, 1.5), g, 50, 42);
    const auto b = sample_gfbm(fbm(0.3, 1.5), g, 50, 42);
    const auto c = sample_gfbm(fbm(0.3, 1.5), g, 50, 43);
    for (std::size_t p = 0; p < a.size(); ++p) {
        EXPECT_NO_THROW(a[p].validate());
        EXPECT_EQ(a[p].values, b[p].values);
    }
    EXPECT_NE(a[0].values, c[0].values);
}

TEST(Sampling, WorkerCountDoesNotChangeResults)
{
    const auto g = make_grid(TimeGrid::uniform(1.0, 40));
    const auto a = sample_gfbm(fbm(0.7), g, 37, 3, Exec{1});
    const auto b = sample_gfbm(fbm(0.7), g, 37, 3, Exec{4});
    for (std::size_t p = 0; p < a.size(); ++p)
        EXPECT_EQ(a[p].values, b[p].values);
    GbmSpec s{{0.05, 0.0}, {0.2, 0.4}, {100.0, 10.0}, {}};
    const auto x = sample_gbm(s, g, 29, 8, Exec{1});
    const auto y = sample_gbm(s, g, 29, 8, Exec{3});
    for (std::size_t p = 0; p < x.size(); ++p)
        EXPECT_EQ(x[p].values, y[p].values);
}

TEST(Sampling, ParallelKernelsMatchReference)
{
    const auto g = make_grid(TimeGrid::uniform(1.0, 60));
    const auto ref = reference::sample_fbm_driver(0.3, g, 20, 17);
    const auto par = sample_fbm_driver(0.3, g, 20, 17, Exec{4});
    ASSERT_EQ(ref.size(), par.size());
    for (std::size_t p = 0; p < ref.size(); ++p)
        for (std::size_t k = 0; k < ref[p].size(); ++k)
            EXPECT_NEAR(ref[p][k], par[p][k], 1e-12 * (1.0 + std::abs(ref[p][k])));

    GbmSpec s{{0.05, -0.02}, {0.2, 0.4}, {100.0, 10.0}, Eigen::MatrixXd(2, 2)};
    s.correlation << 1.0, -0.3, -0.3, 1.0;
    const auto rg = reference::sample_gbm(s, g, 15, 23);
    const auto pg = sample_gbm(s, g, 15, 23, Exec{4});
    for (std::size_t p = 0; p < rg.size(); ++p)
        for (std::size_t k = 0; k < rg[p].values.size(); ++k)
            EXPECT_NEAR(rg[p].values[k], pg[p].values[k], 1e-12 * rg[p].values[k]);
}

TEST(Integrated, TrapezoidOracle)
{
    const auto g = make_grid(TimeGrid({0.0, 0.1, 0.3, 0.6, 1.0}));
    LogPath x{g, {0.0, 1.0, 2.0, 1.0, -1.0}};
    const auto s = integrate_path(x);
    double y = 0.0;
    const auto& t = g->times();
    EXPECT_EQ(s.value(0), 1.0);
    for (std::size_t k = 1; k < t.size(); ++k) {
        y += 0.5 * (x.values[k] + x.values[k - 1]) * (t[k] - t[k - 1]);
        EXPECT_NEAR(s.value(k), std::exp(y), 1e-14);
    }
    LogPath linear{g, {0.0, 0.1, 0.3, 0.6, 1.0}};
    EXPECT_NEAR(integrate_path(linear).value(4), std::exp(0.5), 1e-14);
}

TEST(Integrated, PathsAreSmooth)
{
    // second differences of ln S are O(dt^2) for a C^1 log-price
    const auto g = make_grid(TimeGrid::uniform(1.0, 400));
    const auto p = sample_integrated(fbm(0.5, 0.5), g, 5, 2);
    for (const auto& path : p) {
        double worst = 0.0;
        for (std::size_t k = 1; k + 1 < path.size(); ++k)
            worst = std::max(worst, std::abs(std::log(path.value(k + 1)) - 2 * std::log(path.value(k)) +
                                             std::log(path.value(k - 1))));
        EXPECT_LT(worst, 1e-3);
        EXPECT_EQ(path.value(0), 100.0);
    }
}

TEST(Conditioning, PrefixPreservedAndSuffixPositive)
{
    const auto g = make_grid(TimeGrid::uniform(1.0, 30));
    const auto base = sample_gfbm(fbm(0.7), g, 1, 4).front();
    const auto conts = continue_gfbm(base, 12, fbm(0.7), 20, 99);
    for (const auto& c : conts) {
        for (std::size_t k = 0; k <= 12; ++k)
            EXPECT_EQ(c.value(k), base.value(k));
        EXPECT_NO_THROW(c.validate());
    }
    EXPECT_THROW(continue_gfbm(base, 30, fbm(0.7), 1, 1), DomainError);
}

TEST(Conditioning, CompositionMatchesUnconditionalVariance)
{
    // simulate prefix, condition, simulate suffix: the marginal at T keeps its law
    const auto g = make_grid(TimeGrid::uniform(1.0, 12));
    const std::size_t n = 100000;
    const FbmSpec spec = fbm(0.7, 1.0);
    const auto direct = sample_gfbm(spec, g, n, 1);
    const auto prefixes = sample_gfbm(spec, g, n, 2);
    std::vector<double> a(n), b(n);
    for (std::size_t p = 0; p < n; ++p) {
        a[p] = std::log(direct[p].value(12) / 100.0);
        b[p] = std::log(continue_gfbm(prefixes[p], 6, spec, 1, 1000 + p).front().value(12) / 100.0);
    }
    const double va = variance(a), vb = variance(b);
    const double sd = std::sqrt(2.0 * va * va / double(n - 1) + 2.0 * vb * vb / double(n - 1));
    EXPECT_LT(std::abs(va - vb), 2.5758 * sd);
    EXPECT_NEAR(va, 1.0, 4.0 * std::sqrt(2.0 / double(n - 1)));
}

TEST(Conditioning, KnownTwoPointFormula)
{
    // one observed instant: E[B_t | B_s = x] = x c(t,s)/s^{2H}
    const double h = 0.3;
    const auto hg = make_grid(TimeGrid({0.0, 0.5}));
    FbmSpec spec = fbm(h, 1.0);
    spec.s0 = 1.0;
    SamplePath hist{hg, 1, {1.0, std::exp(0.8)}};
    const std::vector<double> rem{1.0};
    const auto cond = condition_gaussian(hist, spec, rem);
    const double c = fbm_covariance(1.0, 0.5, h), v = std::pow(0.5, 2 * h);
    EXPECT_NEAR(cond.mean(0), 0.8 * c / v, 1e-12);
    EXPECT_NEAR(cond.cov(0, 0), 1.0 - c * c / v, 1e-12);
}

TEST(Continuation, GbmRestartsFromCut)
{
    const auto g = make_grid(TimeGrid::uniform(1.0, 20));
    GbmSpec s{{0.0}, {0.2}, {100.0}, {}};
    const auto base = sample_gbm(s, g, 1, 1).front();
    const auto c = continue_gbm(base, 10, s, 4000, 5);
    std::vector<double> r;
    for (const auto& p : c) {
        EXPECT_EQ(p.value(10), base.value(10));
        r.push_back(std::log(p.value(20) / p.value(10)));
    }
    // log return over the remaining half: N(-sigma^2/4, sigma^2/2)
    EXPECT_NEAR(mean(r), -0.01, 4.0 * std::sqrt(0.02 / 4000.0));
    EXPECT_NEAR(variance(r), 0.02, 4.0 * 0.02 * std::sqrt(2.0 / 3999.0));
}
