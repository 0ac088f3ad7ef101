#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cpslab/esscher.hpp"
#include "cpslab/hull.hpp"

using namespace cpslab;

namespace {

Eigen::VectorXd v1(double x) { return Eigen::VectorXd::Constant(1, x); }

Eigen::VectorXd v2(double x, double y)
{
    Eigen::VectorXd v(2);
    v << x, y;
    return v;
}

// Grid search on phi for d = 1: coarse scan, then ternary refinement.
double grid_argmin(const IncrementCloud& c)
{
    auto phi = [&](double t) {
        double s = 0.0;
        for (std::size_t i = 0; i < c.points.size(); ++i)
            s += c.weights[i] * std::exp(t * c.points[i](0));
        return s;
    };
    double best = 0.0, fbest = phi(0.0);
    for (double t = -200.0; t <= 200.0; t += 0.01)
        if (phi(t) < fbest) {
            fbest = phi(t);
            best = t;
        }
    double lo = best - 0.02, hi = best + 0.02;
    for (int it = 0; it < 200; ++it) {
        const double a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
        if (phi(a) < phi(b))
            hi = b;
        else
            lo = a;
    }
    return 0.5 * (lo + hi);
}

IncrementCloud random_cloud(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> size(2, 5);
    std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.05, 1.0);
    IncrementCloud c;
    const int n = size(rng);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = u(rng);
        if (i == 0)
            x = -std::abs(x) - 0.05;
        if (i == 1)
            x = std::abs(x) + 0.05;
        c.points.push_back(v1(x));
        c.weights.push_back(w(rng));
        total += c.weights.back();
    }
    for (auto& x : c.weights)
        x /= total;
    return c;
}

}  // namespace

TEST(UpperHull, MatchesBruteForce)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Point2> pts;
        for (int i = 0; i < 30; ++i)
            pts.push_back({u(rng), u(rng)});
        const auto h = upper_hull(pts);
        // every point lies on or below every hull edge over its span
        for (std::size_t e = 0; e + 1 < h.size(); ++e)
            for (const auto& p : pts)
                if (p.x >= h[e].x && p.x <= h[e + 1].x) {
                    const double y = h[e].y + (h[e + 1].y - h[e].y) * (p.x - h[e].x) / (h[e + 1].x - h[e].x);
                    EXPECT_LE(p.y, y + 1e-12);
                }
        for (std::size_t e = 1; e + 1 < h.size(); ++e) {
            const double s1 = (h[e].y - h[e - 1].y) / (h[e].x - h[e - 1].x);
            const double s2 = (h[e + 1].y - h[e].y) / (h[e + 1].x - h[e].x);
            EXPECT_GT(s1, s2);
        }
    }
}

TEST(InteriorMargin, KnownShapes)
{
    const auto seg = interior_margin({v1(-1.0), v1(2.0)});
    EXPECT_TRUE(seg.ok);
    EXPECT_NEAR(seg.delta, 1.0, 1e-15);
    EXPECT_FALSE(interior_margin({v1(0.0), v1(2.0)}).ok);

    const auto sq = interior_margin({v2(-1, -1), v2(3, -1), v2(3, 2), v2(-1, 2)});
    EXPECT_TRUE(sq.ok);
    EXPECT_NEAR(sq.delta, 1.0, 1e-12);
    EXPECT_FALSE(interior_margin({v2(1, 0), v2(0, 1), v2(1, 1)}).ok);
    EXPECT_FALSE(interior_margin({v2(-1, 0), v2(1, 0)}).ok);

    std::vector<Eigen::VectorXd> cube;
    for (int a : {-1, 1})
        for (int b : {-1, 1})
            for (int c : {-1, 1}) {
                Eigen::VectorXd v(3);
                v << a, 2 * b, 3 * c;
                cube.push_back(v);
            }
    const auto cm = interior_margin(cube);
    EXPECT_TRUE(cm.exact);
    EXPECT_NEAR(cm.delta, 1.0, 1e-12);

    // d = 4 cross-polytope: inradius 1/2 (facet normal (1,1,1,1)/2)
    std::vector<Eigen::VectorXd> cross;
    for (int i = 0; i < 4; ++i)
        for (int s : {-1, 1}) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(4);
            v(i) = s;
            cross.push_back(v);
        }
    const auto xm = interior_margin(cross);
    EXPECT_TRUE(xm.ok);
    EXPECT_FALSE(xm.exact);
    EXPECT_GE(xm.delta, 0.5 - 1e-12);
    EXPECT_LT(xm.delta, 0.6);
}

TEST(Esscher, NewtonMatchesGridSearch)
{
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const auto c = random_cloud(rng);
        const auto s = esscher_minimize(c);
        EXPECT_NEAR(s.theta(0), grid_argmin(c), 1e-5) << trial;
    }
}

TEST(Esscher, TwoPointClosedForm)
{
    // theta* = ln(w_- |a| / (w_+ b)) / (b - a) for atoms a < 0 < b
    IncrementCloud c{{v1(-1.0), v1(2.0)}, {0.5, 0.5}};
    const auto s = esscher_minimize(c);
    EXPECT_NEAR(s.theta(0), std::log(0.5 * 1.0 / (0.5 * 2.0)) / 3.0, 1e-12);
}

TEST(Esscher, MomentConditionsInTwoDimensions)
{
    std::mt19937_64 rng(9);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<Eigen::VectorXd> pts;
    for (int i = 0; i < 400; ++i)
        pts.push_back(v2(0.3 + z(rng), -0.2 + 0.5 * z(rng)));
    for (int i = 0; i < 40; ++i)
        pts.push_back(v2(0.0, 0.0));
    const auto cloud = IncrementCloud::empirical(pts);
    EXPECT_NEAR(cloud.zero_mass(), 40.0 / 440.0, 1e-15);
    for (double eta : {1.0, 0.25, 1.0 / 64}) {
        const auto r = esscher_transform(cloud, eta);
        const auto& m = r.moments;
        EXPECT_NEAR(m.mass, 1.0, 1e-8);
        EXPECT_LT(m.mean.norm(), 1e-8);
        EXPECT_LE(m.second, eta + 1e-8);
        EXPECT_LE(m.off_zero, eta + 1e-8);
        for (double w : r.z_weights)
            EXPECT_GT(w, 0.0);
        EXPECT_NE(r.diagnostics_json().find("theta"), std::string::npos);
    }
}

TEST(Esscher, Failures)
{
    IncrementCloud one_sided{{v1(0.5), v1(1.0)}, {0.5, 0.5}};
    try {
        esscher_minimize(one_sided);
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("no Esscher solution"), std::string::npos);
    }
    IncrementCloud no_zero{{v1(-1.0), v1(1.0)}, {0.5, 0.5}};
    EXPECT_THROW(esscher_transform(no_zero, 0.5), DomainError);
    IncrementCloud bad_weights{{v1(-1.0), v1(1.0)}, {0.5, 0.6}};
    EXPECT_THROW(bad_weights.validate(), DomainError);
}

TEST(Esscher, IdentityWhenAlreadyCentred)
{
    IncrementCloud c{{v1(-1.0), v1(0.0), v1(1.0)}, {0.25, 0.5, 0.25}};
    const auto r = esscher_transform(c, 1.0);
    EXPECT_NEAR(r.theta_star(0), 0.0, 1e-12);
    EXPECT_NEAR(r.lambda, 1.0, 1e-12);
    for (double w : r.z_weights)
        EXPECT_NEAR(w, 1.0, 1e-12);
}
