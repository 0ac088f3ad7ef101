#include "cpslab/hull.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "cpslab/common.hpp"

namespace cpslab {

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b)
{
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Minimum over facets of the signed distance from the origin (positive inside).
double hull_distance_2d(const std::vector<Eigen::VectorXd>& pts)
{
    std::vector<Point2> p;
    p.reserve(pts.size());
    for (const auto& v : pts)
        p.push_back({v[0], v[1]});
    std::sort(p.begin(), p.end(), [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    p.erase(std::unique(p.begin(), p.end(), [](const Point2& a, const Point2& b) { return a.x == b.x && a.y == b.y; }),
            p.end());
    if (p.size() < 3)
        return 0.0;
    std::vector<Point2> h(2 * p.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0.0)
            --k;
        h[k++] = p[i];
    }
    for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0.0)
            --k;
        h[k++] = p[i];
    }
    h.resize(k - 1);  // counter-clockwise, last == first dropped
    if (h.size() < 3)
        return 0.0;
    double best = std::numeric_limits<double>::infinity();
    const Point2 origin{0.0, 0.0};
    for (std::size_t i = 0; i < h.size(); ++i) {
        const Point2& a = h[i];
        const Point2& b = h[(i + 1) % h.size()];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        best = std::min(best, cross(a, b, origin) / len);
    }
    return best;
}

double hull_distance_3d(const std::vector<Eigen::VectorXd>& pts)
{
    const std::size_t n = pts.size();
    double best = std::numeric_limits<double>::infinity();
    bool any = false;
    double scale = 0.0;
    for (const auto& p : pts)
        scale = std::max(scale, p.norm());
    const double tol = 1e-12 * std::max(scale, 1.0);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            for (std::size_t c = b + 1; c < n; ++c) {
                Eigen::Vector3d pa = pts[a].head<3>(), pb = pts[b].head<3>(), pc = pts[c].head<3>();
                Eigen::Vector3d nrm = (pb - pa).cross(pc - pa);
                const double len = nrm.norm();
                if (len <= tol * tol)
                    continue;
                nrm /= len;
                double lo = 0.0, hi = 0.0;
                for (const auto& p : pts) {
                    const double s = nrm.dot(p.head<3>() - pa);
                    lo = std::min(lo, s);
                    hi = std::max(hi, s);
                }
                if (lo < -tol && hi > tol)
                    continue;
                // orient the normal outward
                if (hi > tol)
                    nrm = -nrm;
                any = true;
                best = std::min(best, nrm.dot(pa));
            }
    return any ? best : 0.0;
}

double sampled_distance(const std::vector<Eigen::VectorXd>& pts, std::size_t directions)
{
    const auto d = pts.front().size();
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> nd;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd u(d);
    for (std::size_t k = 0; k < directions + 2 * static_cast<std::size_t>(d); ++k) {
        if (k < 2 * static_cast<std::size_t>(d)) {
            u.setZero();
            u[k / 2] = (k % 2) ? -1.0 : 1.0;
        } else {
            for (Eigen::Index i = 0; i < d; ++i)
                u[i] = nd(rng);
            u.normalize();
        }
        double h = -std::numeric_limits<double>::infinity();
        for (const auto& p : pts)
            h = std::max(h, u.dot(p));
        best = std::min(best, h);
    }
    return best;
}

}  // namespace

std::vector<Point2> upper_hull(std::vector<Point2> points)
{
    std::sort(points.begin(), points.end(),
              [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y > b.y); });
    std::vector<Point2> h;
    for (const auto& p : points) {
        if (!h.empty() && h.back().x == p.x)
            continue;
        while (h.size() >= 2 && cross(h[h.size() - 2], h.back(), p) >= 0.0)
            h.pop_back();
        h.push_back(p);
    }
    return h;
}

InteriorMargin interior_margin(const std::vector<Eigen::VectorXd>& points, std::size_t exact_limit,
                               std::size_t directions)
{
    InteriorMargin out;
    if (points.empty())
        return out;
    const auto d = points.front().size();
    for (const auto& p : points)
        if (p.size() != d)
            throw DomainError("interior_margin: points of mixed dimension");
    for (const auto& p : points)
        out.scale = std::max(out.scale, p.norm());
    if (points.size() < static_cast<std::size_t>(d) + 1 || out.scale == 0.0)
        return out;

    double delta = 0.0;
    if (d == 1) {
        double lo = 0.0, hi = 0.0;
        for (const auto& p : points) {
            lo = std::min(lo, p[0]);
            hi = std::max(hi, p[0]);
        }
        delta = std::min(-lo, hi);
    } else if (d == 2) {
        delta = hull_distance_2d(points);
    } else if (d == 3 && points.size() <= exact_limit) {
        delta = hull_distance_3d(points);
    } else {
        out.exact = false;
        delta = sampled_distance(points, directions);
    }
    if (!(delta > 1e-9 * out.scale))
        return out;
    out.ok = true;
    out.delta = delta;
    return out;
}

}  // namespace cpslab
