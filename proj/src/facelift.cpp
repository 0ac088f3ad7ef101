#include "cpslab/facelift.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpslab/cps.hpp"
#include "cpslab/skeleton.hpp"
#include "cpslab/walk.hpp"

namespace cpslab {

void PayoffCurve::validate() const
{
    if (x.empty())
        throw DomainError("PayoffCurve: no samples");
    if (x.size() != g.size())
        throw DomainError("PayoffCurve: abscissae and values differ in length");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !std::isfinite(x[i]))
            throw DomainError("PayoffCurve: abscissae must be positive and finite");
        if (i && !(x[i] > x[i - 1]))
            throw DomainError("PayoffCurve: abscissae must be strictly increasing");
        if (!std::isfinite(g[i]))
            throw DomainError("PayoffCurve: non-finite payoff value");
        if (g[i] < lower_bound)
            throw DomainError("PayoffCurve: payoff below its declared lower bound");
    }
    if (std::isnan(left_limit) || left_limit == -std::numeric_limits<double>::infinity() || left_limit < lower_bound)
        throw DomainError("PayoffCurve: left_limit must be >= lower_bound (or +inf)");
    if (!std::isfinite(right_slope))
        throw DomainError("PayoffCurve: right_slope must be finite");
    if (right_slope < 0.0)
        throw DomainError("PayoffCurve: a negative right_slope contradicts the lower bound");
}

double PayoffCurve::operator()(double at) const
{
    if (!(at > 0.0))
        throw DomainError("PayoffCurve: evaluation at a non-positive abscissa");
    if (at <= x.front()) {
        if (left_infinite())
            return g.front();
        return left_limit + (g.front() - left_limit) * at / x.front();
    }
    if (at >= x.back())
        return g.back() + right_slope * (at - x.back());
    const auto it = std::upper_bound(x.begin(), x.end(), at);
    const std::size_t i = static_cast<std::size_t>(it - x.begin());
    const double t = (at - x[i - 1]) / (x[i] - x[i - 1]);
    return g[i - 1] + t * (g[i] - g[i - 1]);
}

PayoffCurve PayoffCurve::call(double strike, double x_max, std::size_t n)
{
    PayoffCurve c;
    for (std::size_t i = 1; i < n; ++i) {
        const double xi = x_max * static_cast<double>(i) / static_cast<double>(n - 1);
        c.x.push_back(xi);
        c.g.push_back(std::max(xi - strike, 0.0));
    }
    c.lower_bound = 0.0;
    c.left_limit = 0.0;
    c.right_slope = 1.0;
    return c;
}

PayoffCurve PayoffCurve::put(double strike, double x_max, std::size_t n)
{
    PayoffCurve c;
    for (std::size_t i = 1; i < n; ++i) {
        const double xi = x_max * static_cast<double>(i) / static_cast<double>(n - 1);
        c.x.push_back(xi);
        c.g.push_back(std::max(strike - xi, 0.0));
    }
    c.lower_bound = 0.0;
    c.left_limit = strike;
    c.right_slope = 0.0;
    return c;
}

Envelope::Envelope(const PayoffCurve& curve) : curve_(curve)
{
    curve_.validate();
    if (curve_.left_infinite()) {
        infinite_ = true;
        return;
    }
    std::vector<Point2> pts{{0.0, curve_.left_limit}};
    for (std::size_t i = 0; i < curve_.x.size(); ++i)
        pts.push_back({curve_.x[i], curve_.g[i]});
    hull_ = upper_hull(std::move(pts));
    // vertices under the right ray from their predecessor are not extreme
    const double s = curve_.right_slope;
    while (hull_.size() >= 2) {
        const Point2& a = hull_[hull_.size() - 2];
        const Point2& b = hull_.back();
        if ((b.y - a.y) / (b.x - a.x) > s)
            break;
        hull_.pop_back();
    }
}

double Envelope::operator()(double x) const
{
    if (!(x > 0.0))
        throw DomainError("Envelope: evaluation at a non-positive abscissa");
    if (infinite_)
        return std::numeric_limits<double>::infinity();
    const Point2& last = hull_.back();
    if (x >= last.x)
        return last.y + curve_.right_slope * (x - last.x);
    const auto it = std::upper_bound(hull_.begin(), hull_.end(), x, [](double v, const Point2& p) { return v < p.x; });
    const Point2& b = *it;
    const Point2& a = *(it - 1);
    const double t = (x - a.x) / (b.x - a.x);
    return a.y + t * (b.y - a.y);
}

double Envelope::right_derivative(double x) const
{
    if (!(x > 0.0))
        throw DomainError("Envelope: evaluation at a non-positive abscissa");
    if (infinite_)
        return std::numeric_limits<double>::infinity();
    if (x >= hull_.back().x)
        return curve_.right_slope;
    const auto it = std::upper_bound(hull_.begin(), hull_.end(), x, [](double v, const Point2& p) { return v < p.x; });
    const Point2& b = *it;
    const Point2& a = *(it - 1);
    return (b.y - a.y) / (b.x - a.x);
}

std::pair<double, double> Envelope::chord(double x) const
{
    if (infinite_)
        throw DomainError("Envelope: no chord for an infinite envelope");
    double u = 0.0;
    double v = std::numeric_limits<double>::infinity();
    for (const auto& p : hull_) {
        if (p.x < x)
            u = std::max(u, p.x);
        else if (p.x > x)
            v = std::min(v, p.x);
    }
    return {u, v};
}

std::vector<bool> Envelope::contact_flags(double tol) const
{
    std::vector<bool> out(curve_.x.size(), false);
    if (infinite_)
        return out;
    for (std::size_t i = 0; i < curve_.x.size(); ++i)
        out[i] = (*this)(curve_.x[i]) - curve_.g[i] <= tol * std::max(1.0, std::abs(curve_.g[i]));
    return out;
}

void Strategy::validate(double horizon) const
{
    if (knots.size() != positions.size() || knots.empty())
        throw DomainError("Strategy: one position per knot");
    for (std::size_t j = 0; j < knots.size(); ++j) {
        if (knots[j] < 0.0 || knots[j] > horizon * (1.0 + 1e-12))
            throw DomainError("Strategy: knot outside [0, T]");
        if (j && !(knots[j] > knots[j - 1]))
            throw DomainError("Strategy: knots must increase");
        if (!std::isfinite(positions[j]))
            throw DomainError("Strategy: non-finite position");
    }
    if (positions.back() != 0.0)
        throw DomainError("Strategy: the last position must be 0");
}

Strategy Strategy::buy_and_hold(double amount, double horizon) { return {{0.0, horizon}, {amount, 0.0}}; }

WealthResult wealth(const Strategy& strategy, const SamplePath& path, double eps)
{
    if (path.dim != 1)
        throw DomainError("wealth: d = 1 paths only");
    if (eps < 0.0)
        throw DomainError("wealth: eps must be nonnegative");
    const auto& grid = *path.grid;
    strategy.validate(grid.horizon());
    std::vector<std::size_t> idx;
    for (double t : strategy.knots) {
        try {
            idx.push_back(grid.index_of(t));
        } catch (const ValidationError&) {
            throw DomainError("wealth: strategy knot " + std::to_string(t) + " is not a grid time");
        }
    }

    WealthResult r;
    double banked = 0.0;  // gains of finished holding periods minus trading costs so far
    double prev = 0.0;
    std::size_t j = 0;  // next knot
    double held = 0.0;
    std::size_t since = 0;
    for (std::size_t k = 0; k < path.size(); ++k) {
        const double s = path.value(k);
        // liquidation value at t_k of the strategy truncated to (0, t_k]
        const double live = banked + held * (s - path.value(since)) - eps * s * std::abs(held);
        r.running_min = std::min(r.running_min, k == 0 ? 0.0 : live);
        if (j < idx.size() && idx[j] == k) {
            banked += held * (s - path.value(since));
            banked -= eps * s * std::abs(strategy.positions[j] - prev);
            prev = strategy.positions[j];
            held = prev;
            since = k;
            ++j;
        }
    }
    r.terminal = banked + held * (path.value(path.size() - 1) - path.value(since));
    return r;
}

StaticUpper static_upper_price(const Envelope& env, double s0, double eps, const std::vector<SamplePath>& paths)
{
    if (!(s0 > 0.0) || !(eps >= 0.0) || !(eps < 1.0))
        throw DomainError("static_upper_price: need s0 > 0 and 0 <= eps < 1");
    StaticUpper out;
    out.envelope = env(s0);
    if (env.infinite()) {
        out.infinite = true;
        out.price = std::numeric_limits<double>::infinity();
        return out;
    }
    out.slope = env.right_derivative(s0);
    out.beta = out.slope >= 0.0 ? out.slope / (1.0 - eps) : out.slope / (1.0 + eps);
    out.price = out.envelope + 2.0 * eps * std::abs(out.beta) * s0;

    const Strategy hedge = Strategy::buy_and_hold(out.beta, paths.empty() ? 1.0 : paths.front().grid->horizon());
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& path = paths[p];
        if (std::abs(path.value(0) - s0) > 1e-9 * s0)
            throw DomainError("static_upper_price: path does not start at s0");
        const double st = path.value(path.size() - 1);
        const double pay = env.curve()(st);
        const double v = out.price + wealth(hedge, path, eps).terminal;
        const double slack = v - pay;
        out.worst_slack = std::min(out.worst_slack, slack);
        if (slack < -1e-9 * std::max({1.0, std::abs(v), std::abs(pay)}))
            throw InvariantViolation("static_upper_price: path " + std::to_string(p) +
                                     " is not superreplicated (shortfall " + std::to_string(-slack) + ")");
        ++out.certified_paths;
    }
    return out;
}

double default_delta(double envelope_value) { return 1e-2 * std::max(1.0, std::abs(envelope_value)); }

namespace {

double chord_at(const PayoffCurve& g, double u, double v, double x)
{
    return g(u) * (v - x) / (v - u) + g(v) * (x - u) / (v - u);
}

}  // namespace

DualLower dual_lower_price(const Envelope& env, double s0, double eps, double delta,
                           const std::vector<SamplePath>& paths, Exec exec)
{
    if (!(s0 > 0.0) || !(eps > 0.0) || !(delta > 0.0))
        throw DomainError("dual_lower_price: need s0 > 0, eps > 0, delta > 0");
    if (env.infinite())
        throw DomainError("dual_lower_price: the envelope is infinite at s0");
    if (paths.empty())
        throw DomainError("dual_lower_price: empty path ensemble");
    const PayoffCurve& g = env.curve();

    DualLower out;
    out.envelope = env(s0);
    out.delta = delta;

    // chord (u, v) around s0 with value above ghat(s0) - delta/3
    auto [u, v] = env.chord(s0);
    const bool left_open = !(u > 0.0);
    const bool right_open = std::isinf(v);
    if (left_open)
        u = s0 / 2.0;
    if (right_open)
        v = 2.0 * s0;
    const double u_vertex = u, v_vertex = v;
    const double target = out.envelope - delta / 3.0;
    bool found = chord_at(g, u, v, s0) > target;
    for (int it = 0; it < 400 && !found; ++it) {
        if (left_open || right_open) {
            if (left_open)
                u /= 2.0;
            if (right_open)
                v *= 2.0;
        } else {
            // s0 sits on a vertex: shrink toward it
            u = s0 - (s0 - u_vertex) * std::ldexp(1.0, -(it + 1));
            v = s0 + (v_vertex - s0) * std::ldexp(1.0, -(it + 1));
        }
        found = chord_at(g, u, v, s0) > target;
    }
    if (!found || !(u > 0.0) || !std::isfinite(v))
        throw NumericalError("dual_lower_price: no chord within delta/3 of the envelope");
    if (!(u < s0 && s0 < v))
        throw DomainError("dual_lower_price: chord endpoints do not bracket s0");
    out.u = u;
    out.v = v;
    out.chord_value = chord_at(g, u, v, s0);

    // grid fit; refine until the chord at x0 stays within delta/2
    TwoPointMeasure tp = two_point_measure(s0, u, v, eps);
    const int m0 = tp.k - tp.j;
    int m = m0;
    while (!(chord_at(g, u, v, tp.x0) > out.envelope - delta / 2.0)) {
        if (m > 64 * m0 + 1000)
            throw DomainError("dual_lower_price: eps too large for delta; choose a smaller eps");
        tp = two_point_measure(s0, u, v, eps, ++m);
    }
    out.m = tp.k - tp.j;
    out.eps_prime = tp.eps_prime;
    out.x0 = tp.x0;
    out.prob_u = tp.prob_u;
    out.prob_v = tp.prob_v;
    out.chord_at_x0 = chord_at(g, u, v, tp.x0);

    // eps'-ladders anchored at x0
    LadderOptions lo;
    lo.initial_anchor = std::vector<double>{tp.x0};
    const auto skeletons = extract_ladders(paths, tp.eps_prime, LadderMode::multiplicative, lo, exec);

    std::vector<double> rho;
    rho.reserve(paths.size());
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& sk = skeletons[p];
        rho.push_back(paths[p].value(paths[p].size() - 1) / sk.stops.back().anchor[0]);
    }
    out.band_samples = rho.size();
    const double nn = static_cast<double>(rho.size());
    double price = 0.0, var = 0.0;
    for (const auto& [x, q] : {std::pair{u, tp.prob_u}, std::pair{v, tp.prob_v}}) {
        double s = 0.0, s2 = 0.0;
        for (double r : rho) {
            const double y = g(x * r);
            s += y;
            s2 += y * y;
        }
        const double mean = s / nn;
        const double vr = nn > 1 ? std::max(0.0, (s2 - nn * mean * mean) / (nn - 1.0)) : 0.0;
        price += q * mean;
        var += q * q * vr / nn;
    }
    out.price = price;
    out.stderr_ = std::sqrt(var);

    // likelihood-weighted estimate on the same ladders (diagnostic only)
    CpsOptions co;
    co.throw_on_sandwich = false;
    const auto built = build_cps_1d(skeletons, {}, tp.schedule, co, exec);
    double sl = 0.0, sly = 0.0;
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const double l = built.cps.sample_weights[p] * built.cps.paths[p].likelihood;
        if (l > 0.0) {
            ++out.direct_paths;
            sl += l;
            sly += l * g(paths[p].value(paths[p].size() - 1));
        }
    }
    if (out.direct_paths > 0)
        out.direct_estimate = sly / sl;
    return out;
}

SqueezeReport squeeze_report(const Envelope& env, double s0, const std::vector<double>& eps_sequence, double delta,
                             const std::vector<SamplePath>& paths, Exec exec)
{
    if (eps_sequence.empty())
        throw DomainError("squeeze_report: empty eps sequence");
    for (std::size_t i = 0; i < eps_sequence.size(); ++i) {
        if (!(eps_sequence[i] > 0.0))
            throw DomainError("squeeze_report: eps must be positive");
        if (i && !(eps_sequence[i] < eps_sequence[i - 1]))
            throw DomainError("squeeze_report: eps sequence must be strictly decreasing");
    }
    SqueezeReport rep;
    rep.envelope = env(s0);
    for (double e : eps_sequence) {
        SqueezeRow row;
        row.eps = e;
        row.upper = static_upper_price(env, s0, e, paths);
        row.lower = dual_lower_price(env, s0, e, delta, paths, exec);
        if (row.lower.price > row.upper.price + 3.0 * row.lower.stderr_ + 1e-9 * std::abs(row.upper.price))
            rep.monotone = false;
        if (!rep.rows.empty() && row.upper.price > rep.rows.back().upper.price + 1e-12 * std::abs(row.upper.price))
            rep.monotone = false;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

}  // namespace cpslab
