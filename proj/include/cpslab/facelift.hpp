#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "cpslab/hull.hpp"
#include "cpslab/paths.hpp"

namespace cpslab {

/// Payoff g sampled at positive abscissae, with declared boundary behaviour:
/// g(x) -> left_limit as x -> 0+ (may be +inf) and slope right_slope as x -> inf.
struct PayoffCurve {
    std::vector<double> x;
    std::vector<double> g;
    double lower_bound = 0.0;
    double left_limit = 0.0;
    double right_slope = 0.0;

    /// Throws DomainError on unsorted or non-positive abscissae, size mismatch,
    /// non-finite values or values below lower_bound.
    void validate() const;
    bool left_infinite() const { return std::isinf(left_limit); }
    /// Piecewise-linear interpolant through (0+, left_limit), the samples, and the right ray.
    double operator()(double at) const;

    static PayoffCurve call(double strike, double x_max = 1000.0, std::size_t n = 201);
    static PayoffCurve put(double strike, double x_max = 1000.0, std::size_t n = 201);
};

/// Concave envelope of a PayoffCurve: upper hull of (0, left_limit) and the samples,
/// continued by the ray of slope right_slope.
class Envelope {
public:
    explicit Envelope(const PayoffCurve& curve);

    /// +inf when left_limit is +inf.
    double operator()(double x) const;
    double right_derivative(double x) const;
    bool infinite() const { return infinite_; }
    /// Endpoints of the chord attaining the envelope at x; v = +inf on the ray.
    std::pair<double, double> chord(double x) const;
    /// ghat == g at each sample abscissa (tolerance relative to |g|).
    std::vector<bool> contact_flags(double tol = 1e-12) const;
    const std::vector<Point2>& vertices() const { return hull_; }
    const PayoffCurve& curve() const { return curve_; }

private:
    PayoffCurve curve_;
    std::vector<Point2> hull_;
    bool infinite_ = false;
};

/// Piecewise-constant position: theta = positions[j] on (knots[j], knots[j+1]], zero
/// before knots[0]; the last position must be 0 (liquidation at the last knot).
struct Strategy {
    std::vector<double> knots;
    std::vector<double> positions;

    void validate(double horizon) const;
    static Strategy buy_and_hold(double amount, double horizon);
};

struct WealthResult {
    double terminal = 0.0;
    double running_min = 0.0;  // min over grid times of the liquidation value
};

/// V = sum theta (S_{j+1} - S_j) - eps sum S_j |theta_j - theta_{j-1}| on a d = 1 path.
WealthResult wealth(const Strategy& strategy, const SamplePath& path, double eps);

struct StaticUpper {
    double price = 0.0;
    double beta = 0.0;
    double envelope = 0.0;
    double slope = 0.0;
    bool infinite = false;
    std::size_t certified_paths = 0;
    double worst_slack = std::numeric_limits<double>::infinity();  // min over paths of x + V - g(S_T)
};

/// beta solves beta - eps|beta| = ghat'_+(s0); price ghat(s0) + 2 eps |beta| s0, certified
/// pathwise on `paths` (InvariantViolation if any path is not superreplicated).
StaticUpper static_upper_price(const Envelope& env, double s0, double eps, const std::vector<SamplePath>& paths = {});

struct DualLower {
    double price = 0.0;
    double stderr_ = 0.0;
    double envelope = 0.0;
    double delta = 0.0;
    double u = 0.0;
    double v = 0.0;
    double chord_value = 0.0;  // chord through (u, v) evaluated at s0
    double chord_at_x0 = 0.0;
    double eps_prime = 0.0;
    double x0 = 0.0;
    int m = 0;
    double prob_u = 0.0;
    double prob_v = 0.0;
    std::size_t band_samples = 0;
    double direct_estimate = std::numeric_limits<double>::quiet_NaN();
    std::size_t direct_paths = 0;  // paths carrying likelihood weight
};

/// Lower bound from the two-point measure through a chord (u, v) whose value at s0
/// exceeds ghat(s0) - delta/3. E_Q[g(S_T)] = sum_{x in {u, v}} Q(x) E[g(x rho)] with rho
/// the terminal-to-last-anchor ratio of the ensemble's eps'-ladders.
DualLower dual_lower_price(const Envelope& env, double s0, double eps, double delta,
                           const std::vector<SamplePath>& paths, Exec exec = {});

struct SqueezeRow {
    double eps = 0.0;
    StaticUpper upper;
    DualLower lower;
};

struct SqueezeReport {
    double envelope = 0.0;
    std::vector<SqueezeRow> rows;
    bool monotone = true;  // upper non-increasing in eps order; lower <= upper within 3 stderr
};

/// Runs both bounds for each eps (strictly decreasing sequence required).
SqueezeReport squeeze_report(const Envelope& env, double s0, const std::vector<double>& eps_sequence, double delta,
                             const std::vector<SamplePath>& paths, Exec exec = {});

double default_delta(double envelope_value);

}  // namespace cpslab
