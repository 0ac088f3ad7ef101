#include "cpslab/esscher.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cpslab/common.hpp"

namespace cpslab {

double IncrementCloud::zero_mass() const
{
    double m = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (points[i].isZero(0.0))
            m += weights[i];
    return m;
}

void IncrementCloud::validate() const
{
    if (points.empty())
        throw DomainError("IncrementCloud: empty cloud");
    if (points.size() != weights.size())
        throw DomainError("IncrementCloud: points and weights differ in length");
    const auto d = points.front().size();
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != d || d == 0)
            throw DomainError("IncrementCloud: inconsistent dimension");
        if (!points[i].allFinite())
            throw DomainError("IncrementCloud: non-finite point");
        if (!(weights[i] > 0.0))
            throw DomainError("IncrementCloud: weights must be strictly positive");
        s += weights[i];
    }
    if (std::abs(s - 1.0) > 1e-12)
        throw DomainError("IncrementCloud: weights must sum to 1");
}

IncrementCloud IncrementCloud::empirical(std::vector<Eigen::VectorXd> samples)
{
    IncrementCloud c;
    const double w = 1.0 / static_cast<double>(samples.size());
    c.weights.assign(samples.size(), w);
    c.points = std::move(samples);
    return c;
}

std::string EsscherResult::diagnostics_json() const
{
    nlohmann::json j;
    j["iterations"] = iterations;
    j["grad_norm"] = grad_norm;
    j["lambda"] = lambda;
    j["mu"] = mu;
    j["eta"] = eta;
    j["mass"] = moments.mass;
    j["mean_norm"] = moments.mean.size() ? moments.mean.norm() : 0.0;
    j["second"] = moments.second;
    j["off_zero"] = moments.off_zero;
    std::vector<double> th(theta_star.data(), theta_star.data() + theta_star.size());
    j["theta"] = th;
    return j.dump();
}

EsscherMoments esscher_moments(const IncrementCloud& cloud, const std::vector<double>& z)
{
    EsscherMoments m;
    m.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cloud.dim()));
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const double wz = cloud.weights[i] * z[i];
        m.mass += wz;
        m.mean += wz * cloud.points[i];
        m.second += wz * cloud.points[i].squaredNorm();
        if (!cloud.points[i].isZero(0.0))
            m.off_zero += wz;
    }
    return m;
}

InteriorMargin check_interior(const IncrementCloud& cloud)
{
    cloud.validate();
    return interior_margin(cloud.points);
}

double esscher_phi(const IncrementCloud& cloud, const Eigen::VectorXd& theta)
{
    double s = 0.0;
    for (std::size_t i = 0; i < cloud.points.size(); ++i)
        s += cloud.weights[i] * std::exp(theta.dot(cloud.points[i]));
    return s;
}

namespace {

// log phi, its gradient and Hessian (tilted mean and covariance).
struct LogPhi {
    double value = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
};

LogPhi log_phi(const IncrementCloud& cloud, const Eigen::VectorXd& theta, bool derivatives)
{
    const std::size_t n = cloud.points.size();
    std::vector<double> e(n);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = std::log(cloud.weights[i]) + theta.dot(cloud.points[i]);
        top = std::max(top, e[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = std::exp(e[i] - top);
        s += e[i];
    }
    LogPhi out;
    out.value = top + std::log(s);
    if (!derivatives)
        return out;
    const auto d = theta.size();
    out.grad = Eigen::VectorXd::Zero(d);
    out.hess = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < n; ++i)
        out.grad += (e[i] / s) * cloud.points[i];
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd c = cloud.points[i] - out.grad;
        out.hess.noalias() += (e[i] / s) * c * c.transpose();
    }
    return out;
}

}  // namespace

EsscherSolve esscher_minimize(const IncrementCloud& cloud, double tol, int max_iter)
{
    const InteriorMargin margin = check_interior(cloud);
    if (!margin.ok)
        throw DomainError("no Esscher solution: 0 is not interior to the cloud's convex hull");

    const auto d = static_cast<Eigen::Index>(cloud.dim());
    EsscherSolve out;
    out.theta = Eigen::VectorXd::Zero(d);
    const double target = tol * std::max(1.0, margin.scale);
    LogPhi cur = log_phi(cloud, out.theta, true);
    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it;
        const double gn = cur.grad.norm();
        out.grad_norm = std::exp(cur.value) * gn;
        if (gn <= target)
            return out;
        Eigen::VectorXd step = cur.hess.ldlt().solve(-cur.grad);
        if (!step.allFinite() || step.dot(cur.grad) >= 0.0)
            step = -cur.grad;
        double t = 1.0;
        const double slope = step.dot(cur.grad);
        LogPhi trial;
        bool moved = false;
        for (int k = 0; k < 60; ++k, t *= 0.5) {
            trial = log_phi(cloud, out.theta + t * step, false);
            const double noise = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(cur.value));
            if (trial.value <= cur.value + 1e-4 * t * slope + noise) {
                moved = true;
                break;
            }
        }
        if (!moved) {
            if (gn <= 1e3 * target)
                return out;
            break;
        }
        out.theta += t * step;
        cur = log_phi(cloud, out.theta, true);
    }
    out.grad_norm = std::exp(cur.value) * cur.grad.norm();
    if (cur.grad.norm() <= target)
        return out;
    throw NumericalError("esscher_minimize: no convergence, gradient norm " + std::to_string(out.grad_norm));
}

EsscherResult esscher_weights(const IncrementCloud& cloud, const EsscherSolve& solve, double eta)
{
    cloud.validate();
    if (!(eta > 0.0))
        throw DomainError("esscher_weights: eta must be positive");
    const double zero = cloud.zero_mass();
    if (!(zero > 0.0))
        throw DomainError("esscher_weights: the cloud has no mass at 0");

    const std::size_t n = cloud.points.size();
    std::vector<double> zp(n);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        zp[i] = solve.theta.dot(cloud.points[i]);
        top = std::max(top, zp[i]);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        zp[i] = std::exp(zp[i] - top);
        norm += cloud.weights[i] * zp[i];
    }
    for (auto& z : zp)
        z /= norm;

    const EsscherMoments tilted = esscher_moments(cloud, zp);
    double lambda = 1.0;
    if (tilted.second > 0.0)
        lambda = std::min(lambda, eta / tilted.second);
    if (tilted.off_zero > 0.0)
        lambda = std::min(lambda, eta / tilted.off_zero);

    EsscherResult r;
    r.theta_star = solve.theta;
    r.eta = eta;
    r.lambda = lambda;
    r.mu = (1.0 - lambda) / zero;
    r.grad_norm = solve.grad_norm;
    r.iterations = solve.iterations;
    r.z_weights.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        r.z_weights[i] = lambda * zp[i] + (cloud.points[i].isZero(0.0) ? r.mu : 0.0);
    r.moments = esscher_moments(cloud, r.z_weights);
    return r;
}

EsscherResult esscher_transform(const IncrementCloud& cloud, double eta, double tol)
{
    return esscher_weights(cloud, esscher_minimize(cloud, tol), eta);
}

}  // namespace cpslab
