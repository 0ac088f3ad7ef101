#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpslab/common.hpp"
#include "cpslab/hull.hpp"

namespace cpslab {

/// Finite conditional law of an increment: atoms x_i with probabilities w_i.
struct IncrementCloud {
    std::vector<Eigen::VectorXd> points;
    std::vector<double> weights;

    std::size_t dim() const { return points.empty() ? 0 : static_cast<std::size_t>(points.front().size()); }
    /// Total weight on atoms equal to the zero vector.
    double zero_mass() const;
    /// Throws DomainError unless weights are positive, sum to 1 (1e-12) and dimensions agree.
    void validate() const;

    /// Equal-weight cloud over samples; repeated samples are kept as separate atoms.
    static IncrementCloud empirical(std::vector<Eigen::VectorXd> samples);
};

struct EsscherMoments {
    double mass = 0.0;                 // sum w z
    Eigen::VectorXd mean;              // sum w z x
    double second = 0.0;               // sum w z |x|^2
    double off_zero = 0.0;             // sum_{x != 0} w z
};

struct EsscherResult {
    Eigen::VectorXd theta_star;
    std::vector<double> z_weights;
    double eta = 0.0;
    double lambda = 1.0;
    double mu = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    EsscherMoments moments;

    /// One JSON line of solve diagnostics.
    std::string diagnostics_json() const;
};

EsscherMoments esscher_moments(const IncrementCloud& cloud, const std::vector<double>& z);

InteriorMargin check_interior(const IncrementCloud& cloud);

/// phi(theta) = sum w_i exp(theta . x_i)
double esscher_phi(const IncrementCloud& cloud, const Eigen::VectorXd& theta);

struct EsscherSolve {
    Eigen::VectorXd theta;
    double grad_norm = 0.0;
    int iterations = 0;
};

/// Damped Newton on log phi from theta = 0 with Armijo backtracking. `tol` bounds the
/// gradient norm of phi at the returned point.
EsscherSolve esscher_minimize(const IncrementCloud& cloud, double tol = 1e-12, int max_iter = 200);

/// Z = lambda Z' + mu 1{x = 0}, Z' = exp(theta* . x)/phi(theta*), lambda maximal in (0,1]
/// with lambda E[Z'|x|^2] <= eta and lambda E[Z' 1{x != 0}] <= eta.
EsscherResult esscher_weights(const IncrementCloud& cloud, const EsscherSolve& solve, double eta);

/// check_interior + esscher_minimize + esscher_weights.
EsscherResult esscher_transform(const IncrementCloud& cloud, double eta, double tol = 1e-12);

}  // namespace cpslab
