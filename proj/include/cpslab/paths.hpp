#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpslab/common.hpp"

namespace cpslab {

/// Discretized time axis: times[0] == 0, strictly increasing, times.back() == T.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> times);
    static TimeGrid uniform(double horizon, std::size_t steps);

    const std::vector<double>& times() const { return times_; }
    std::size_t size() const { return times_.size(); }
    std::size_t steps() const { return times_.size() - 1; }
    double horizon() const { return times_.back(); }
    double operator[](std::size_t k) const { return times_[k]; }

    /// Index of the grid time equal to `t` (within 1e-12 relative); throws if absent.
    std::size_t index_of(double t) const;

private:
    std::vector<double> times_;
};

using GridPtr = std::shared_ptr<const TimeGrid>;

inline GridPtr make_grid(TimeGrid g) { return std::make_shared<const TimeGrid>(std::move(g)); }

/// Strictly positive d-coordinate price path on a grid. Values are row-major:
/// value(k, i) is asset i at grid time k.
struct SamplePath {
    GridPtr grid;
    std::size_t dim = 1;
    std::vector<double> values;

    double value(std::size_t k, std::size_t i = 0) const { return values[k * dim + i]; }
    std::span<const double> at(std::size_t k) const { return {values.data() + k * dim, dim}; }
    std::size_t size() const { return grid->size(); }

    /// Throws DomainError unless sizes agree and every coordinate is > 0.
    void validate() const;
};

/// Real-valued (possibly negative) path, e.g. a log-price or a Gaussian driver.
struct LogPath {
    GridPtr grid;
    std::vector<double> values;
};

struct FbmSpec {
    double hurst = 0.5;
    double sigma = 1.0;
    double s0 = 1.0;
    std::function<double(double)> drift;  // f_t; empty means f == 0

    void validate() const;
    double drift_at(double t) const { return drift ? drift(t) : 0.0; }
};

struct GbmSpec {
    std::vector<double> mu;
    std::vector<double> sigma;
    std::vector<double> s0;
    Eigen::MatrixXd correlation;  // empty means independent assets

    std::size_t dim() const { return s0.size(); }
    void validate() const;
};

/// Conditional law of the fBm driver on the remaining grid given an observed prefix.
struct GaussianConditioning {
    std::vector<double> times;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double jitter = 0.0;
    std::string warning;  // non-empty when the prefix covariance had to be regularized
};

/// Lower-triangular factor of a covariance matrix with the jitter that was needed.
struct CovarianceFactor {
    Eigen::MatrixXd lower;
    double jitter = 0.0;
    int retries = 0;
};

double fbm_covariance(double t, double s, double hurst);

/// Covariance matrix of fBm at the given (positive) instants.
Eigen::MatrixXd fbm_covariance_matrix(std::span<const double> instants, double hurst);

/// Cholesky with jitter escalation: 1e-12 * trace/N, times 10 per retry, at most 3 retries.
/// Throws NumericalError naming the failing leading minor.
CovarianceFactor factor_covariance(const Eigen::MatrixXd& cov);

/// Exact fBm driver X on the grid (X_0 = 0), one row per path.
std::vector<std::vector<double>> sample_fbm_driver(double hurst, const GridPtr& grid, std::size_t n_paths,
                                                   std::uint64_t seed, Exec exec = {});

std::vector<SamplePath> sample_gfbm(const FbmSpec& spec, const GridPtr& grid, std::size_t n_paths,
                                    std::uint64_t seed, Exec exec = {});

std::vector<SamplePath> sample_gbm(const GbmSpec& spec, const GridPtr& grid, std::size_t n_paths,
                                   std::uint64_t seed, Exec exec = {});

std::vector<SamplePath> sample_gbm(double mu, double sigma, double s0, const GridPtr& grid, std::size_t n_paths,
                                   std::uint64_t seed, Exec exec = {});

/// exp of the trapezoid cumulative integral of `path`.
SamplePath integrate_path(const LogPath& path);

/// S = s0 * exp(int_0^t (sigma * B^H_s + f_s) ds): C^1 trajectories.
std::vector<SamplePath> sample_integrated(const FbmSpec& spec, const GridPtr& grid, std::size_t n_paths,
                                          std::uint64_t seed, Exec exec = {});

/// Log-driver X = (ln(S/s0) - f) / sigma of a geometric fBm path.
std::vector<double> gfbm_driver(const SamplePath& path, const FbmSpec& spec);

/// Gaussian conditioning of the driver on `history` (a prefix path on its own grid,
/// starting at t = 0) for the instants `remaining_times` (all > history horizon).
GaussianConditioning condition_gaussian(const SamplePath& history, const FbmSpec& spec,
                                        std::span<const double> remaining_times);

/// Draws of the conditional driver, one row per draw.
std::vector<std::vector<double>> sample_conditional(const GaussianConditioning& cond, std::size_t n,
                                                    std::uint64_t seed, Exec exec = {});

/// Full-grid continuations of `path` after grid index `v` under geometric fBm.
std::vector<SamplePath> continue_gfbm(const SamplePath& path, std::size_t v, const FbmSpec& spec,
                                      std::size_t n, std::uint64_t seed, Exec exec = {});

/// Full-grid continuations of `path` after grid index `v` under GBM (Markov restart).
std::vector<SamplePath> continue_gbm(const SamplePath& path, std::size_t v, const GbmSpec& spec,
                                     std::size_t n, std::uint64_t seed, Exec exec = {});

/// Plain-loop implementations of the sampling kernels. Same streams, same
/// arithmetic up to summation order; the parallel kernels are tested against them.
namespace reference {

std::vector<std::vector<double>> sample_fbm_driver(double hurst, const GridPtr& grid, std::size_t n_paths,
                                                   std::uint64_t seed);
std::vector<SamplePath> sample_gbm(const GbmSpec& spec, const GridPtr& grid, std::size_t n_paths,
                                   std::uint64_t seed);

}  // namespace reference

}  // namespace cpslab
