#include "cpslab/paths.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <omp.h>

namespace cpslab {

namespace {

// Paths are sampled in fixed-size blocks so the GEMM shapes (and hence the
// rounding) do not depend on the worker count.
constexpr std::size_t kBlock = 64;

Eigen::MatrixXd correlation_factor(const GbmSpec& spec)
{
    const auto d = static_cast<Eigen::Index>(spec.dim());
    if (spec.correlation.size() == 0)
        return Eigen::MatrixXd::Identity(d, d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spec.correlation);
    Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

std::vector<double> positive_times(const TimeGrid& grid)
{
    return {grid.times().begin() + 1, grid.times().end()};
}

// Fill column j of `z` with standard normals from path stream `stream`.
void fill_normals(Eigen::MatrixXd& z, Eigen::Index col, std::uint64_t seed, std::uint64_t stream)
{
    auto rng = stream_rng(seed, stream);
    std::normal_distribution<double> normal;
    for (Eigen::Index r = 0; r < z.rows(); ++r)
        z(r, col) = normal(rng);
}

std::vector<std::vector<double>> correlated_draws(const Eigen::MatrixXd& lower, std::size_t n,
                                                  std::uint64_t seed, Exec exec)
{
    const auto m = lower.rows();
    std::vector<std::vector<double>> out(n, std::vector<double>(static_cast<std::size_t>(m)));
    const std::size_t n_blocks = (n + kBlock - 1) / kBlock;

#pragma omp parallel for schedule(dynamic) num_threads(exec.workers) if (exec.workers > 1)
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t first = b * kBlock;
        const std::size_t count = std::min(kBlock, n - first);
        Eigen::MatrixXd z(m, static_cast<Eigen::Index>(kBlock));
        z.setZero();
        for (std::size_t j = 0; j < count; ++j)
            fill_normals(z, static_cast<Eigen::Index>(j), seed, first + j);
        Eigen::MatrixXd x = lower.triangularView<Eigen::Lower>() * z;
        for (std::size_t j = 0; j < count; ++j)
            for (Eigen::Index r = 0; r < m; ++r)
                out[first + j][static_cast<std::size_t>(r)] = x(r, static_cast<Eigen::Index>(j));
    }
    return out;
}

SamplePath gbm_path(const GbmSpec& spec, const Eigen::MatrixXd& factor, const GridPtr& grid,
                    std::uint64_t seed, std::uint64_t stream)
{
    const std::size_t d = spec.dim();
    SamplePath p{grid, d, std::vector<double>(grid->size() * d)};
    auto rng = stream_rng(seed, stream);
    std::normal_distribution<double> normal;
    std::vector<double> logs(d), z(d);
    for (std::size_t i = 0; i < d; ++i) {
        logs[i] = std::log(spec.s0[i]);
        p.values[i] = spec.s0[i];
    }
    for (std::size_t k = 1; k < grid->size(); ++k) {
        const double dt = (*grid)[k] - (*grid)[k - 1];
        for (auto& v : z)
            v = normal(rng);
        for (std::size_t i = 0; i < d; ++i) {
            double w = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                w += factor(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * z[j];
            logs[i] += (spec.mu[i] - 0.5 * spec.sigma[i] * spec.sigma[i]) * dt + spec.sigma[i] * std::sqrt(dt) * w;
            p.values[k * d + i] = std::exp(logs[i]);
        }
    }
    return p;
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times))
{
    if (times_.size() < 2)
        throw DomainError("time grid needs at least two instants");
    if (times_.front() != 0.0)
        throw DomainError("time grid must start at 0");
    for (std::size_t k = 1; k < times_.size(); ++k)
        if (!(times_[k] > times_[k - 1]))
            throw DomainError("time grid must be strictly increasing (index " + std::to_string(k) + ")");
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t steps)
{
    if (!(horizon > 0.0) || steps == 0)
        throw DomainError("uniform grid needs T > 0 and at least one step");
    std::vector<double> t(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k)
        t[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
    t.back() = horizon;
    return TimeGrid(std::move(t));
}

std::size_t TimeGrid::index_of(double t) const
{
    auto it = std::lower_bound(times_.begin(), times_.end(), t - 1e-12 * std::max(1.0, std::abs(t)));
    if (it == times_.end() || std::abs(*it - t) > 1e-12 * std::max(1.0, std::abs(t)))
        throw ValidationError("instant " + std::to_string(t) + " is not on the time grid");
    return static_cast<std::size_t>(it - times_.begin());
}

void SamplePath::validate() const
{
    if (!grid)
        throw DomainError("sample path has no grid");
    if (dim == 0 || values.size() != grid->size() * dim)
        throw DomainError("sample path size does not match its grid");
    for (std::size_t j = 0; j < values.size(); ++j)
        if (!(values[j] > 0.0) || !std::isfinite(values[j])) {
            std::ostringstream os;
            os << "sample path value at grid index " << j / dim << ", asset " << j % dim << " is not positive";
            throw DomainError(os.str());
        }
}

void FbmSpec::validate() const
{
    if (!(hurst > 0.0 && hurst < 1.0))
        throw DomainError("hurst must lie in (0,1)");
    if (!(sigma >= 0.0))
        throw DomainError("sigma must be nonnegative");
    if (!(s0 > 0.0))
        throw DomainError("s0 must be positive");
}

void GbmSpec::validate() const
{
    const std::size_t d = s0.size();
    if (d == 0 || mu.size() != d || sigma.size() != d)
        throw DomainError("gbm spec: mu, sigma and s0 must have the same positive length");
    for (std::size_t i = 0; i < d; ++i) {
        if (!(sigma[i] > 0.0))
            throw DomainError("gbm spec: sigma must be positive");
        if (!(s0[i] > 0.0))
            throw DomainError("gbm spec: s0 must be positive");
    }
    if (correlation.size() != 0) {
        if (correlation.rows() != static_cast<Eigen::Index>(d) || correlation.cols() != static_cast<Eigen::Index>(d))
            throw DomainError("gbm spec: correlation must be d x d");
        if ((correlation - correlation.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw DomainError("gbm spec: correlation must be symmetric");
    }
}

double fbm_covariance(double t, double s, double hurst)
{
    if (!(hurst > 0.0 && hurst < 1.0))
        throw DomainError("fbm_covariance: hurst must lie in (0,1)");
    if (t < 0.0 || s < 0.0)
        throw DomainError("fbm_covariance: instants must be nonnegative");
    const double h2 = 2.0 * hurst;
    return 0.5 * (std::pow(t, h2) + std::pow(s, h2) - std::pow(std::abs(t - s), h2));
}

Eigen::MatrixXd fbm_covariance_matrix(std::span<const double> instants, double hurst)
{
    const auto n = static_cast<Eigen::Index>(instants.size());
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            c(i, j) = c(j, i) = fbm_covariance(instants[static_cast<std::size_t>(i)],
                                               instants[static_cast<std::size_t>(j)], hurst);
    return c;
}

CovarianceFactor factor_covariance(const Eigen::MatrixXd& cov)
{
    const auto n = cov.rows();
    if (n == 0)
        return {};
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success)
        return {llt.matrixL(), 0.0, 0};

    const double base = 1e-12 * std::max(cov.trace(), 0.0) / static_cast<double>(n);
    double jitter = base;
    for (int retry = 1; retry <= 3; ++retry, jitter *= 10.0) {
        Eigen::MatrixXd shifted = cov;
        shifted.diagonal().array() += jitter;
        llt.compute(shifted);
        if (llt.info() == Eigen::Success)
            return {llt.matrixL(), jitter, retry};
    }

    // Locate the failing leading minor on the most-regularized matrix.
    Eigen::MatrixXd a = cov;
    a.diagonal().array() += jitter / 10.0;
    Eigen::Index failing = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        double diag = a(j, j) - a.row(j).head(j).squaredNorm();
        if (!(diag > 0.0)) {
            failing = j;
            break;
        }
        a(j, j) = std::sqrt(diag);
        for (Eigen::Index i = j + 1; i < n; ++i)
            a(i, j) = (a(i, j) - a.row(i).head(j).dot(a.row(j).head(j))) / a(j, j);
    }
    throw NumericalError("covariance factorization failed after jitter at leading minor " +
                         std::to_string(failing + 1));
}

std::vector<std::vector<double>> sample_fbm_driver(double hurst, const GridPtr& grid, std::size_t n_paths,
                                                   std::uint64_t seed, Exec exec)
{
    if (n_paths == 0)
        throw DomainError("n_paths must be at least 1");
    auto instants = positive_times(*grid);
    const auto factor = factor_covariance(fbm_covariance_matrix(instants, hurst));
    auto draws = correlated_draws(factor.lower, n_paths, seed, exec);
    for (auto& row : draws)
        row.insert(row.begin(), 0.0);
    return draws;
}

std::vector<SamplePath> sample_gfbm(const FbmSpec& spec, const GridPtr& grid, std::size_t n_paths,
                                    std::uint64_t seed, Exec exec)
{
    spec.validate();
    auto drivers = sample_fbm_driver(spec.hurst, grid, n_paths, seed, exec);
    std::vector<SamplePath> out(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
        SamplePath& path = out[p];
        path.grid = grid;
        path.values.resize(grid->size());
        for (std::size_t k = 0; k < grid->size(); ++k)
            path.values[k] = spec.s0 * std::exp(spec.sigma * drivers[p][k] + spec.drift_at((*grid)[k]));
    }
    return out;
}

std::vector<SamplePath> sample_gbm(const GbmSpec& spec, const GridPtr& grid, std::size_t n_paths,
                                   std::uint64_t seed, Exec exec)
{
    spec.validate();
    if (n_paths == 0)
        throw DomainError("n_paths must be at least 1");
    const Eigen::MatrixXd factor = correlation_factor(spec);
    std::vector<SamplePath> out(n_paths);
#pragma omp parallel for schedule(static) num_threads(exec.workers) if (exec.workers > 1)
    for (std::size_t p = 0; p < n_paths; ++p)
        out[p] = gbm_path(spec, factor, grid, seed, p);
    return out;
}

std::vector<SamplePath> sample_gbm(double mu, double sigma, double s0, const GridPtr& grid, std::size_t n_paths,
                                   std::uint64_t seed, Exec exec)
{
    return sample_gbm(GbmSpec{{mu}, {sigma}, {s0}, {}}, grid, n_paths, seed, exec);
}

SamplePath integrate_path(const LogPath& path)
{
    if (!path.grid || path.values.size() != path.grid->size())
        throw DomainError("integrate_path: values do not match the grid");
    const auto& t = path.grid->times();
    SamplePath out{path.grid, 1, std::vector<double>(t.size())};
    double y = 0.0;
    out.values[0] = 1.0;
    for (std::size_t k = 1; k < t.size(); ++k) {
        y += 0.5 * (path.values[k - 1] + path.values[k]) * (t[k] - t[k - 1]);
        out.values[k] = std::exp(y);
    }
    return out;
}

std::vector<SamplePath> sample_integrated(const FbmSpec& spec, const GridPtr& grid, std::size_t n_paths,
                                          std::uint64_t seed, Exec exec)
{
    spec.validate();
    auto drivers = sample_fbm_driver(spec.hurst, grid, n_paths, seed, exec);
    std::vector<SamplePath> out(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
        LogPath x{grid, std::vector<double>(grid->size())};
        for (std::size_t k = 0; k < grid->size(); ++k)
            x.values[k] = spec.sigma * drivers[p][k] + spec.drift_at((*grid)[k]);
        out[p] = integrate_path(x);
        for (auto& v : out[p].values)
            v *= spec.s0;
    }
    return out;
}

std::vector<double> gfbm_driver(const SamplePath& path, const FbmSpec& spec)
{
    if (!(spec.sigma > 0.0))
        throw DomainError("gfbm_driver: sigma must be positive to invert the path");
    std::vector<double> x(path.size());
    for (std::size_t k = 0; k < path.size(); ++k)
        x[k] = (std::log(path.value(k) / spec.s0) - spec.drift_at((*path.grid)[k])) / spec.sigma;
    return x;
}

GaussianConditioning condition_gaussian(const SamplePath& history, const FbmSpec& spec,
                                        std::span<const double> remaining_times)
{
    spec.validate();
    history.validate();
    const double v = history.grid->horizon();
    for (double t : remaining_times)
        if (!(t > v))
            throw DomainError("condition_gaussian: remaining times must lie after the history");

    GaussianConditioning out;
    out.times.assign(remaining_times.begin(), remaining_times.end());
    const Eigen::MatrixXd rr = fbm_covariance_matrix(remaining_times, spec.hurst);

    // The value at t = 0 is known (X_0 = 0) and carries no information.
    std::vector<double> observed_times = positive_times(*history.grid);
    const auto np = static_cast<Eigen::Index>(observed_times.size());
    const auto nr = static_cast<Eigen::Index>(remaining_times.size());
    if (np == 0) {
        out.mean = Eigen::VectorXd::Zero(nr);
        out.cov = rr;
        return out;
    }

    const auto driver = gfbm_driver(history, spec);
    Eigen::VectorXd xp(np);
    for (Eigen::Index i = 0; i < np; ++i)
        xp(i) = driver[static_cast<std::size_t>(i) + 1];

    Eigen::MatrixXd pp = fbm_covariance_matrix(observed_times, spec.hurst);
    Eigen::MatrixXd rp(nr, np);
    for (Eigen::Index i = 0; i < nr; ++i)
        for (Eigen::Index j = 0; j < np; ++j)
            rp(i, j) = fbm_covariance(remaining_times[static_cast<std::size_t>(i)],
                                      observed_times[static_cast<std::size_t>(j)], spec.hurst);

    const auto factor = factor_covariance(pp);
    if (factor.jitter > 0.0) {
        out.jitter = factor.jitter;
        out.warning = "prefix covariance regularized with jitter " + std::to_string(factor.jitter);
    }
    // W = L^{-1} rp^T, so rp pp^{-1} rp^T = W^T W and the mean is W^T L^{-1} xp.
    const auto lower = factor.lower.triangularView<Eigen::Lower>();
    Eigen::MatrixXd w = lower.solve(rp.transpose());
    Eigen::VectorXd y = lower.solve(xp);
    out.mean = w.transpose() * y;
    out.cov = rr - w.transpose() * w;
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    return out;
}

std::vector<std::vector<double>> sample_conditional(const GaussianConditioning& cond, std::size_t n,
                                                    std::uint64_t seed, Exec exec)
{
    const auto factor = factor_covariance(cond.cov);
    auto draws = correlated_draws(factor.lower, n, seed, exec);
    for (auto& row : draws)
        for (std::size_t i = 0; i < row.size(); ++i)
            row[i] += cond.mean(static_cast<Eigen::Index>(i));
    return draws;
}

std::vector<SamplePath> continue_gfbm(const SamplePath& path, std::size_t v, const FbmSpec& spec,
                                      std::size_t n, std::uint64_t seed, Exec exec)
{
    const auto& t = path.grid->times();
    if (v + 1 >= t.size())
        throw DomainError("continue_gfbm: cut index must precede the horizon");
    GaussianConditioning cond;
    std::vector<double> remaining(t.begin() + static_cast<std::ptrdiff_t>(v) + 1, t.end());
    if (v == 0) {
        cond.times = remaining;
        cond.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(remaining.size()));
        cond.cov = fbm_covariance_matrix(remaining, spec.hurst);
    } else {
        std::vector<double> prefix_times(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(v) + 1);
        SamplePath history{make_grid(TimeGrid(std::move(prefix_times))), 1,
                           std::vector<double>(path.values.begin(), path.values.begin() + static_cast<std::ptrdiff_t>(v) + 1)};
        cond = condition_gaussian(history, spec, remaining);
    }
    auto draws = sample_conditional(cond, n, seed, exec);
    std::vector<SamplePath> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = SamplePath{path.grid, 1, path.values};
        for (std::size_t i = 0; i < remaining.size(); ++i)
            out[j].values[v + 1 + i] = spec.s0 * std::exp(spec.sigma * draws[j][i] + spec.drift_at(remaining[i]));
    }
    return out;
}

std::vector<SamplePath> continue_gbm(const SamplePath& path, std::size_t v, const GbmSpec& spec,
                                     std::size_t n, std::uint64_t seed, Exec exec)
{
    spec.validate();
    const std::size_t d = spec.dim();
    if (path.dim != d)
        throw DomainError("continue_gbm: path dimension does not match the spec");
    const Eigen::MatrixXd factor = correlation_factor(spec);
    const auto& grid = *path.grid;
    std::vector<SamplePath> out(n);
#pragma omp parallel for schedule(static) num_threads(exec.workers) if (exec.workers > 1)
    for (std::size_t j = 0; j < n; ++j) {
        SamplePath p{path.grid, d, path.values};
        auto rng = stream_rng(seed, j);
        std::normal_distribution<double> normal;
        std::vector<double> logs(d), z(d);
        for (std::size_t i = 0; i < d; ++i)
            logs[i] = std::log(path.value(v, i));
        for (std::size_t k = v + 1; k < grid.size(); ++k) {
            const double dt = grid[k] - grid[k - 1];
            for (auto& x : z)
                x = normal(rng);
            for (std::size_t i = 0; i < d; ++i) {
                double w = 0.0;
                for (std::size_t m = 0; m < d; ++m)
                    w += factor(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) * z[m];
                logs[i] += (spec.mu[i] - 0.5 * spec.sigma[i] * spec.sigma[i]) * dt + spec.sigma[i] * std::sqrt(dt) * w;
                p.values[k * d + i] = std::exp(logs[i]);
            }
        }
        out[j] = std::move(p);
    }
    return out;
}

namespace reference {

std::vector<SamplePath> sample_gbm(const GbmSpec& spec, const GridPtr& grid, std::size_t n_paths,
                                   std::uint64_t seed)
{
    spec.validate();
    const Eigen::MatrixXd factor = correlation_factor(spec);
    std::vector<SamplePath> out;
    out.reserve(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p)
        out.push_back(gbm_path(spec, factor, grid, seed, p));
    return out;
}

}  // namespace reference

}  // namespace cpslab
