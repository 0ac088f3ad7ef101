#include "cpslab/paths.hpp"

namespace cpslab::reference {

std::vector<std::vector<double>> sample_fbm_driver(double hurst, const GridPtr& grid, std::size_t n_paths,
                                                   std::uint64_t seed)
{
    if (n_paths == 0)
        throw DomainError("n_paths must be at least 1");
    std::vector<double> instants(grid->times().begin() + 1, grid->times().end());
    const auto factor = factor_covariance(fbm_covariance_matrix(instants, hurst));
    const std::size_t m = instants.size();

    std::vector<std::vector<double>> out(n_paths, std::vector<double>(m + 1, 0.0));
    std::vector<double> z(m);
    for (std::size_t p = 0; p < n_paths; ++p) {
        auto rng = stream_rng(seed, p);
        std::normal_distribution<double> normal;
        for (auto& v : z)
            v = normal(rng);
        for (std::size_t r = 0; r < m; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c <= r; ++c)
                acc += factor.lower(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * z[c];
            out[p][r + 1] = acc;
        }
    }
    return out;
}

}  // namespace cpslab::reference
