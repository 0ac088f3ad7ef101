#include "cpslab/skeleton.hpp"

#include <cmath>
#include <string>

namespace cpslab {

namespace {

// +1 above the band, -1 below, 0 inside.
int exit_side(double value, double anchor, double eps, LadderMode mode)
{
    if (mode == LadderMode::multiplicative) {
        const double r = value / anchor;
        if (r >= 1.0 + eps)
            return +1;
        if (r <= 1.0 / (1.0 + eps))
            return -1;
        return 0;
    }
    if (value - anchor >= eps)
        return +1;
    if (anchor - value >= eps)
        return -1;
    return 0;
}

double barrier(double anchor, int side, double eps, LadderMode mode)
{
    if (mode == LadderMode::multiplicative)
        return side > 0 ? anchor * (1.0 + eps) : anchor / (1.0 + eps);
    return anchor + side * eps;
}

int quantize(double value, double origin, double eps, LadderMode mode)
{
    if (mode == LadderMode::multiplicative)
        return static_cast<int>(std::lround(std::log(value / origin) / std::log1p(eps)));
    return static_cast<int>(std::lround((value - origin) / eps));
}

double overshoot(double value, double reference, LadderMode mode)
{
    return mode == LadderMode::multiplicative ? std::abs(std::log(value / reference)) : std::abs(value - reference);
}

}  // namespace

bool inside_band(double value, double anchor, double eps, LadderMode mode)
{
    return exit_side(value, anchor, eps, mode) == 0;
}

LadderSkeleton extract_ladder(const SamplePath& path, double eps, LadderMode mode, const LadderOptions& options)
{
    if (!(eps > 0.0))
        throw DomainError("extract_ladder: eps must be positive");
    if (mode == LadderMode::multiplicative)
        path.validate();

    const std::size_t d = path.dim;
    const std::size_t last = path.size() - 1;
    const auto& grid = *path.grid;

    LadderSkeleton skel;
    skel.eps = eps;
    skel.mode = mode;
    skel.dim = d;
    skel.snapped = options.snap && d == 1;

    std::vector<double> origin(path.at(0).begin(), path.at(0).end());
    if (options.initial_anchor) {
        if (options.initial_anchor->size() != d)
            throw DomainError("extract_ladder: initial anchor has the wrong dimension");
        origin = *options.initial_anchor;
        for (std::size_t i = 0; i < d; ++i)
            if (!inside_band(path.value(0, i), origin[i], eps, mode))
                throw DomainError("extract_ladder: S_0 is outside the initial anchor's band");
    }

    std::vector<double> anchor = origin;
    std::vector<int> level(d, 0);
    skel.stops.push_back({0, grid[0], anchor, 0, level});

    auto push = [&](std::size_t k, int mark) {
        if (skel.stops.size() >= options.max_stops)
            throw NumericalError("ladder overflow: more than " + std::to_string(options.max_stops) +
                                 " stops; eps too small for this path");
        skel.stops.push_back({k, grid[k], anchor, mark, level});
    };

    for (std::size_t k = 1; k < last; ++k) {
        if (skel.snapped) {
            const double s = path.value(k);
            int side = exit_side(s, anchor[0], eps, mode);
            bool first = true;
            while (side != 0) {
                if (!first)
                    ++skel.diagnostics.multi_level_crossings;
                first = false;
                anchor[0] = barrier(anchor[0], side, eps, mode);
                level[0] += side;
                push(k, side);
                side = exit_side(s, anchor[0], eps, mode);
            }
            if (!first)
                skel.diagnostics.max_overshoot =
                    std::max(skel.diagnostics.max_overshoot, overshoot(s, anchor[0], mode));
            continue;
        }

        int side = 0;
        for (std::size_t i = 0; i < d && side == 0; ++i)
            side = exit_side(path.value(k, i), anchor[i], eps, mode);
        if (side == 0)
            continue;
        for (std::size_t i = 0; i < d; ++i) {
            const double s = path.value(k, i);
            const int si = exit_side(s, anchor[i], eps, mode);
            if (si != 0)
                skel.diagnostics.max_overshoot =
                    std::max(skel.diagnostics.max_overshoot,
                             overshoot(s, barrier(anchor[i], si, eps, mode), mode));
        }
        int mark = 1;
        if (d == 1)
            mark = path.value(k) > anchor[0] ? +1 : -1;
        for (std::size_t i = 0; i < d; ++i) {
            anchor[i] = path.value(k, i);
            level[i] = quantize(anchor[i], origin[i], eps, mode);
        }
        push(k, mark);
    }

    push(last, 0);
    skel.retired_at = skel.stops.size() - 1;
    return skel;
}

std::vector<LadderSkeleton> extract_ladders(const std::vector<SamplePath>& paths, double eps, LadderMode mode,
                                            const LadderOptions& options, Exec exec)
{
    std::vector<LadderSkeleton> out(paths.size());
    const auto n = static_cast<std::ptrdiff_t>(paths.size());
    // Exceptions may not cross the OpenMP region; capture the first by path order.
    std::vector<std::string> errors(paths.size());
    std::vector<int> kinds(paths.size(), 0);
#pragma omp parallel for schedule(dynamic, 16) num_threads(exec.workers) if (exec.workers > 1)
    for (std::ptrdiff_t p = 0; p < n; ++p) {
        try {
            out[static_cast<std::size_t>(p)] = extract_ladder(paths[static_cast<std::size_t>(p)], eps, mode, options);
        } catch (const NumericalError& e) {
            errors[static_cast<std::size_t>(p)] = e.what();
            kinds[static_cast<std::size_t>(p)] = 1;
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(p)] = e.what();
            kinds[static_cast<std::size_t>(p)] = 2;
        }
    }
    for (std::size_t p = 0; p < paths.size(); ++p) {
        if (kinds[p] == 1)
            throw NumericalError("path " + std::to_string(p) + ": " + errors[p]);
        if (kinds[p] == 2)
            throw DomainError("path " + std::to_string(p) + ": " + errors[p]);
    }
    return out;
}

std::vector<std::vector<double>> ladder_increments(const LadderSkeleton& skeleton)
{
    std::vector<std::vector<double>> out;
    out.reserve(skeleton.stops.size());
    for (std::size_t n = 1; n < skeleton.stops.size(); ++n) {
        std::vector<double> delta(skeleton.dim, 0.0);
        if (skeleton.stops[n].mark != 0)
            for (std::size_t i = 0; i < skeleton.dim; ++i)
                delta[i] = skeleton.stops[n].anchor[i] - skeleton.stops[n - 1].anchor[i];
        out.push_back(std::move(delta));
    }
    return out;
}

namespace reference {

std::vector<LadderSkeleton> extract_ladders(const std::vector<SamplePath>& paths, double eps, LadderMode mode,
                                            const LadderOptions& options)
{
    std::vector<LadderSkeleton> out;
    out.reserve(paths.size());
    for (const auto& p : paths)
        out.push_back(extract_ladder(p, eps, mode, options));
    return out;
}

}  // namespace reference

}  // namespace cpslab
