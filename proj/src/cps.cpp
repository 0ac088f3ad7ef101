#include "cpslab/cps.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cpslab {

namespace {

std::vector<double> normalized_weights(const std::vector<double>& given, std::size_t n)
{
    if (given.empty())
        return std::vector<double>(n, n ? 1.0 / static_cast<double>(n) : 0.0);
    if (given.size() != n)
        throw DomainError("cps: one sample weight per skeleton");
    double s = 0.0;
    for (double w : given) {
        if (!(w > 0.0))
            throw DomainError("cps: sample weights must be positive");
        s += w;
    }
    std::vector<double> out(given);
    for (auto& w : out)
        w /= s;
    return out;
}

void check_paths(const std::vector<LadderSkeleton>& skeletons, const std::vector<SamplePath>& paths)
{
    if (!paths.empty() && paths.size() != skeletons.size())
        throw DomainError("cps: paths and skeletons differ in number");
}

// Fill grid indices, times and stop prices.
CpsPath frame(const LadderSkeleton& sk, const SamplePath* path)
{
    CpsPath cp;
    cp.dim = sk.dim;
    for (const auto& st : sk.stops) {
        cp.grid_index.push_back(st.grid_index);
        cp.tau.push_back(st.tau);
        for (std::size_t i = 0; i < sk.dim; ++i) {
            cp.price.push_back(path ? path->value(st.grid_index, i) : st.anchor[i]);
            cp.shadow.push_back(st.anchor[i]);
        }
    }
    return cp;
}

MartingaleCertificate certify(const ConsistentPriceSystem& cps, const CpsOptions& options)
{
    MartingaleCertificate cert;
    const auto& w = cps.sample_weights;
    const std::size_t d = cps.dim;
    std::size_t max_n = 0;
    for (const auto& p : cps.paths)
        max_n = std::max(max_n, p.stops());

    for (std::size_t n = 1; n < max_n; ++n) {
        StopResidual best;
        best.n = n;
        double best_z = -1.0;
        for (std::size_t i = 0; i < d; ++i) {
            double sw = 0.0, swy = 0.0;
            std::size_t alive = 0;
            for (std::size_t p = 0; p < cps.paths.size(); ++p) {
                const auto& cp = cps.paths[p];
                if (cp.stops() <= n)
                    continue;
                ++alive;
                const double wl = w[p] * cp.prefix_likelihood[n];
                sw += wl;
                swy += wl * (cp.shadow[n * d + i] - cp.shadow[(n - 1) * d + i]);
            }
            if (alive == 0 || !(sw > 0.0))
                continue;
            const double mean = swy / sw;
            double v = 0.0;
            for (std::size_t p = 0; p < cps.paths.size(); ++p) {
                const auto& cp = cps.paths[p];
                if (cp.stops() <= n)
                    continue;
                const double wl = w[p] * cp.prefix_likelihood[n];
                const double y = cp.shadow[n * d + i] - cp.shadow[(n - 1) * d + i];
                v += wl * wl * (y - mean) * (y - mean);
            }
            const double se = std::sqrt(v) / sw;
            const double z = se > 0.0 ? std::abs(mean) / se : (std::abs(mean) > 1e-12 ? INFINITY : 0.0);
            if (z > best_z) {
                best_z = z;
                best.alive = alive;
                best.residual = mean;
                best.stderr_ = se;
            }
        }
        if (best_z < 0.0)
            continue;
        best.checked = best.alive >= options.min_certificate_paths;
        if (best.checked) {
            double scale = 0.0;
            for (const auto& cp : cps.paths)
                if (cp.stops() > n)
                    scale = std::max(scale, std::abs(cp.shadow[(n - 1) * d]));
            best.pass = std::abs(best.residual) <= options.certificate_z * best.stderr_ + 1e-12 * std::max(scale, 1.0);
            ++cert.checked;
            if (!best.pass)
                ++cert.failures;
        }
        cert.stops.push_back(best);
    }
    cert.passed = cert.failures == 0;

    double sl = 0.0;
    for (std::size_t p = 0; p < cps.paths.size(); ++p)
        sl += w[p] * cps.paths[p].likelihood;
    double v = 0.0;
    for (std::size_t p = 0; p < cps.paths.size(); ++p)
        v += w[p] * w[p] * (cps.paths[p].likelihood - sl) * (cps.paths[p].likelihood - sl);
    cert.likelihood_mean = sl;
    cert.likelihood_stderr = std::sqrt(v);
    return cert;
}

void enforce(const SandwichReport& rep, const CpsOptions& options)
{
    if (!rep.passed && options.throw_on_sandwich)
        throw InvariantViolation("sandwich violated: " + rep.message);
}

}  // namespace

double construction_eps(double target_spread)
{
    if (!(target_spread > 0.0))
        throw DomainError("construction_eps: target spread must be positive");
    return std::cbrt(1.0 + target_spread) - 1.0;
}

SandwichReport verify_sandwich(const ConsistentPriceSystem& cps, const std::vector<SamplePath>& paths, double eps)
{
    SandwichReport rep;
    const double band = std::log1p(eps);
    rep.stop_bound = band;
    rep.grid_bound = 3.0 * band;
    rep.per_path_worst.assign(cps.paths.size(), 0.0);
    if (paths.size() != cps.paths.size())
        throw DomainError("verify_sandwich: one path per CPS path");
    const std::size_t d = cps.dim;
    double worst_excess = -INFINITY;

    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& cp = cps.paths[p];
        const auto& path = paths[p];
        if (path.dim != d)
            throw DomainError("verify_sandwich: dimension mismatch");
        double tol = 0.0;
        for (std::size_t k = 0; k + 1 < path.size(); ++k)
            for (std::size_t i = 0; i < d; ++i)
                tol = std::max(tol, std::abs(std::log(path.value(k + 1, i) / path.value(k, i))));

        auto note = [&](double r, double bound, std::size_t k, std::size_t i) {
            rep.per_path_worst[p] = std::max(rep.per_path_worst[p], r);
            const double excess = r - (bound + tol);
            if (excess > worst_excess) {
                worst_excess = excess;
                rep.worst_path = p;
                rep.worst_index = k;
                rep.worst_asset = i;
                rep.worst_time = (*path.grid)[k];
            }
        };

        for (std::size_t n = 0; n < cp.stops(); ++n)
            for (std::size_t i = 0; i < d; ++i) {
                const double r = std::abs(std::log(cp.shadow[n * d + i] / cp.price[n * d + i]));
                if (!std::isfinite(r))
                    throw NumericalError("verify_sandwich: non-positive shadow price");
                rep.worst_stop = std::max(rep.worst_stop, r);
                note(r, band, cp.grid_index[n], i);
            }

        // grid times strictly after stop n and before the next stop's time
        for (std::size_t n = 0; n < cp.stops(); ++n) {
            const std::size_t from = cp.grid_index[n];
            const std::size_t to = n + 1 < cp.stops() ? cp.grid_index[n + 1] : path.size();
            for (std::size_t k = from; k < to; ++k)
                for (std::size_t i = 0; i < d; ++i) {
                    const double s = path.value(k, i);
                    const double x = cp.shadow[n * d + i];
                    const double r = std::max(std::log(x * (1.0 + eps) / s), std::log(s * (1.0 + eps) / x));
                    rep.worst_grid = std::max(rep.worst_grid, r);
                    note(r, 3.0 * band, k, i);
                }
        }
    }
    rep.passed = worst_excess <= 1e-12;
    if (!rep.passed) {
        std::ostringstream os;
        os << "path " << rep.worst_path << ", t = " << rep.worst_time << " (grid index " << rep.worst_index
           << ", asset " << rep.worst_asset << ")";
        rep.message = os.str();
    }
    return rep;
}

Cps1dResult build_cps_1d(const std::vector<LadderSkeleton>& skeletons, const std::vector<SamplePath>& paths,
                         const RetirementSchedule& schedule, const CpsOptions& options, Exec exec)
{
    check_paths(skeletons, paths);
    for (const auto& sk : skeletons)
        if (sk.dim != 1 || sk.mode != LadderMode::multiplicative || !sk.snapped)
            throw DomainError("build_cps_1d: needs snapped multiplicative d = 1 skeletons");
    if (options.smoothing < 0.0)
        throw DomainError("build_cps_1d: smoothing must be nonnegative");

    Cps1dResult out;
    out.cps.dim = 1;
    out.cps.sample_weights = normalized_weights(options.sample_weights, skeletons.size());
    out.counts = count_marks(skeletons, out.cps.sample_weights);
    if (!skeletons.empty()) {
        out.cps.eps = skeletons.front().eps;
        out.cps.eps_effective = std::pow(1.0 + out.cps.eps, 3) - 1.0;
    }
    out.cps.paths.resize(skeletons.size());

    const auto np = static_cast<std::ptrdiff_t>(skeletons.size());
    std::vector<std::string> errors(skeletons.size());
#pragma omp parallel for schedule(dynamic, 16) num_threads(exec.workers) if (exec.workers > 1)
    for (std::ptrdiff_t q = 0; q < np; ++q) {
        const auto p = static_cast<std::size_t>(q);
        try {
            const auto& sk = skeletons[p];
            if (sk.eps != skeletons.front().eps)
                throw DomainError("build_cps_1d: skeletons with different eps");
            CpsPath cp = frame(sk, paths.empty() ? nullptr : &paths[p]);
            cp.prefix_likelihood.assign(1, 1.0);
            WalkState st;
            double l = 1.0;
            for (std::size_t n = 1; n < sk.stops.size(); ++n) {
                const int mark = sk.stops[n].mark;
                const MarkProbs ref = out.counts.probs(n, sk.stops[n - 1].level[0], options.smoothing);
                l *= density_increment(mark, step_measure(schedule.alpha(st), sk.eps), ref);
                cp.prefix_likelihood.push_back(l);
                if (mark == 0)
                    break;
                st = st.advanced(mark);
            }
            cp.likelihood = l;
            out.cps.paths[p] = std::move(cp);
        } catch (const std::exception& e) {
            errors[p] = e.what();
        }
    }
    for (std::size_t p = 0; p < errors.size(); ++p)
        if (!errors[p].empty())
            throw DomainError("path " + std::to_string(p) + ": " + errors[p]);

    for (std::size_t p = 0; p < skeletons.size(); ++p) {
        const auto& sk = skeletons[p];
        const double wl = out.cps.sample_weights[p] * out.cps.paths[p].likelihood;
        if (sk.stops.back().mark == 0 && sk.stops.size() > 1)
            out.terminal_law[sk.stops.back().level[0]] += wl;
        else
            out.censored_mass += wl;
    }

    out.certificate = certify(out.cps, options);
    if (!paths.empty()) {
        out.sandwich = verify_sandwich(out.cps, paths, out.cps.eps);
        enforce(out.sandwich, options);
    }
    return out;
}

namespace {

struct Atom {
    std::size_t path;
    std::size_t n;
};

std::string level_name(const std::vector<int>& lv)
{
    std::string s = "(";
    for (std::size_t i = 0; i < lv.size(); ++i)
        s += (i ? "," : "") + std::to_string(lv[i]);
    return s + ")";
}

}  // namespace

CpsMultiResult build_cps_multi(const std::vector<LadderSkeleton>& skeletons, const std::vector<SamplePath>& paths,
                               const CpsOptions& options, Exec exec)
{
    check_paths(skeletons, paths);
    CpsMultiResult out;
    if (skeletons.empty())
        return out;
    const std::size_t d = skeletons.front().dim;
    const double eps = skeletons.front().eps;
    for (const auto& sk : skeletons)
        if (sk.dim != d || sk.eps != eps)
            throw DomainError("build_cps_multi: skeletons differ in dimension or eps");

    out.cps.dim = d;
    out.cps.eps = eps;
    out.cps.eps_effective = std::pow(1.0 + eps, 3) - 1.0;
    out.cps.sample_weights = normalized_weights(options.sample_weights, skeletons.size());
    const auto& w = out.cps.sample_weights;
    out.cps.paths.resize(skeletons.size());
    for (std::size_t p = 0; p < skeletons.size(); ++p)
        out.cps.paths[p] = frame(skeletons[p], paths.empty() ? nullptr : &paths[p]);

    auto increment = [&](const Atom& a) {
        const auto& sk = skeletons[a.path];
        Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
        if (sk.stops[a.n].mark != 0)
            for (std::size_t i = 0; i < d; ++i)
                x[static_cast<Eigen::Index>(i)] = sk.stops[a.n].anchor[i] - sk.stops[a.n - 1].anchor[i];
        return x;
    };

    // z weight of every (path, n) step
    std::vector<std::vector<double>> z(skeletons.size());
    for (std::size_t p = 0; p < skeletons.size(); ++p)
        z[p].assign(skeletons[p].stops.size(), 1.0);

    struct Group {
        std::size_t n;
        std::string name;
        std::vector<Atom> atoms;
    };

    // Try to solve a group; on success record weights and return true.
    auto solve = [&](const Group& g, std::size_t min_size) -> bool {
        if (g.atoms.size() < min_size)
            return false;
        IncrementCloud cloud;
        double tw = 0.0;
        for (const auto& a : g.atoms)
            tw += w[a.path];
        for (const auto& a : g.atoms) {
            cloud.points.push_back(increment(a));
            cloud.weights.push_back(w[a.path] / tw);
        }
        // exact renormalization against rounding in the division
        double s = 0.0;
        for (double x : cloud.weights)
            s += x;
        for (auto& x : cloud.weights)
            x /= s;
        if (!(cloud.zero_mass() > 0.0) || !check_interior(cloud).ok)
            return false;
        EsscherResult r;
        try {
            r = esscher_transform(cloud, std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(g.n, 1000))));
        } catch (const NumericalError&) {
            return false;
        }
        const double err = std::max(std::abs(r.moments.mass - 1.0), r.moments.mean.lpNorm<Eigen::Infinity>());
        if (err > 1e-8 || r.moments.second > r.eta * (1.0 + 1e-8) || r.moments.off_zero > r.eta * (1.0 + 1e-8))
            throw InvariantViolation("build_cps_multi: moment bound violated at n = " + std::to_string(g.n) +
                                     ", bucket " + g.name);
        out.worst_moment_error = std::max(out.worst_moment_error, err);
        for (std::size_t k = 0; k < g.atoms.size(); ++k)
            z[g.atoms[k].path][g.atoms[k].n] = r.z_weights[k];
        out.solves.push_back({g.n, g.name, g.atoms.size(), std::move(r)});
        return true;
    };

    std::size_t max_stops = 0;
    for (const auto& sk : skeletons)
        max_stops = std::max(max_stops, sk.stops.size());

    std::vector<Group> residuals;
    for (std::size_t n = 1; n < max_stops; ++n) {
        std::map<std::vector<int>, std::vector<Atom>> buckets;
        for (std::size_t p = 0; p < skeletons.size(); ++p)
            if (skeletons[p].stops.size() > n)
                buckets[skeletons[p].stops[n - 1].level].push_back({p, n});
        std::vector<std::pair<std::string, std::vector<Atom>>> ordered;
        for (auto& [lv, atoms] : buckets)
            ordered.emplace_back(level_name(lv), std::move(atoms));

        std::vector<char> done(ordered.size(), 0);
        for (std::size_t b = 0; b < ordered.size(); ++b)
            done[b] = solve({n, ordered[b].first, ordered[b].second}, options.min_bucket);
        Group rest{n, "residual", {}};
        for (std::size_t b = 0; b < ordered.size(); ++b)
            if (!done[b])
                rest.atoms.insert(rest.atoms.end(), ordered[b].second.begin(), ordered[b].second.end());
        if (!rest.atoms.empty() && !solve(rest, options.min_bucket))
            residuals.push_back(std::move(rest));
    }
    if (!residuals.empty()) {
        Group tail{0, "tail", {}};
        for (auto& g : residuals) {
            tail.n = std::max(tail.n, g.n);
            tail.atoms.insert(tail.atoms.end(), g.atoms.begin(), g.atoms.end());
        }
        out.pooled_atoms = tail.atoms.size();
        // the size floor guards variance only; the tail is solved whatever its size
        const bool ok = solve(tail, 1);
        if (!ok)
            throw DomainError("build_cps_multi: no Esscher solution for pooled bucket (n <= " +
                              std::to_string(tail.n) + ", " + std::to_string(tail.atoms.size()) +
                              " atoms): 0 not interior or no retired mass");
    }

    (void)exec;
    for (std::size_t p = 0; p < skeletons.size(); ++p) {
        auto& cp = out.cps.paths[p];
        cp.prefix_likelihood.assign(1, 1.0);
        double l = 1.0;
        for (std::size_t n = 1; n < skeletons[p].stops.size(); ++n) {
            l *= z[p][n];
            cp.prefix_likelihood.push_back(l);
        }
        cp.likelihood = l;
    }

    // L2 control: sum_n E_P[L_n |Delta_n|^2]
    out.l2_per_step.assign(max_stops > 0 ? max_stops - 1 : 0, 0.0);
    std::vector<double> per_path(skeletons.size(), 0.0);
    for (std::size_t p = 0; p < skeletons.size(); ++p)
        for (std::size_t n = 1; n < skeletons[p].stops.size(); ++n) {
            const double v = out.cps.paths[p].prefix_likelihood[n] * increment({p, n}).squaredNorm();
            out.l2_per_step[n - 1] += w[p] * v;
            per_path[p] += v;
        }
    for (double v : out.l2_per_step)
        out.l2_total += v;
    double var = 0.0;
    for (std::size_t p = 0; p < skeletons.size(); ++p)
        var += w[p] * w[p] * (per_path[p] - out.l2_total) * (per_path[p] - out.l2_total);
    out.l2_stderr = std::sqrt(var);

    out.certificate = certify(out.cps, options);
    if (!paths.empty()) {
        out.sandwich = verify_sandwich(out.cps, paths, eps);
        enforce(out.sandwich, options);
    }
    return out;
}

ShadowEstimate interpolate_shadow(const SamplePath& path, std::size_t v, double eps, const RetirementSchedule& schedule,
                                  const MarkCounts& counts, double smoothing, const ContinuationSampler& sampler,
                                  std::size_t draws, std::uint64_t seed)
{
    if (path.dim != 1)
        throw DomainError("interpolate_shadow: d = 1 only");
    if (v >= path.size())
        throw DomainError("interpolate_shadow: grid index out of range");
    const auto conts = sampler(path, v, draws, seed);
    ShadowEstimate est;
    est.draws = conts.size();
    double sl = 0.0, slx = 0.0, sl2 = 0.0;
    for (const auto& c : conts) {
        const LadderSkeleton sk = extract_ladder(c, eps);
        WalkState st;
        double l = 1.0;
        for (std::size_t n = 1; n < sk.stops.size(); ++n) {
            const int mark = sk.stops[n].mark;
            if (sk.stops[n].grid_index > v) {
                const MarkProbs ref = counts.probs(n, sk.stops[n - 1].level[0], smoothing);
                l *= density_increment(mark, step_measure(schedule.alpha(st), eps), ref);
            }
            if (mark == 0)
                break;
            st = st.advanced(mark);
        }
        sl += l;
        sl2 += l * l;
        slx += l * sk.stops.back().anchor[0];
    }
    if (!(sl > 0.0))
        throw NumericalError("interpolate_shadow: all continuation weights vanish");
    est.value = slx / sl;
    est.ess = sl * sl / sl2;
    return est;
}

}  // namespace cpslab
