#include "cpslab/cfs_check.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cpslab {

Proportion wilson_interval(std::size_t hits, std::size_t n, double z)
{
    Proportion p;
    if (n == 0)
        return p;
    const double nn = static_cast<double>(n);
    const double ph = static_cast<double>(hits) / nn;
    p.estimate = ph;
    p.stderr_ = std::sqrt(ph * (1.0 - ph) / nn);
    const double z2 = z * z;
    const double centre = (ph + z2 / (2.0 * nn)) / (1.0 + z2 / nn);
    const double half = z * std::sqrt(ph * (1.0 - ph) / nn + z2 / (4.0 * nn * nn)) / (1.0 + z2 / nn);
    p.lower = std::max(0.0, centre - half);
    p.upper = std::min(1.0, centre + half);
    if (hits == 0)
        p.lower = 0.0;
    return p;
}

TubeResult tube_probability(const SamplePath& history, const TubeQuery& query, const ContinuationSampler& sampler,
                            std::uint64_t seed)
{
    if (history.dim != 1)
        throw DomainError("tube_probability: d = 1 only");
    if (!(query.eta > 0.0))
        throw DomainError("tube_probability: eta must be positive");
    if (query.v >= history.size())
        throw DomainError("tube_probability: cut index out of range");
    if (query.target.size() != history.size() - query.v)
        throw DomainError("tube_probability: target must cover grid indices v..N");
    const double sv = history.value(query.v);
    if (std::abs(query.target.front() - sv) > 1e-9 * std::max(1.0, std::abs(sv)))
        throw DomainError("tube_probability: f(v) must equal S_v");
    if (query.draws == 0)
        throw DomainError("tube_probability: no draws requested");

    const auto conts = sampler(history, query.v, query.draws, seed);
    TubeResult r;
    r.draws = conts.size();
    for (const auto& c : conts) {
        bool inside = true;
        for (std::size_t k = query.v; k < c.size() && inside; ++k)
            inside = std::abs(c.value(k) - query.target[k - query.v]) < query.eta;
        r.hits += inside ? 1 : 0;
    }
    r.probability = wilson_interval(r.hits, r.draws);
    r.evidence = r.probability.lower > 0.0;
    return r;
}

MarkAudit mark_positivity(const std::vector<LadderSkeleton>& skeletons, std::size_t min_count)
{
    for (const auto& sk : skeletons)
        if (sk.dim != 1)
            throw DomainError("mark_positivity: d = 1 skeletons only");
    const MarkCounts mc = count_marks(skeletons);
    MarkAudit a;
    for (const auto& [key, c] : mc.counts) {
        MarkRow row;
        row.stop = key.first;
        row.level = key.second;
        row.down = c[0];
        row.retire = c[1];
        row.up = c[2];
        row.populated = c[0] + c[1] + c[2] >= static_cast<double>(min_count);
        row.flagged = row.populated && (c[0] == 0.0 || c[1] == 0.0 || c[2] == 0.0);
        a.populated += row.populated;
        a.flagged += row.flagged;
        a.rows.push_back(row);
    }
    a.passed = a.populated > 0 && a.flagged == 0;
    return a;
}

HullRow interior_hull_audit(const IncrementCloud& cloud)
{
    HullRow row;
    row.size = cloud.points.size();
    row.populated = true;
    row.zero_mass = cloud.zero_mass();
    row.margin = check_interior(cloud);
    row.passed = row.margin.ok && row.zero_mass > 0.0;
    return row;
}

HullAudit interior_hull_audit(const std::vector<LadderSkeleton>& skeletons, std::size_t min_count)
{
    HullAudit a;
    std::map<std::pair<std::size_t, std::vector<int>>, std::vector<Eigen::VectorXd>> buckets;
    for (const auto& sk : skeletons)
        for (std::size_t n = 1; n < sk.stops.size(); ++n) {
            Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sk.dim));
            if (sk.stops[n].mark != 0)
                for (std::size_t i = 0; i < sk.dim; ++i)
                    x[static_cast<Eigen::Index>(i)] = sk.stops[n].anchor[i] - sk.stops[n - 1].anchor[i];
            buckets[{n, sk.stops[n - 1].level}].push_back(std::move(x));
        }
    for (auto& [key, pts] : buckets) {
        HullRow row;
        row.stop = key.first;
        row.level = key.second;
        row.size = pts.size();
        row.populated = pts.size() >= min_count;
        if (row.populated) {
            const HullRow r = interior_hull_audit(IncrementCloud::empirical(std::move(pts)));
            row.zero_mass = r.zero_mass;
            row.margin = r.margin;
            row.passed = r.passed;
            ++a.populated;
            a.failed += row.passed ? 0 : 1;
        }
        a.rows.push_back(std::move(row));
    }
    a.passed = a.populated > 0 && a.failed == 0;
    return a;
}

std::vector<SamplePath> freeze_at_level(const std::vector<SamplePath>& paths, double level)
{
    std::vector<SamplePath> out = paths;
    for (auto& p : out) {
        if (p.dim != 1)
            throw DomainError("freeze_at_level: d = 1 only");
        std::size_t hit = p.size();
        for (std::size_t k = 0; k < p.size(); ++k)
            if (p.value(k) >= level) {
                hit = k;
                break;
            }
        for (std::size_t k = hit + 1; k < p.size(); ++k)
            p.values[k] = p.values[hit];
    }
    return out;
}

}  // namespace cpslab
