#include "cpslab/buckets.hpp"

#include <cmath>

namespace cpslab {

namespace {

std::size_t slot(int mark) { return mark < 0 ? 0 : (mark == 0 ? 1 : 2); }

}  // namespace

void MarkCounts::add(std::size_t n, int level, int mark, double weight)
{
    counts[{n, level}][slot(mark)] += weight;
}

double MarkCounts::total(const MarkKey& key) const
{
    auto it = counts.find(key);
    if (it == counts.end())
        return 0.0;
    return it->second[0] + it->second[1] + it->second[2];
}

MarkProbs MarkCounts::probs(std::size_t n, int level, double smoothing) const
{
    auto it = counts.find({n, level});
    if (it == counts.end())
        return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    const auto& c = it->second;
    const double tot = c[0] + c[1] + c[2] + 3.0 * smoothing;
    if (!(tot > 0.0))
        return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    return {(c[0] + smoothing) / tot, (c[1] + smoothing) / tot, (c[2] + smoothing) / tot};
}

void MarkCounts::merge(const MarkCounts& other)
{
    for (const auto& [key, c] : other.counts) {
        auto& mine = counts[key];
        for (std::size_t i = 0; i < 3; ++i)
            mine[i] += c[i];
    }
}

MarkCounts count_marks(const std::vector<LadderSkeleton>& skeletons, const std::vector<double>& weights)
{
    if (!weights.empty() && weights.size() != skeletons.size())
        throw DomainError("count_marks: one weight per skeleton");
    MarkCounts mc;
    for (std::size_t p = 0; p < skeletons.size(); ++p) {
        const auto& sk = skeletons[p];
        if (sk.dim != 1)
            throw DomainError("count_marks: d = 1 skeletons only");
        const double w = weights.empty() ? 1.0 : weights[p];
        for (std::size_t n = 1; n < sk.stops.size(); ++n) {
            mc.add(n, sk.stops[n - 1].level[0], sk.stops[n].mark, w);
            if (sk.stops[n].mark == 0)
                break;
        }
    }
    return mc;
}

LadderSkeleton skeleton_from_marks(double x0, double eps, const std::vector<int>& marks)
{
    LadderSkeleton sk;
    sk.eps = eps;
    sk.mode = LadderMode::multiplicative;
    sk.dim = 1;
    sk.snapped = true;
    int level = 0;
    sk.stops.push_back({0, 0.0, {x0}, 0, {0}});
    for (std::size_t n = 0; n < marks.size(); ++n) {
        level += marks[n];
        sk.stops.push_back({n + 1, static_cast<double>(n + 1), {x0 * std::pow(1.0 + eps, level)}, marks[n], {level}});
        if (marks[n] == 0)
            break;
    }
    sk.retired_at = sk.stops.size() - 1;
    return sk;
}

LadderSkeleton skeleton_from_walk(const RetiredWalk& walk)
{
    walk.validate();
    return skeleton_from_marks(walk.x0, walk.eps, walk.marks);
}

}  // namespace cpslab
