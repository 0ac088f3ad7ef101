#include "cpslab/walk.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <tuple>

namespace cpslab {

WalkState WalkState::advanced(int mark) const
{
    WalkState next = *this;
    ++next.step;
    if (mark == 0)
        return next;
    next.level += mark;
    const int a = std::abs(next.level);
    next.at_new_extreme = a > max_abs_level;
    next.max_abs_level = std::max(max_abs_level, a);
    return next;
}

namespace {

void check_alpha(double a, const char* who)
{
    if (!(a >= 0.0 && a <= 1.0))
        throw DomainError(std::string(who) + ": retirement probability outside [0,1]");
}

}  // namespace

RetirementSchedule RetirementSchedule::constant(double alpha)
{
    check_alpha(alpha, "RetirementSchedule::constant");
    RetirementSchedule s;
    s.kind_ = Kind::constant;
    s.values_ = {alpha};
    return s;
}

RetirementSchedule RetirementSchedule::per_step(std::vector<double> alphas)
{
    if (alphas.empty())
        throw DomainError("RetirementSchedule::per_step: empty schedule");
    for (double a : alphas)
        check_alpha(a, "RetirementSchedule::per_step");
    RetirementSchedule s;
    s.kind_ = Kind::per_step;
    s.values_ = std::move(alphas);
    return s;
}

RetirementSchedule RetirementSchedule::first_exit(std::vector<double> first_exit, double elsewhere)
{
    for (double a : first_exit)
        check_alpha(a, "RetirementSchedule::first_exit");
    check_alpha(elsewhere, "RetirementSchedule::first_exit");
    RetirementSchedule s;
    s.kind_ = Kind::first_exit;
    s.values_ = std::move(first_exit);
    s.elsewhere_ = elsewhere;
    return s;
}

RetirementSchedule RetirementSchedule::two_point(int lower, int upper)
{
    if (!(lower < 0 && upper > 0))
        throw DomainError("RetirementSchedule::two_point: need lower < 0 < upper");
    RetirementSchedule s;
    s.kind_ = Kind::two_point;
    s.lower_ = lower;
    s.upper_ = upper;
    return s;
}

double RetirementSchedule::alpha(const WalkState& state) const
{
    switch (kind_) {
    case Kind::constant:
        return values_[0];
    case Kind::per_step:
        return values_[std::min(state.step, values_.size()) - 1];
    case Kind::first_exit: {
        const auto m = static_cast<std::size_t>(state.max_abs_level);
        if (state.at_new_extreme && m < values_.size())
            return values_[m];
        return elsewhere_;
    }
    case Kind::two_point:
        return (state.level <= lower_ || state.level >= upper_) ? 1.0 : 0.0;
    }
    return 0.0;
}

bool RetirementSchedule::equivalent() const
{
    auto open = [](double a) { return a > 0.0 && a < 1.0; };
    if (kind_ == Kind::two_point)
        return false;
    if (kind_ == Kind::first_exit && !open(elsewhere_))
        return false;
    return std::all_of(values_.begin(), values_.end(), open);
}

StepMeasure step_measure(double alpha, double eps)
{
    check_alpha(alpha, "step_measure");
    if (!(eps > 0.0) || !std::isfinite(eps))
        throw DomainError("step_measure: eps must be positive");
    const double rest = 1.0 - alpha;
    return {alpha, rest * (1.0 + eps) / (2.0 + eps), rest / (2.0 + eps)};
}

double density_increment(int mark, const StepMeasure& step, const MarkProbs& reference, bool already_retired)
{
    if (already_retired)
        return 1.0;
    if (mark < -1 || mark > 1)
        throw DomainError("density_increment: mark must be -1, 0 or +1");
    if (!(reference.down > 0.0 && reference.retire > 0.0 && reference.up > 0.0))
        throw DomainError("density_increment: reference mark probabilities must all be positive");
    return step.of(mark) / reference.of(mark);
}

int RetiredWalk::level() const
{
    int k = 0;
    for (int m : marks)
        k += m;
    return k;
}

double RetiredWalk::terminal() const { return x0 * std::pow(1.0 + eps, level()); }

std::vector<double> RetiredWalk::values() const
{
    std::vector<double> out{x0};
    int k = 0;
    for (int m : marks) {
        k += m;
        out.push_back(x0 * std::pow(1.0 + eps, k));
    }
    return out;
}

void RetiredWalk::validate() const
{
    bool retired = false;
    for (int m : marks) {
        if (m < -1 || m > 1)
            throw DomainError("RetiredWalk: mark outside {-1,0,+1}");
        if (retired && m != 0)
            throw DomainError("RetiredWalk: nonzero mark after retirement");
        retired = retired || m == 0;
    }
    if (!retired)
        throw DomainError("RetiredWalk: walk never retires");
}

namespace {

using StateKey = std::tuple<int, int, bool>;

// Forward propagation of the unretired Q-mass. `on_retire(level, mass)` receives
// the retired mass of each step; returns the unretired mass after each step.
template <class OnRetire>
std::vector<double> propagate(double eps, const RetirementSchedule& schedule, std::size_t max_steps,
                              double tolerance, OnRetire&& on_retire)
{
    const bool extremes = schedule.depends_on_extremes();
    const double prune = std::min(tolerance, 1e-6) * 1e-8;
    std::map<StateKey, double> alive{{{0, 0, true}, 1.0}};
    std::vector<double> curve;
    double dropped = 0.0;
    for (std::size_t n = 1; n <= max_steps; ++n) {
        std::map<StateKey, double> next;
        for (const auto& [key, w] : alive) {
            const auto [level, max_abs, fresh] = key;
            const WalkState st{n, level, max_abs, fresh};
            const StepMeasure q = step_measure(schedule.alpha(st), eps);
            if (q.alpha > 0.0)
                on_retire(level, w * q.alpha);
            for (int mark : {-1, +1}) {
                const double p = w * q.of(mark);
                if (p == 0.0)
                    continue;
                WalkState s2 = st.advanced(mark);
                if (!extremes) {
                    s2.max_abs_level = 0;
                    s2.at_new_extreme = false;
                }
                next[{s2.level, s2.max_abs_level, s2.at_new_extreme}] += p;
            }
        }
        double total = 0.0;
        alive.clear();
        for (const auto& [key, w] : next) {
            if (w < prune) {
                dropped += w;
                continue;
            }
            alive.emplace(key, w);
            total += w;
        }
        curve.push_back(total + dropped);
        if (total + dropped < tolerance || alive.empty())
            break;
    }
    return curve;
}

}  // namespace

DensityReport verify_density_normalizes(const RetirementSchedule& schedule, const MarkProbs& reference, double eps,
                                        std::size_t max_horizon, double tolerance)
{
    if (!(reference.down > 0.0 && reference.retire > 0.0 && reference.up > 0.0))
        throw DomainError("verify_density_normalizes: reference mark probabilities must all be positive");
    if (!(eps > 0.0))
        throw DomainError("verify_density_normalizes: eps must be positive");
    if (max_horizon == 0)
        throw DomainError("verify_density_normalizes: horizon must be positive");

    DensityReport rep;
    if (schedule.kind() == RetirementSchedule::Kind::constant ||
        schedule.kind() == RetirementSchedule::Kind::per_step) {
        // the alive mass is a deterministic product here
        double alive = 1.0;
        for (std::size_t n = 1; n <= max_horizon; ++n) {
            alive *= 1.0 - schedule.alpha(WalkState{n, 0, 0, false});
            rep.curve.push_back(alive);
            if (alive < tolerance)
                break;
        }
    } else {
        rep.curve = propagate(eps, schedule, max_horizon, tolerance, [](int, double) {});
    }
    rep.horizon = rep.curve.size();
    rep.residual = rep.curve.back();
    rep.passed = rep.residual < tolerance;
    return rep;
}

IntegrabilitySchedule integrability_schedule(const std::function<double(double)>& f, double x0, double eps,
                                             const std::function<double(int)>& budget, double elsewhere,
                                             int max_level)
{
    if (!(x0 > 0.0) || !(eps > 0.0))
        throw DomainError("integrability_schedule: need x0 > 0 and eps > 0");
    if (max_level < 1)
        throw DomainError("integrability_schedule: max_level must be positive");
    check_alpha(elsewhere, "integrability_schedule");
    auto b = budget ? budget : [](int m) { return std::ldexp(1.0, -m); };

    IntegrabilitySchedule out;
    const double f0 = f(x0);
    if (!std::isfinite(f0))
        throw DomainError("integrability_schedule: f is not finite on the grid");
    out.levels.push_back(f0);
    for (int m = 1; m <= max_level; ++m) {
        const double up = f(x0 * std::pow(1.0 + eps, m));
        const double dn = f(x0 * std::pow(1.0 + eps, -m));
        if (!std::isfinite(up) || !std::isfinite(dn))
            throw DomainError("integrability_schedule: f is not finite on the grid");
        out.levels.push_back(std::max({out.levels.back(), up, dn}));
    }

    const double default_delta = 1.0 - elsewhere;
    std::vector<double> alphas;
    double eta = 1.0;
    out.sup_bound = out.levels[0];
    for (int m = 1; m <= max_level; ++m) {
        const double jump = out.levels[m] - out.levels[m - 1];
        double delta = default_delta;
        if (jump * eta * delta >= b(m))
            delta = 0.5 * b(m) / (eta * jump);
        delta = std::min(delta, default_delta > 0.0 ? default_delta : 0.5);
        eta *= delta;
        out.delta.push_back(delta);
        out.eta.push_back(eta);
        out.sup_bound += jump * eta;
        // alpha applies on the step right after the first visit of |level| = m-1
        alphas.push_back(1.0 - delta);
    }
    out.schedule = RetirementSchedule::first_exit(std::move(alphas), elsewhere);
    return out;
}

TwoPointMeasure two_point_measure(double s0, double u, double v, double eps, int min_steps)
{
    if (!(u > 0.0 && u < s0 && s0 < v) || !std::isfinite(v))
        throw DomainError("two_point_measure: need 0 < u < s0 < v");
    if (!(eps > 0.0))
        throw DomainError("two_point_measure: eps must be positive");
    const double span = std::log(v / u);
    for (int m = std::max(1, min_steps); m < 10'000'000; ++m) {
        const double ep = std::expm1(span / m);
        if (!(ep < eps))
            continue;
        const double step = std::log1p(ep);
        const double r = std::log(s0 / u) / step;
        // grid points u(1+eps')^i with |i - r| < 1, nearest first
        const int near = static_cast<int>(std::lround(r));
        const int other = (near <= r) ? near + 1 : near - 1;
        for (int i : {near, other}) {
            if (i <= 0 || i >= m || std::abs(i - r) >= 1.0)
                continue;
            TwoPointMeasure out;
            out.eps_prime = ep;
            out.x0 = u * std::exp(i * step);
            out.j = -i;
            out.k = m - i;
            out.u = u;
            out.v = v;
            out.prob_v = (out.x0 - u) / (v - u);
            out.prob_u = (v - out.x0) / (v - u);
            out.schedule = RetirementSchedule::two_point(out.j, out.k);
            return out;
        }
    }
    throw NumericalError("two_point_measure: no grid fit found");
}

double ExactTree::max_martingale_residual() const
{
    double worst = 0.0;
    for (const auto& node : nodes) {
        if (!internal(node))
            continue;
        const double base = node.p_ref * node.likelihood;
        double e = 0.0;
        for (std::size_t c : node.children) {
            const auto& ch = nodes[c];
            e += ch.p_ref * ch.likelihood * ch.x;
        }
        worst = std::max(worst, std::abs(e / base - node.x));
    }
    return worst;
}

double ExactTree::leaf_mass() const
{
    double s = 0.0;
    for (const auto& node : nodes)
        if (!internal(node))
            s += node.p_ref * node.likelihood;
    return s;
}

void ExactTree::dump_csv(std::ostream& os) const
{
    os << "n,level,prob_down,prob_retire,prob_up,X\n";
    os.precision(17);
    for (const auto& node : nodes) {
        if (node.retired)
            continue;
        os << node.n << ',' << node.level << ',' << node.step.lambda << ',' << node.step.alpha << ','
           << node.step.mu << ',' << node.x << '\n';
    }
}

ExactTree enumerate_tree(double x0, double eps, const RetirementSchedule& schedule, const MarkProbs& reference,
                         std::size_t depth)
{
    if (!(x0 > 0.0) || !(eps > 0.0))
        throw DomainError("enumerate_tree: need x0 > 0 and eps > 0");
    if (depth > 20)
        throw DomainError("enumerate_tree: depth above 20 is not supported");
    if (!(reference.down > 0.0 && reference.retire > 0.0 && reference.up > 0.0))
        throw DomainError("enumerate_tree: reference mark probabilities must all be positive");

    ExactTree tree;
    tree.x0 = x0;
    tree.eps = eps;
    tree.depth = depth;

    struct Pending {
        std::size_t node;
        WalkState state;
    };
    TreeNode root;
    root.x = x0;
    root.frontier = depth == 0;
    tree.nodes.push_back(root);
    std::vector<Pending> stack{{0, WalkState{}}};
    while (!stack.empty()) {
        const Pending cur = stack.back();
        stack.pop_back();
        TreeNode& node = tree.nodes[cur.node];
        node.step = step_measure(schedule.alpha(cur.state), eps);
        if (node.frontier)
            continue;
        const TreeNode parent = node;
        int slot = 0;
        for (int mark : {-1, 0, +1}) {
            TreeNode ch;
            ch.n = parent.n + 1;
            ch.level = parent.level + mark;
            ch.x = mark == 0 ? parent.x : x0 * std::pow(1.0 + eps, ch.level);
            ch.p_ref = parent.p_ref * reference.of(mark);
            ch.likelihood = parent.likelihood * density_increment(mark, parent.step, reference);
            ch.retired = mark == 0;
            ch.frontier = !ch.retired && ch.n == depth;
            ch.parent = static_cast<long>(cur.node);
            const std::size_t idx = tree.nodes.size();
            tree.nodes.push_back(ch);
            tree.nodes[cur.node].children[slot++] = idx;
            if (!ch.retired)
                stack.push_back({idx, cur.state.advanced(mark)});
        }
    }
    return tree;
}

TerminalLaw exact_terminal_law(double eps, const RetirementSchedule& schedule, std::size_t max_steps,
                               double tolerance)
{
    TerminalLaw law;
    auto curve = propagate(eps, schedule, max_steps, tolerance,
                           [&](int level, double mass) { law.mass[level] += mass; });
    law.steps = curve.size();
    law.unretired = curve.empty() ? 1.0 : curve.back();
    return law;
}

std::vector<RetiredWalk> sample_reference_walks(double x0, double eps, const MarkProbs& reference,
                                                std::size_t max_steps, std::size_t n, std::uint64_t seed)
{
    if (!(reference.down > 0.0 && reference.retire > 0.0 && reference.up > 0.0))
        throw DomainError("sample_reference_walks: reference mark probabilities must all be positive");
    std::vector<RetiredWalk> out(n);
    const double total = reference.down + reference.retire + reference.up;
    for (std::size_t p = 0; p < n; ++p) {
        auto rng = stream_rng(seed, p);
        std::uniform_real_distribution<double> unif(0.0, total);
        RetiredWalk& w = out[p];
        w.x0 = x0;
        w.eps = eps;
        for (std::size_t s = 1; s <= max_steps; ++s) {
            if (s == max_steps) {
                w.marks.push_back(0);
                break;
            }
            const double r = unif(rng);
            const int m = r < reference.down ? -1 : (r < reference.down + reference.retire ? 0 : +1);
            w.marks.push_back(m);
            if (m == 0)
                break;
        }
    }
    return out;
}

std::vector<RetiredWalk> sample_q_walks(double x0, double eps, const RetirementSchedule& schedule,
                                        std::size_t max_steps, std::size_t n, std::uint64_t seed)
{
    std::vector<RetiredWalk> out(n);
    for (std::size_t p = 0; p < n; ++p) {
        auto rng = stream_rng(seed, p);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        RetiredWalk& w = out[p];
        w.x0 = x0;
        w.eps = eps;
        WalkState st;
        for (std::size_t s = 1; s <= max_steps; ++s) {
            const StepMeasure q = step_measure(schedule.alpha(st), eps);
            const double r = unif(rng);
            const int m = (s == max_steps || r < q.alpha) ? 0 : (r < q.alpha + q.lambda ? -1 : +1);
            w.marks.push_back(m);
            if (m == 0)
                break;
            st = st.advanced(m);
        }
    }
    return out;
}

double walk_likelihood(const RetiredWalk& walk, const RetirementSchedule& schedule, const MarkProbs& reference)
{
    double l = 1.0;
    WalkState st;
    bool retired = false;
    for (int m : walk.marks) {
        const StepMeasure q = step_measure(schedule.alpha(st), walk.eps);
        l *= density_increment(m, q, reference, retired);
        if (m == 0)
            retired = true;
        else
            st = st.advanced(m);
    }
    return l;
}

}  // namespace cpslab
