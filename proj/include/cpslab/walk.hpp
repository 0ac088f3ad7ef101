#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <vector>

#include "cpslab/common.hpp"

namespace cpslab {

/// Conditional probabilities of the marks 0, -1, +1 under the constructed
/// measure: alpha + lambda + mu = 1 and alpha + lambda/(1+eps) + mu(1+eps) = 1.
struct StepMeasure {
    double alpha = 0.0;
    double lambda = 0.0;  // mark -1
    double mu = 0.0;      // mark +1

    double of(int mark) const { return mark == 0 ? alpha : (mark < 0 ? lambda : mu); }
};

/// Reference (P) conditional probabilities of the three marks.
struct MarkProbs {
    double down = 0.0;
    double retire = 0.0;
    double up = 0.0;

    double of(int mark) const { return mark == 0 ? retire : (mark < 0 ? down : up); }
};

/// Observable state of the walk before the step that draws mark number `step`.
struct WalkState {
    std::size_t step = 1;
    int level = 0;
    int max_abs_level = 0;
    /// True iff the current |level| was reached for the first time by the last move
    /// (and at step 1, where the walk sits at its first level 0).
    bool at_new_extreme = true;

    WalkState advanced(int mark) const;
};

/// Predictable retirement probabilities alpha_n as a function of the walk state.
class RetirementSchedule {
public:
    enum class Kind { constant, per_step, first_exit, two_point };

    static RetirementSchedule constant(double alpha);
    /// alpha_n = alphas[n-1]; the last entry repeats.
    static RetirementSchedule per_step(std::vector<double> alphas);
    /// alpha = first_exit[m] on the step right after |level| first reaches m, `elsewhere` otherwise.
    static RetirementSchedule first_exit(std::vector<double> first_exit, double elsewhere);
    /// alpha = 0 strictly between levels `lower` < 0 < `upper`, alpha = 1 on them.
    static RetirementSchedule two_point(int lower, int upper);

    double alpha(const WalkState& state) const;
    Kind kind() const { return kind_; }
    bool depends_on_extremes() const { return kind_ == Kind::first_exit; }
    /// Q ~ P requires every alpha in (0,1).
    bool equivalent() const;

    const std::vector<double>& values() const { return values_; }
    double elsewhere() const { return elsewhere_; }
    int lower() const { return lower_; }
    int upper() const { return upper_; }

private:
    Kind kind_ = Kind::constant;
    std::vector<double> values_;
    double elsewhere_ = 0.5;
    int lower_ = 0;
    int upper_ = 0;
};

StepMeasure step_measure(double alpha, double eps);

/// Z_n = (target prob of the realized mark) / (reference prob of that mark); 1 once retired.
double density_increment(int mark, const StepMeasure& step, const MarkProbs& reference, bool already_retired = false);

/// A retired walk: marks R_1.. in {-1,0,+1}, absorbed at the first 0.
struct RetiredWalk {
    double x0 = 1.0;
    double eps = 0.1;
    std::vector<int> marks;

    int level() const;
    double terminal() const;
    std::vector<double> values() const;
    /// Throws DomainError unless marks after the first 0 are 0 and the last mark is 0.
    void validate() const;
};

struct DensityReport {
    bool passed = false;
    std::size_t horizon = 0;
    double residual = 1.0;
    std::vector<double> curve;  // curve[n-1] = Q(not retired after n steps)
};

/// Residual Q^alpha(no retirement by step n) = E[L_n 1_{not retired}] for n = 1.. until it
/// drops below `tolerance` (pass) or `max_horizon` is reached (fail). E[L] = 1 iff the
/// residual tends to 0.
DensityReport verify_density_normalizes(const RetirementSchedule& schedule, const MarkProbs& reference, double eps,
                                        std::size_t max_horizon = 10'000, double tolerance = 1e-6);

struct IntegrabilitySchedule {
    RetirementSchedule schedule;
    std::vector<double> levels;  // s_m after symmetrization and monotonization, m = 0..M
    std::vector<double> delta;   // delta_m, m = 1..M (index m-1)
    std::vector<double> eta;     // eta_m = prod delta_k
    /// s_0 + sum (s_m - s_{m-1}) eta_m: upper bound on E_Q[sup_n f(X_n)] over the first M levels.
    double sup_bound = 0.0;
};

/// Retirement schedule making E_Q[sup_n f(X_n)] finite: (s_m - s_{m-1}) eta_m < budget(m).
IntegrabilitySchedule integrability_schedule(const std::function<double(double)>& f, double x0, double eps,
                                             const std::function<double(int)>& budget = {},
                                             double elsewhere = 0.5, int max_level = 400);

struct TwoPointMeasure {
    double eps_prime = 0.0;
    double x0 = 0.0;
    int j = 0;  // u = x0 (1+eps')^j, j < 0
    int k = 0;  // v = x0 (1+eps')^k, k > 0
    double u = 0.0;
    double v = 0.0;
    double prob_u = 0.0;
    double prob_v = 0.0;
    RetirementSchedule schedule;
};

/// Fits the eps'-grid through u and v (smallest step count m >= min_steps with
/// eps' < eps) and picks the grid point x0 nearest s0 inside (s0/(1+eps'), s0(1+eps')).
TwoPointMeasure two_point_measure(double s0, double u, double v, double eps, int min_steps = 1);

/// One node of the enumerated trinomial tree.
struct TreeNode {
    std::size_t n = 0;
    int level = 0;
    double x = 0.0;
    double p_ref = 1.0;       // reference probability of the node
    double likelihood = 1.0;  // L_n along the node's history
    bool retired = false;     // reached by a 0 mark (leaf)
    bool frontier = false;    // alive at the truncation depth (leaf)
    StepMeasure step;         // Q-transition out of the node (alive nodes)
    long parent = -1;
    std::size_t children[3] = {0, 0, 0};  // down, retire, up; valid for internal nodes
};

struct ExactTree {
    double x0 = 1.0;
    double eps = 0.1;
    std::size_t depth = 0;
    std::vector<TreeNode> nodes;

    bool internal(const TreeNode& node) const { return !node.retired && !node.frontier; }
    /// max over internal nodes of |E_Q[X_{n+1} | node] - X_n| computed from the children's
    /// reference probabilities and likelihoods.
    double max_martingale_residual() const;
    /// sum over leaves of L * P.
    double leaf_mass() const;
    void dump_csv(std::ostream& os) const;
};

/// Enumerates every history up to `depth` (histories are needed because the
/// schedule may depend on running extremes).
ExactTree enumerate_tree(double x0, double eps, const RetirementSchedule& schedule, const MarkProbs& reference,
                         std::size_t depth);

struct TerminalLaw {
    std::map<int, double> mass;  // level -> Q(X_infinity = x0 (1+eps)^level)
    double unretired = 0.0;      // mass still alive at the step cap
    std::size_t steps = 0;
};

/// Q-law of the retirement level by forward dynamic programming on the walk state.
TerminalLaw exact_terminal_law(double eps, const RetirementSchedule& schedule, std::size_t max_steps = 1'000'000,
                               double tolerance = 1e-16);

/// Walks under constant reference probabilities, forced to retire at `max_steps`.
std::vector<RetiredWalk> sample_reference_walks(double x0, double eps, const MarkProbs& reference,
                                                std::size_t max_steps, std::size_t n, std::uint64_t seed);

/// Walks drawn directly under Q^alpha.
std::vector<RetiredWalk> sample_q_walks(double x0, double eps, const RetirementSchedule& schedule,
                                        std::size_t max_steps, std::size_t n, std::uint64_t seed);

/// L = prod Z_n for a walk sampled under constant reference probabilities.
double walk_likelihood(const RetiredWalk& walk, const RetirementSchedule& schedule, const MarkProbs& reference);

}  // namespace cpslab
