#include "cpslab/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "cpslab/cfs_check.hpp"
#include "cpslab/cps.hpp"
#include "cpslab/io.hpp"

namespace cpslab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why)
{
    throw ValidationError("config." + field + ": " + why);
}

const json& need(const json& j, const std::string& path, const char* key)
{
    if (!j.is_object() || !j.contains(key))
        bad(path.empty() ? key : path + "." + key, "required");
    return j.at(key);
}

template <class T>
T as(const json& j, const std::string& field)
{
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        bad(field, "wrong type");
    }
}

double positive(const json& j, const std::string& field)
{
    const double v = as<double>(j, field);
    if (!(v > 0.0) || !std::isfinite(v))
        bad(field, "must be positive");
    return v;
}

// Scalar or array of length d.
std::vector<double> vec(const json& j, const std::string& field)
{
    if (j.is_array()) {
        std::vector<double> v;
        for (std::size_t i = 0; i < j.size(); ++i)
            v.push_back(as<double>(j[i], field + "[" + std::to_string(i) + "]"));
        return v;
    }
    return {as<double>(j, field)};
}

std::vector<double> broadcast(std::vector<double> v, std::size_t d, const std::string& field)
{
    if (v.size() == 1 && d > 1)
        v.assign(d, v[0]);
    if (v.size() != d)
        bad(field, "expected " + std::to_string(d) + " entries");
    return v;
}

ModelConfig parse_model(const json& m)
{
    ModelConfig mc;
    mc.type = as<std::string>(need(m, "model", "type"), "model.type");
    if (mc.type == "gbm") {
        mc.gbm.s0 = vec(need(m, "model", "s0"), "model.s0");
        const std::size_t d = mc.gbm.s0.size();
        mc.gbm.mu = broadcast(vec(need(m, "model", "mu"), "model.mu"), d, "model.mu");
        mc.gbm.sigma = broadcast(vec(need(m, "model", "sigma"), "model.sigma"), d, "model.sigma");
        if (m.contains("correlation")) {
            const auto& c = m["correlation"];
            if (!c.is_array() || c.size() != d)
                bad("model.correlation", "expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
            mc.gbm.correlation.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
            for (std::size_t r = 0; r < d; ++r) {
                if (!c[r].is_array() || c[r].size() != d)
                    bad("model.correlation[" + std::to_string(r) + "]", "wrong row length");
                for (std::size_t q = 0; q < d; ++q)
                    mc.gbm.correlation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) =
                        as<double>(c[r][q], "model.correlation");
            }
        }
        try {
            mc.gbm.validate();
        } catch (const DomainError& e) {
            bad("model", e.what());
        }
    } else if (mc.type == "gfbm" || mc.type == "integrated") {
        mc.fbm.s0 = positive(need(m, "model", "s0"), "model.s0");
        mc.fbm.sigma = as<double>(need(m, "model", "sigma"), "model.sigma");
        mc.fbm.hurst = as<double>(need(m, "model", "hurst"), "model.hurst");
        mc.drift_rate = m.contains("drift") ? as<double>(m["drift"], "model.drift") : 0.0;
        if (mc.drift_rate != 0.0) {
            const double r = mc.drift_rate;
            mc.fbm.drift = [r](double t) { return r * t; };
        }
        try {
            mc.fbm.validate();
        } catch (const DomainError& e) {
            bad("model", e.what());
        }
    } else {
        bad("model.type", "one of gbm, gfbm, integrated");
    }
    return mc;
}

std::vector<double> eps_list(const json& j, const std::string& field)
{
    std::vector<double> v = vec(j, field);
    if (v.empty())
        bad(field, "at least one value");
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0) || !(v[i] < 1.0))
            bad(field, "values must lie in (0, 1)");
        if (i && !(v[i] < v[i - 1]))
            bad(field, "eps sequence must be strictly decreasing");
    }
    return v;
}

fs::path out_dir(const ExperimentConfig& cfg) { return cfg.output; }

Exec exec_of(const ExperimentConfig& cfg) { return Exec{cfg.workers}; }

std::string hash_file(const fs::path& p) { return hex64(fnv1a64(read_file(p))); }

void record(const ExperimentConfig& cfg, const std::vector<std::string>& artifacts)
{
    const fs::path mp = out_dir(cfg) / "manifest.json";
    json m;
    if (fs::exists(mp)) {
        try {
            m = json::parse(read_file(mp));
        } catch (const json::exception&) {
            m = json::object();
        }
        if (m.value("config_hash", "") != cfg.hash())
            m = json::object();
    }
    m["version"] = kVersion;
    m["config_hash"] = cfg.hash();
    m["seed"] = cfg.seed;
    for (const auto& a : artifacts)
        m["artifacts"][a] = hash_file(out_dir(cfg) / a);
    write_file(mp, m.dump(2) + "\n");
}

void emit(const ExperimentConfig& cfg, StageReport& rep, const std::string& name, const std::string& content)
{
    write_file(out_dir(cfg) / name, content);
    rep.artifacts.push_back(name);
}

std::vector<SamplePath> load_paths(const ExperimentConfig& cfg)
{
    std::istringstream is(read_artifact(out_dir(cfg) / "paths.csv"));
    return read_paths_csv(is);
}

std::vector<LadderSkeleton> load_skeletons(const ExperimentConfig& cfg)
{
    const json side = json::parse(read_artifact(out_dir(cfg) / "skeletons.json"));
    std::istringstream is(read_artifact(out_dir(cfg) / "skeletons.csv"));
    return read_skeletons_csv(is, side);
}

json sandwich_json(const SandwichReport& s)
{
    return {{"passed", s.passed},
            {"worst_stop_log_ratio", s.worst_stop},
            {"worst_grid_log_ratio", s.worst_grid},
            {"stop_bound", s.stop_bound},
            {"grid_bound", s.grid_bound},
            {"worst_path", s.worst_path},
            {"worst_time", s.worst_time},
            {"message", s.message}};
}

json certificate_json(const MartingaleCertificate& c)
{
    json stops = json::array();
    for (const auto& s : c.stops)
        if (s.checked)
            stops.push_back({{"n", s.n}, {"alive", s.alive}, {"residual", s.residual}, {"stderr", s.stderr_},
                             {"pass", s.pass}});
    return {{"passed", c.passed},
            {"checked", c.checked},
            {"failures", c.failures},
            {"likelihood_mean", c.likelihood_mean},
            {"likelihood_stderr", c.likelihood_stderr},
            {"stops", stops}};
}

}  // namespace

std::string ExperimentConfig::hash() const
{
    json c = raw;
    c.erase("workers");
    c.erase("output");
    c["seed"] = seed;
    if (facelift)
        c["facelift"]["payoff_hash"] = hex64(fnv1a64(json({{"x", facelift->payoff.x},
                                                           {"g", facelift->payoff.g},
                                                           {"left_limit", std::isinf(facelift->payoff.left_limit)
                                                                              ? json("inf")
                                                                              : json(facelift->payoff.left_limit)},
                                                           {"right_slope", facelift->payoff.right_slope},
                                                           {"lower_bound", facelift->payoff.lower_bound}})
                                                         .dump()));
    return hex64(fnv1a64(c.dump()));
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir, const Overrides& ov)
{
    if (!j.is_object())
        throw ValidationError("config: top level must be an object");
    ExperimentConfig cfg;
    cfg.raw = j;
    if (ov.seed)
        cfg.seed = *ov.seed;
    else
        cfg.seed = as<std::uint64_t>(need(j, "", "seed"), "seed");
    const auto n = as<long long>(need(j, "", "n_paths"), "n_paths");
    if (n <= 0)
        bad("n_paths", "must be positive");
    cfg.n_paths = static_cast<std::size_t>(n);
    cfg.workers = j.contains("workers") ? as<int>(j["workers"], "workers") : 1;
    if (ov.workers)
        cfg.workers = *ov.workers;
    if (cfg.workers < 1)
        bad("workers", "must be at least 1");
    if (j.contains("output"))
        cfg.output = as<std::string>(j["output"], "output");
    if (ov.output)
        cfg.output = *ov.output;

    cfg.model = parse_model(need(j, "", "model"));
    const auto& g = need(j, "", "grid");
    cfg.horizon = positive(need(g, "grid", "T"), "grid.T");
    const auto steps = as<long long>(need(g, "grid", "N"), "grid.N");
    if (steps < 1)
        bad("grid.N", "must be positive");
    cfg.steps = static_cast<std::size_t>(steps);

    if (j.contains("ladder")) {
        const auto& l = j["ladder"];
        LadderConfig lc;
        const bool has_eps = l.contains("eps"), has_target = l.contains("target_spread");
        if (has_eps == has_target)
            bad("ladder", "exactly one of eps, target_spread");
        if (has_eps)
            lc.eps = positive(l["eps"], "ladder.eps");
        else {
            lc.target_spread = positive(l["target_spread"], "ladder.target_spread");
            lc.eps = construction_eps(*lc.target_spread);
        }
        if (l.contains("mode")) {
            const auto mode = as<std::string>(l["mode"], "ladder.mode");
            if (mode == "additive")
                lc.mode = LadderMode::additive;
            else if (mode != "multiplicative")
                bad("ladder.mode", "multiplicative or additive");
        }
        if (l.contains("snap"))
            lc.snap = as<bool>(l["snap"], "ladder.snap");
        cfg.ladder = lc;
    }
    if (j.contains("cps")) {
        const auto& c = j["cps"];
        CpsConfig cc;
        if (c.contains("schedule")) {
            ScheduleConfig sc;
            sc.type = as<std::string>(need(c["schedule"], "cps.schedule", "type"), "cps.schedule.type");
            if (sc.type == "constant") {
                sc.alpha = as<double>(need(c["schedule"], "cps.schedule", "alpha"), "cps.schedule.alpha");
                if (!(sc.alpha > 0.0 && sc.alpha < 1.0))
                    bad("cps.schedule.alpha", "must lie in (0, 1)");
            } else if (sc.type != "integrability") {
                bad("cps.schedule.type", "constant or integrability");
            }
            cc.schedule = sc;
        }
        if (c.contains("smoothing"))
            cc.smoothing = positive(c["smoothing"], "cps.smoothing");
        if (c.contains("min_bucket"))
            cc.min_bucket = as<std::size_t>(c["min_bucket"], "cps.min_bucket");
        if (!cfg.ladder)
            bad("cps", "needs a ladder section");
        if (cfg.model.dim() == 1 && !cc.schedule)
            bad("cps.schedule", "required for d = 1");
        cfg.cps = cc;
    }
    if (j.contains("facelift")) {
        const auto& f = j["facelift"];
        FaceliftConfig fc;
        const auto& p = need(f, "facelift", "payoff");
        json payoff;
        if (p.is_string()) {
            const fs::path file = base_dir / as<std::string>(p, "facelift.payoff");
            if (!fs::exists(file))
                bad("facelift.payoff", "file not found: " + file.string());
            try {
                payoff = json::parse(read_file(file));
            } catch (const json::exception& e) {
                bad("facelift.payoff", e.what());
            }
        } else {
            payoff = p;
        }
        fc.payoff = payoff_from_json(payoff);
        fc.eps = eps_list(need(f, "facelift", "eps"), "facelift.eps");
        if (f.contains("delta"))
            fc.delta = positive(f["delta"], "facelift.delta");
        if (cfg.model.dim() != 1)
            bad("facelift", "d = 1 models only");
        cfg.facelift = fc;
    }
    if (j.contains("audit")) {
        const auto& a = j["audit"];
        AuditConfig ac;
        if (a.contains("min_count"))
            ac.min_count = as<std::size_t>(a["min_count"], "audit.min_count");
        if (a.contains("tube")) {
            const auto& t = a["tube"];
            TubeConfig tc;
            tc.v_index = as<std::size_t>(need(t, "audit.tube", "v_index"), "audit.tube.v_index");
            tc.eta = positive(need(t, "audit.tube", "eta"), "audit.tube.eta");
            tc.draws = as<std::size_t>(need(t, "audit.tube", "draws"), "audit.tube.draws");
            if (tc.v_index >= cfg.steps)
                bad("audit.tube.v_index", "must be below grid.N");
            if (cfg.model.type == "integrated" || cfg.model.dim() != 1)
                bad("audit.tube", "needs a d = 1 gbm or gfbm model");
            ac.tube = tc;
        }
        if (!cfg.ladder)
            bad("audit", "needs a ladder section");
        cfg.audit = ac;
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& file, const Overrides& overrides)
{
    if (!fs::exists(file))
        throw ValidationError("config file not found: " + file.string());
    json j;
    try {
        j = json::parse(read_file(file));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return parse_config(j, file.parent_path().empty() ? fs::path(".") : file.parent_path(), overrides);
}

RetirementSchedule make_schedule(const ScheduleConfig& sc, double x0, double eps)
{
    if (sc.type == "constant")
        return RetirementSchedule::constant(sc.alpha);
    // integrability for the relative level f(x) = x / x0
    return integrability_schedule([x0](double x) { return x / x0; }, x0, eps).schedule;
}

std::vector<SamplePath> simulate_model(const ExperimentConfig& cfg)
{
    auto grid = make_grid(TimeGrid::uniform(cfg.horizon, cfg.steps));
    const Exec ex = exec_of(cfg);
    if (cfg.model.type == "gbm")
        return sample_gbm(cfg.model.gbm, grid, cfg.n_paths, cfg.seed, ex);
    if (cfg.model.type == "gfbm")
        return sample_gfbm(cfg.model.fbm, grid, cfg.n_paths, cfg.seed, ex);
    return sample_integrated(cfg.model.fbm, grid, cfg.n_paths, cfg.seed, ex);
}

StageReport stage_simulate(const ExperimentConfig& cfg)
{
    StageReport rep;
    const auto paths = simulate_model(cfg);
    std::ostringstream os;
    write_paths_csv(os, paths);
    emit(cfg, rep, "paths.csv", os.str());
    rep.summary = {{"n_paths", paths.size()}, {"steps", cfg.steps}, {"dim", cfg.model.dim()}};
    record(cfg, rep.artifacts);
    return rep;
}

StageReport stage_ladder(const ExperimentConfig& cfg)
{
    if (!cfg.ladder)
        throw ValidationError("config.ladder: required for the ladder stage");
    StageReport rep;
    const auto paths = load_paths(cfg);
    LadderOptions lo;
    lo.snap = cfg.ladder->snap;
    const auto sk = extract_ladders(paths, cfg.ladder->eps, cfg.ladder->mode, lo, exec_of(cfg));
    std::ostringstream os;
    write_skeletons_csv(os, sk);
    emit(cfg, rep, "skeletons.csv", os.str());
    const json side = skeletons_sidecar(sk);
    emit(cfg, rep, "skeletons.json", side.dump(2) + "\n");
    rep.summary = {{"total_stops", side.value("total_stops", 0)},
                   {"multi_level_crossings", side.value("multi_level_crossings", 0)}};
    record(cfg, rep.artifacts);
    return rep;
}

StageReport stage_cps(const ExperimentConfig& cfg)
{
    if (!cfg.cps)
        throw ValidationError("config.cps: required for the cps stage");
    StageReport rep;
    const auto paths = load_paths(cfg);
    const auto sk = load_skeletons(cfg);
    CpsOptions co;
    co.smoothing = cfg.cps->smoothing;
    co.min_bucket = cfg.cps->min_bucket;
    json summary;
    std::ostringstream os;
    const double eps = cfg.ladder->eps;
    summary["eps"] = eps;
    summary["eps_effective"] = std::pow(1.0 + eps, 3) - 1.0;
    if (cfg.ladder->target_spread)
        summary["target_spread"] = *cfg.ladder->target_spread;
    if (cfg.model.dim() == 1) {
        if (sk.empty() || !sk.front().snapped || cfg.ladder->mode != LadderMode::multiplicative)
            throw ValidationError("config.ladder: the d = 1 construction needs snapped multiplicative ladders");
        const auto sched = make_schedule(*cfg.cps->schedule, paths.front().value(0), eps);
        const auto res = build_cps_1d(sk, paths, sched, co, exec_of(cfg));
        write_cps_csv(os, res.cps);
        summary["construction"] = "retired_walk";
        summary["schedule"] = cfg.cps->schedule->type;
        summary["sandwich"] = sandwich_json(res.sandwich);
        summary["certificate"] = certificate_json(res.certificate);
        json law = json::object();
        for (const auto& [lvl, mass] : res.terminal_law)
            law[std::to_string(lvl)] = mass;
        summary["terminal_law"] = law;
        summary["buckets"] = res.counts.counts.size();
    } else {
        const auto res = build_cps_multi(sk, paths, co, exec_of(cfg));
        write_cps_csv(os, res.cps);
        summary["construction"] = "esscher_chain";
        summary["sandwich"] = sandwich_json(res.sandwich);
        summary["certificate"] = certificate_json(res.certificate);
        summary["l2_total"] = res.l2_total;
        summary["l2_stderr"] = res.l2_stderr;
        summary["l2_bound"] = 2.0;
        summary["l2_passed"] = res.l2_total <= 2.0 + 3.0 * res.l2_stderr;
        summary["solves"] = res.solves.size();
        summary["pooled_atoms"] = res.pooled_atoms;
        summary["worst_moment_error"] = res.worst_moment_error;
        json diag = json::array();
        for (const auto& s : res.solves)
            diag.push_back(json::parse(s.result.diagnostics_json()));
        summary["esscher"] = diag;
    }
    emit(cfg, rep, "cps.csv", os.str());
    emit(cfg, rep, "cps_summary.json", summary.dump(2) + "\n");
    rep.summary = summary;
    record(cfg, rep.artifacts);
    return rep;
}

StageReport stage_facelift(const ExperimentConfig& cfg)
{
    if (!cfg.facelift)
        throw ValidationError("config.facelift: required for the facelift stage");
    StageReport rep;
    const auto paths = load_paths(cfg);
    const Envelope env(cfg.facelift->payoff);
    const double s0 = paths.front().value(0);
    const double ghat = env(s0);
    const double delta = cfg.facelift->delta ? *cfg.facelift->delta : default_delta(ghat);
    std::ostringstream os;
    os << "eps,upper,lower,envelope,mc_stderr_lower,n_paths,seed\n";
    json rows = json::array();
    if (env.infinite()) {
        for (double e : cfg.facelift->eps) {
            os << format_double(e) << ",inf,inf,inf,0," << paths.size() << ',' << cfg.seed << '\n';
            rows.push_back({{"eps", e}, {"infinite", true}});
        }
    } else {
        const auto sq = squeeze_report(env, s0, cfg.facelift->eps, delta, paths, exec_of(cfg));
        for (const auto& r : sq.rows) {
            os << format_double(r.eps) << ',' << format_double(r.upper.price) << ',' << format_double(r.lower.price)
               << ',' << format_double(sq.envelope) << ',' << format_double(r.lower.stderr_) << ',' << paths.size()
               << ',' << cfg.seed << '\n';
            rows.push_back({{"eps", r.eps},
                            {"upper", r.upper.price},
                            {"beta", r.upper.beta},
                            {"J", 2.0 * std::abs(r.upper.beta) * s0},
                            {"certified_paths", r.upper.certified_paths},
                            {"lower", r.lower.price},
                            {"lower_stderr", r.lower.stderr_},
                            {"u", r.lower.u},
                            {"v", r.lower.v},
                            {"m", r.lower.m},
                            {"eps_prime", r.lower.eps_prime},
                            {"x0", r.lower.x0},
                            {"prob_v", r.lower.prob_v},
                            {"chord_value", r.lower.chord_value},
                            {"direct_estimate", r.lower.direct_estimate},
                            {"direct_paths", r.lower.direct_paths}});
        }
        rep.summary["monotone"] = sq.monotone;
    }
    emit(cfg, rep, "squeeze.csv", os.str());
    json summary = {{"envelope", ghat}, {"delta", delta}, {"s0", s0}, {"rows", rows}};
    if (rep.summary.contains("monotone"))
        summary["monotone"] = rep.summary["monotone"];
    emit(cfg, rep, "squeeze.json", summary.dump(2) + "\n");
    rep.summary = summary;
    record(cfg, rep.artifacts);
    return rep;
}

StageReport stage_audit(const ExperimentConfig& cfg)
{
    if (!cfg.audit)
        throw ValidationError("config.audit: required for the audit stage");
    StageReport rep;
    const auto sk = load_skeletons(cfg);
    json summary;
    std::ostringstream os;
    if (cfg.model.dim() == 1) {
        const auto a = mark_positivity(sk, cfg.audit->min_count);
        os << "stop,level,count_down,count_retire,count_up\n";
        for (const auto& r : a.rows)
            os << r.stop << ',' << r.level << ',' << format_double(r.down) << ',' << format_double(r.retire) << ','
               << format_double(r.up) << '\n';
        emit(cfg, rep, "audit_marks.csv", os.str());
        json flagged = json::array();
        for (const auto& r : a.rows)
            if (r.flagged)
                flagged.push_back({{"stop", r.stop}, {"level", r.level}});
        summary["mark_positivity"] = {{"passed", a.passed},
                                      {"populated", a.populated},
                                      {"flagged", a.flagged},
                                      {"min_count", cfg.audit->min_count},
                                      {"flagged_buckets", flagged}};
        if (cfg.audit->tube) {
            const auto paths = load_paths(cfg);
            const auto& tc = *cfg.audit->tube;
            const SamplePath& h = paths.front();
            TubeQuery q;
            q.v = tc.v_index;
            q.eta = tc.eta;
            q.draws = tc.draws;
            q.target.assign(h.size() - tc.v_index, h.value(tc.v_index));
            ContinuationSampler sampler;
            if (cfg.model.type == "gbm")
                sampler = [&](const SamplePath& p, std::size_t v, std::size_t n, std::uint64_t s) {
                    return continue_gbm(p, v, cfg.model.gbm, n, s, exec_of(cfg));
                };
            else
                sampler = [&](const SamplePath& p, std::size_t v, std::size_t n, std::uint64_t s) {
                    return continue_gfbm(p, v, cfg.model.fbm, n, s, exec_of(cfg));
                };
            const auto t = tube_probability(h, q, sampler, splitmix64(cfg.seed ^ 0x7475626554554245ULL));
            summary["tube"] = {{"estimate", t.probability.estimate},
                               {"stderr", t.probability.stderr_},
                               {"lower99", t.probability.lower},
                               {"upper99", t.probability.upper},
                               {"hits", t.hits},
                               {"draws", t.draws},
                               {"evidence", t.evidence}};
        }
    } else {
        const auto a = interior_hull_audit(sk, cfg.audit->min_count);
        os << "stop,level,size,zero_mass,delta,ok\n";
        for (const auto& r : a.rows) {
            if (!r.populated)
                continue;
            std::string lv;
            for (std::size_t i = 0; i < r.level.size(); ++i)
                lv += (i ? ";" : "") + std::to_string(r.level[i]);
            os << r.stop << ',' << lv << ',' << r.size << ',' << format_double(r.zero_mass) << ','
               << format_double(r.margin.delta) << ',' << (r.passed ? 1 : 0) << '\n';
        }
        emit(cfg, rep, "audit_hull.csv", os.str());
        summary["interior_hull"] = {
            {"passed", a.passed}, {"populated", a.populated}, {"failed", a.failed}, {"min_count", cfg.audit->min_count}};
    }
    emit(cfg, rep, "audit.json", summary.dump(2) + "\n");
    rep.summary = summary;
    record(cfg, rep.artifacts);
    return rep;
}

StageReport stage_run(const ExperimentConfig& cfg)
{
    StageReport all;
    auto take = [&](const char* name, const StageReport& r) {
        all.artifacts.insert(all.artifacts.end(), r.artifacts.begin(), r.artifacts.end());
        all.summary[name] = r.summary;
    };
    take("simulate", stage_simulate(cfg));
    if (cfg.ladder)
        take("ladder", stage_ladder(cfg));
    if (cfg.cps)
        take("cps", stage_cps(cfg));
    if (cfg.facelift)
        take("facelift", stage_facelift(cfg));
    if (cfg.audit)
        take("audit", stage_audit(cfg));
    return all;
}

}  // namespace cpslab
