#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cpslab/pipeline.hpp"

using namespace cpslab;

namespace {

int fail(int code, const char* kind, const std::exception& e)
{
    std::cerr << "error (" << kind << "): " << e.what() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Consistent price systems from ladder skeletons"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;

    const std::pair<const char*, const char*> stages[] = {
        {"simulate", "Sample price paths (paths.csv)"},
        {"ladder", "Extract ladder skeletons (skeletons.csv, skeletons.json)"},
        {"cps", "Build the consistent price system (cps.csv, cps_summary.json)"},
        {"facelift", "Superreplication squeeze (squeeze.csv, squeeze.json)"},
        {"audit", "Support audits (audit_marks.csv or audit_hull.csv, audit.json)"},
        {"run", "All configured stages in order"},
    };
    for (const auto& [name, help] : stages) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Override the master seed");
        sub->add_option("--workers", workers, "OpenMP worker count")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "Output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        Overrides ov;
        ov.seed = seed;
        ov.workers = workers;
        if (out)
            ov.output = *out;
        const ExperimentConfig cfg = load_config(config, ov);
        const std::string stage = app.get_subcommands().front()->get_name();
        StageReport rep;
        if (stage == "simulate")
            rep = stage_simulate(cfg);
        else if (stage == "ladder")
            rep = stage_ladder(cfg);
        else if (stage == "cps")
            rep = stage_cps(cfg);
        else if (stage == "facelift")
            rep = stage_facelift(cfg);
        else if (stage == "audit")
            rep = stage_audit(cfg);
        else
            rep = stage_run(cfg);
        for (const auto& a : rep.artifacts)
            std::cout << (cfg.output / a).string() << '\n';
        return 0;
    } catch (const ValidationError& e) {
        return fail(1, "validation", e);
    } catch (const DomainError& e) {
        return fail(1, "domain", e);
    } catch (const NumericalError& e) {
        return fail(2, "numerical", e);
    } catch (const InvariantViolation& e) {
        return fail(3, "invariant", e);
    } catch (const std::exception& e) {
        return fail(1, "error", e);
    }
}
