#include "cpslab/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace cpslab {

std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s)
{
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ')
        ++b;
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e)
        throw ValidationError("not a number: '" + s + "'");
    return v;
}

namespace {

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ','))
        out.push_back(cur);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

std::size_t parse_index(const std::string& s)
{
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError("not an index: '" + s + "'");
    return v;
}

int parse_int(const std::string& s)
{
    int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError("not an integer: '" + s + "'");
    return v;
}

std::string header_line(std::istream& is, const char* what)
{
    std::string line;
    if (!std::getline(is, line))
        throw ValidationError(std::string(what) + ": empty file");
    return line;
}

}  // namespace

void write_paths_csv(std::ostream& os, const std::vector<SamplePath>& paths)
{
    const std::size_t d = paths.empty() ? 1 : paths.front().dim;
    os << "path_id,t";
    for (std::size_t i = 0; i < d; ++i)
        os << ",asset_" << i;
    os << '\n';
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& path = paths[p];
        for (std::size_t k = 0; k < path.size(); ++k) {
            os << p << ',' << format_double((*path.grid)[k]);
            for (std::size_t i = 0; i < d; ++i)
                os << ',' << format_double(path.value(k, i));
            os << '\n';
        }
    }
}

std::vector<SamplePath> read_paths_csv(std::istream& is)
{
    const auto head = split(header_line(is, "paths.csv"));
    if (head.size() < 3 || head[0] != "path_id" || head[1] != "t")
        throw ValidationError("paths.csv: unexpected header");
    const std::size_t d = head.size() - 2;
    std::vector<std::vector<double>> values;
    std::vector<double> times;
    std::string line;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty())
            continue;
        const auto f = split(line);
        if (f.size() != d + 2)
            throw ValidationError("paths.csv line " + std::to_string(row) + ": wrong field count");
        const std::size_t p = parse_index(f[0]);
        if (p > values.size() || p + 2 <= values.size())
            throw ValidationError("paths.csv line " + std::to_string(row) + ": rows out of order");
        if (p == values.size())
            values.emplace_back();
        const std::size_t k = values[p].size() / d;
        const double t = parse_double(f[1]);
        if (p == 0)
            times.push_back(t);
        else if (k >= times.size() || times[k] != t)
            throw ValidationError("paths.csv line " + std::to_string(row) + ": paths on different grids");
        for (std::size_t i = 0; i < d; ++i)
            values[p].push_back(parse_double(f[2 + i]));
    }
    if (values.empty())
        throw ValidationError("paths.csv: no paths");
    auto grid = make_grid(TimeGrid(times));
    std::vector<SamplePath> out;
    for (auto& v : values) {
        if (v.size() != times.size() * d)
            throw ValidationError("paths.csv: paths of different length");
        out.push_back({grid, d, std::move(v)});
    }
    return out;
}

void write_skeletons_csv(std::ostream& os, const std::vector<LadderSkeleton>& skeletons)
{
    const std::size_t d = skeletons.empty() ? 1 : skeletons.front().dim;
    os << "path_id,n,k,tau";
    for (std::size_t i = 0; i < d; ++i)
        os << ",anchor_" << i;
    for (std::size_t i = 0; i < d; ++i)
        os << ",level_" << i;
    os << ",mark\n";
    for (std::size_t p = 0; p < skeletons.size(); ++p)
        for (std::size_t n = 0; n < skeletons[p].stops.size(); ++n) {
            const auto& st = skeletons[p].stops[n];
            os << p << ',' << n << ',' << st.grid_index << ',' << format_double(st.tau);
            for (double a : st.anchor)
                os << ',' << format_double(a);
            for (int l : st.level)
                os << ',' << l;
            os << ',' << st.mark << '\n';
        }
}

nlohmann::json skeletons_sidecar(const std::vector<LadderSkeleton>& skeletons)
{
    nlohmann::json j;
    j["n_paths"] = skeletons.size();
    if (skeletons.empty())
        return j;
    const auto& s0 = skeletons.front();
    j["eps"] = s0.eps;
    j["mode"] = s0.mode == LadderMode::multiplicative ? "multiplicative" : "additive";
    j["dim"] = s0.dim;
    j["snapped"] = s0.snapped;
    double overshoot = 0.0;
    std::size_t multi = 0, stops = 0;
    auto per = nlohmann::json::array();
    for (const auto& sk : skeletons) {
        overshoot = std::max(overshoot, sk.diagnostics.max_overshoot);
        multi += sk.diagnostics.multi_level_crossings;
        stops += sk.stops.size();
        per.push_back({sk.diagnostics.max_overshoot, sk.diagnostics.multi_level_crossings});
    }
    j["max_overshoot"] = overshoot;
    j["multi_level_crossings"] = multi;
    j["total_stops"] = stops;
    j["per_path_diagnostics"] = per;
    return j;
}

std::vector<LadderSkeleton> read_skeletons_csv(std::istream& is, const nlohmann::json& sidecar)
{
    const auto head = split(header_line(is, "skeletons.csv"));
    if (head.size() < 7 || head[0] != "path_id" || head[1] != "n" || head[2] != "k" || head[3] != "tau" ||
        head.back() != "mark")
        throw ValidationError("skeletons.csv: unexpected header");
    const std::size_t d = (head.size() - 5) / 2;
    if (2 * d + 5 != head.size())
        throw ValidationError("skeletons.csv: unexpected header");
    LadderSkeleton proto;
    try {
        proto.eps = sidecar.at("eps").get<double>();
        proto.mode = sidecar.at("mode").get<std::string>() == "additive" ? LadderMode::additive
                                                                           : LadderMode::multiplicative;
        proto.dim = sidecar.at("dim").get<std::size_t>();
        proto.snapped = sidecar.at("snapped").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("skeletons.json: ") + e.what());
    }
    if (proto.dim != d)
        throw ValidationError("skeletons.json: dimension disagrees with skeletons.csv");
    const auto* per = sidecar.contains("per_path_diagnostics") ? &sidecar["per_path_diagnostics"] : nullptr;

    std::vector<LadderSkeleton> out;
    std::string line;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty())
            continue;
        const auto f = split(line);
        if (f.size() != head.size())
            throw ValidationError("skeletons.csv line " + std::to_string(row) + ": wrong field count");
        const std::size_t p = parse_index(f[0]);
        const std::size_t n = parse_index(f[1]);
        if (p == out.size() && n == 0) {
            out.push_back(proto);
            if (per && p < per->size()) {
                out.back().diagnostics.max_overshoot = (*per)[p][0].get<double>();
                out.back().diagnostics.multi_level_crossings = (*per)[p][1].get<std::size_t>();
            }
        }
        if (p + 1 != out.size() || out.back().stops.size() != n)
            throw ValidationError("skeletons.csv line " + std::to_string(row) + ": rows out of order");
        LadderStop st;
        st.grid_index = parse_index(f[2]);
        st.tau = parse_double(f[3]);
        for (std::size_t i = 0; i < d; ++i)
            st.anchor.push_back(parse_double(f[4 + i]));
        for (std::size_t i = 0; i < d; ++i)
            st.level.push_back(parse_int(f[4 + d + i]));
        st.mark = parse_int(f.back());
        out.back().stops.push_back(std::move(st));
    }
    for (auto& sk : out)
        sk.retired_at = sk.stops.size() - 1;
    return out;
}

void write_cps_csv(std::ostream& os, const ConsistentPriceSystem& cps)
{
    const std::size_t d = cps.dim;
    os << "path_id,n,tau";
    for (std::size_t i = 0; i < d; ++i)
        os << ",S_" << i;
    for (std::size_t i = 0; i < d; ++i)
        os << ",Stilde_" << i;
    os << ",L\n";
    for (std::size_t p = 0; p < cps.paths.size(); ++p) {
        const auto& cp = cps.paths[p];
        for (std::size_t n = 0; n < cp.stops(); ++n) {
            os << p << ',' << n << ',' << format_double(cp.tau[n]);
            for (std::size_t i = 0; i < d; ++i)
                os << ',' << format_double(cp.price[n * d + i]);
            for (std::size_t i = 0; i < d; ++i)
                os << ',' << format_double(cp.shadow[n * d + i]);
            os << ',' << format_double(cp.prefix_likelihood[n]) << '\n';
        }
    }
}

PayoffCurve payoff_from_json(const nlohmann::json& j)
{
    auto need = [&](const char* key) -> const nlohmann::json& {
        if (!j.contains(key))
            throw ValidationError(std::string("payoff.") + key +
                                  ": required (the envelope depends on the declared boundary behaviour)");
        return j.at(key);
    };
    PayoffCurve c;
    try {
        const auto& samples = need("samples");
        if (!samples.is_array() || samples.empty())
            throw ValidationError("payoff.samples: non-empty array of [x, g] pairs required");
        for (const auto& s : samples) {
            if (!s.is_array() || s.size() != 2)
                throw ValidationError("payoff.samples: each entry must be [x, g]");
            c.x.push_back(s[0].get<double>());
            c.g.push_back(s[1].get<double>());
        }
        const auto& ll = need("left_limit");
        if (ll.is_string()) {
            if (ll.get<std::string>() != "inf")
                throw ValidationError("payoff.left_limit: a number or \"inf\"");
            c.left_limit = std::numeric_limits<double>::infinity();
        } else {
            c.left_limit = ll.get<double>();
        }
        c.right_slope = need("right_slope").get<double>();
        c.lower_bound = need("lower_bound").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("payoff: ") + e.what());
    }
    try {
        c.validate();
    } catch (const DomainError& e) {
        throw ValidationError(e.what());
    }
    return c;
}

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string read_artifact(const std::filesystem::path& p)
{
    if (!std::filesystem::exists(p))
        throw ValidationError("missing upstream artifact: expected " + p.string());
    return read_file(p);
}

void write_file(const std::filesystem::path& p, const std::string& content)
{
    if (p.has_parent_path())
        std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw ValidationError("cannot write " + p.string());
    out << content;
}

}  // namespace cpslab
