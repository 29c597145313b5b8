#include "nsch/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace nsch {

namespace pt = boost::property_tree;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
        throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& s) {
    Int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
        throw ConfigError(key + ": expected an integer, got '" + s + "'");
    return v;
}

template <class E>
E parse_enum(const std::string& key, const std::string& s,
             std::initializer_list<std::pair<const char*, E>> names) {
    std::string allowed;
    for (const auto& [n, e] : names) {
        if (s == n) return e;
        allowed += (allowed.empty() ? "" : ", ") + std::string(n);
    }
    throw ConfigError(key + ": unknown value '" + s + "' (allowed: " + allowed + ")");
}

const char* mobility_name(MobilityKind k) { return k == MobilityKind::constant ? "constant" : "degenerate"; }

struct Entry {
    std::string section, key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

std::vector<Entry> entries(RunConfig& c) {
    std::vector<Entry> e;
    auto real = [&](const char* sec, const char* key, double& ref) {
        std::string name = std::string(sec) + "." + key;
        e.push_back({sec, key, [&ref, name](const std::string& s) { ref = parse_double(name, s); },
                     [&ref] { return num(ref); }});
    };
    auto integer = [&](const char* sec, const char* key, int& ref) {
        std::string name = std::string(sec) + "." + key;
        e.push_back({sec, key, [&ref, name](const std::string& s) { ref = parse_int<int>(name, s); },
                     [&ref] { return std::to_string(ref); }});
    };
    auto text = [&](const char* sec, const char* key, std::string& ref) {
        e.push_back({sec, key, [&ref](const std::string& s) { ref = s; }, [&ref] { return ref; }});
    };
    auto mobility = [&](const char* prefix, MobilityParams& m) {
        std::string k = prefix;
        std::string name = "model." + k;
        e.push_back({"model", k,
                     [&m, name](const std::string& s) {
                         m.kind = parse_enum<MobilityKind>(
                             name, s, {{"constant", MobilityKind::constant},
                                       {"degenerate", MobilityKind::degenerate}});
                     },
                     [&m] { return std::string(mobility_name(m.kind)); }});
        real("model", (k == "mobility_phi" ? "mobility_phi_value" : "mobility_psi_value"), m.value);
        integer("model", (k == "mobility_phi" ? "mobility_phi_k" : "mobility_psi_k"), m.k);
    };

    integer("grid", "nx", c.grid.nx);
    integer("grid", "ny", c.grid.ny);
    real("grid", "lx", c.grid.lx);
    real("grid", "ly", c.grid.ly);

    ModelParameters& m = c.model;
    real("model", "rho1", m.rho1);
    real("model", "rho2", m.rho2);
    real("model", "nu1", m.nu1);
    real("model", "nu2", m.nu2);
    real("model", "theta1", m.theta1);
    real("model", "theta2", m.theta2);
    real("model", "tilde_theta1", m.tilde_theta1);
    real("model", "tilde_theta2", m.tilde_theta2);
    real("model", "gamma1", m.gamma1);
    real("model", "gamma2", m.gamma2);
    real("model", "beta", m.beta);
    real("model", "sigma2", m.sigma2);
    real("model", "c", m.c);
    real("model", "sigma1", m.sigma1);
    real("model", "sigma1_power", m.sigma1_power);
    mobility("mobility_phi", m.mobility_phi);
    mobility("mobility_psi", m.mobility_psi);

    SolverConfig& s = c.solver;
    real("solver", "h", s.h);
    real("solver", "picard_tol", s.picard_tol);
    real("solver", "newton_tol", s.newton_tol);
    integer("solver", "picard_max", s.picard_max);
    integer("solver", "newton_max", s.newton_max);
    real("solver", "energy_audit_tol", s.energy_audit_tol);
    real("solver", "h_backoff", s.h_backoff);
    real("solver", "h_min", s.h_min);
    real("solver", "cg_tol", s.cg_tol);
    integer("solver", "cg_max_iter", s.cg_max_iter);
    e.push_back({"solver", "advection",
                 [&s](const std::string& v) {
                     s.advection = parse_enum<AdvectionScheme>(
                         "solver.advection", v,
                         {{"centered", AdvectionScheme::centered}, {"upwind", AdvectionScheme::upwind}});
                 },
                 [&s] {
                     return std::string(s.advection == AdvectionScheme::centered ? "centered" : "upwind");
                 }});

    ScenarioConfig& sc = c.scenario;
    e.push_back({"scenario", "kind",
                 [&sc](const std::string& v) {
                     sc.kind = parse_enum<ScenarioKind>("scenario.kind", v,
                                                        {{"uniform", ScenarioKind::uniform},
                                                         {"spinodal", ScenarioKind::spinodal},
                                                         {"droplet", ScenarioKind::droplet},
                                                         {"file", ScenarioKind::file}});
                 },
                 [&sc] { return std::string(to_string(sc.kind)); }});
    real("scenario", "phi_mean", sc.phi_mean);
    real("scenario", "psi_mean", sc.psi_mean);
    real("scenario", "amplitude", sc.amplitude);
    real("scenario", "radius", sc.radius);
    real("scenario", "psi_base", sc.psi_base);
    real("scenario", "psi_boost", sc.psi_boost);
    text("scenario", "phi_file", sc.phi_file);
    text("scenario", "psi_file", sc.psi_file);
    text("scenario", "ux_file", sc.ux_file);
    text("scenario", "uy_file", sc.uy_file);

    e.push_back({"run", "mode",
                 [&c](const std::string& v) {
                     c.mode = parse_enum<RunMode>("run.mode", v,
                                                  {{"nondegenerate", RunMode::nondegenerate},
                                                   {"continuation", RunMode::continuation}});
                 },
                 [&c] { return std::string(to_string(c.mode)); }});
    real("run", "t_final", c.t_final);
    e.push_back({"run", "seed",
                 [&c](const std::string& v) { c.seed = parse_int<std::uint64_t>("run.seed", v); },
                 [&c] { return std::to_string(c.seed); }});
    e.push_back({"run", "epsilons",
                 [&c](const std::string& v) {
                     c.epsilons.clear();
                     std::stringstream ss(v);
                     std::string item;
                     while (std::getline(ss, item, ',')) {
                         std::size_t a = item.find_first_not_of(" \t");
                         std::size_t b = item.find_last_not_of(" \t");
                         if (a == std::string::npos) throw ConfigError("run.epsilons: empty entry");
                         c.epsilons.push_back(parse_double("run.epsilons", item.substr(a, b - a + 1)));
                     }
                 },
                 [&c] {
                     std::string s;
                     for (double v : c.epsilons) s += (s.empty() ? "" : ", ") + num(v);
                     return s;
                 }});

    text("output", "directory", c.output.directory);
    integer("output", "snapshot_stride", c.output.snapshot_stride);
    text("output", "ledger", c.output.ledger);
    integer("output", "flux_stride", c.output.flux_stride);
    return e;
}

}  // namespace

const char* to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::uniform: return "uniform";
        case ScenarioKind::spinodal: return "spinodal";
        case ScenarioKind::droplet: return "droplet";
        case ScenarioKind::file: return "file";
    }
    return "?";
}

const char* to_string(RunMode m) {
    return m == RunMode::nondegenerate ? "nondegenerate" : "continuation";
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    for (const std::string& o : overrides) {
        std::size_t eq = o.find('=');
        std::size_t dot = o.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw ConfigError("override '" + o + "': expected section.key=value");
        auto trim = [](std::string s) {
            std::size_t a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string path = trim(o.substr(0, eq));
        std::string sec = path.substr(0, path.find('.'));
        std::string key = path.substr(path.find('.') + 1);
        if (sec.empty() || key.empty() || key.find('.') != std::string::npos)
            throw ConfigError("override '" + o + "': expected section.key=value");
        auto it = tree.find(sec);
        pt::ptree& child = it == tree.not_found() ? tree.push_back({sec, pt::ptree()})->second
                                                  : tree.to_iterator(it)->second;
        child.put(pt::ptree::path_type(key, '\x01'), trim(o.substr(eq + 1)));
    }

    RunConfig c;
    std::vector<Entry> table = entries(c);
    for (const auto& [sec, sub] : tree) {
        bool known_section = false;
        for (const Entry& e : table) known_section |= e.section == sec;
        // An empty known section and a bare top-level key look alike in the tree.
        if (!sub.data().empty()) throw ConfigError("key '" + sec + "' outside of a section");
        if (!known_section) {
            if (sub.empty()) throw ConfigError("key '" + sec + "' outside of a section");
            throw ConfigError("unknown section [" + sec + "]");
        }
        for (const auto& [key, val] : sub) {
            const Entry* hit = nullptr;
            for (const Entry& e : table)
                if (e.section == sec && e.key == key) hit = &e;
            if (!hit) throw ConfigError("unknown key '" + key + "' in [" + sec + "]");
            hit->set(val.data());
        }
    }
    return c;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str(), overrides);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string config_text(const RunConfig& cfg) {
    RunConfig c = cfg;
    std::string out, section;
    for (const Entry& e : entries(c)) {
        if (e.section != section) {
            out += (section.empty() ? "[" : "\n[") + e.section + "]\n";
            section = e.section;
        }
        out += e.key + " = " + e.get() + "\n";
    }
    return out;
}

ModelSpec validate_config(const RunConfig& c) {
    try {
        Grid2D check(c.grid.nx, c.grid.ny, c.grid.lx, c.grid.ly);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[grid] ") + e.what());
    }
    ModelSpec spec = build_model(c.model);
    bool degenerate = spec.degenerate();
    if (c.mode == RunMode::nondegenerate && degenerate)
        throw ModelError("(H3) nondegenerate mode needs mobilities bounded below; use mode = "
                         "continuation for degenerate mobilities (H3*)");
    if (c.mode == RunMode::continuation && !degenerate)
        throw ModelError("(H3*) continuation mode needs degenerate mobilities");
    validate_solver(c.solver, spec);

    if (!(c.t_final > 0.0) || !std::isfinite(c.t_final)) throw ConfigError("run.t_final must be positive");
    if (c.output.snapshot_stride < 0) throw ConfigError("output.snapshot_stride must be >= 0");
    if (c.output.flux_stride < 1) throw ConfigError("output.flux_stride must be >= 1");
    if (c.output.ledger.empty()) throw ConfigError("output.ledger must be a file name");

    const ScenarioConfig& s = c.scenario;
    switch (s.kind) {
        case ScenarioKind::uniform:
        case ScenarioKind::spinodal:
            if (!(s.phi_mean > -1.0 && s.phi_mean < 1.0))
                throw ConfigError("scenario.phi_mean must lie in (-1,1)");
            if (!(s.psi_mean > 0.0 && s.psi_mean < 1.0))
                throw ConfigError("scenario.psi_mean must lie in (0,1)");
            if (!(s.amplitude >= 0.0)) throw ConfigError("scenario.amplitude must be >= 0");
            break;
        case ScenarioKind::droplet:
            if (!(s.radius >= 0.0)) throw ConfigError("scenario.radius must be >= 0");
            if (!(s.psi_base > 0.0) || !(s.psi_boost >= 0.0) || !(s.psi_base + s.psi_boost < 1.0))
                throw ConfigError("scenario.psi_base + psi_boost must lie in (0,1) with base > 0");
            break;
        case ScenarioKind::file:
            if (s.phi_file.empty() || s.psi_file.empty())
                throw ConfigError("scenario.kind = file needs phi_file and psi_file");
            if (s.ux_file.empty() != s.uy_file.empty())
                throw ConfigError("scenario.ux_file and uy_file must be given together");
            break;
    }
    if (c.mode == RunMode::continuation) {
        double lim = regularization_limit(spec);
        for (std::size_t k = 0; k < c.epsilons.size(); ++k) {
            if (!(c.epsilons[k] > 0.0) || c.epsilons[k] > lim)
                throw ModelError("run.epsilons: " + num(c.epsilons[k]) + " outside I_M = (0, " +
                                 num(lim) + "]");
            if (k > 0 && !(c.epsilons[k] < c.epsilons[k - 1]))
                throw ConfigError("run.epsilons must be strictly decreasing");
        }
    }
    return spec;
}

}  // namespace nsch
