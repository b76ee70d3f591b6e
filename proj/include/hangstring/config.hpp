#pragma once

// Experiment configuration: a flat key/value text format with nested
// sections ([mesh], [time], ...), parsed into a validated ExperimentConfig.
// Unknown keys are errors, not warnings — silent typos poison long sweeps.
// The fully resolved key set (defaults included) is kept for embedding
// into every report.
//
// Format:
//   kind = eigenmode          # top-level keys before any section
//   seed = 42
//   [mesh]
//   n = 512                   # section keys resolve to mesh.n, ...
//   grading = 1
// Lists are whitespace-separated numbers; '#' starts a comment.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hangstring/mesh.hpp"

namespace hangstring {

/// Configuration problems map to CLI exit status 2 (vs 1 for runtime
/// failures), so they get their own exception type.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ExperimentConfig {
    std::string kind;
    uint64_t seed = 1;
    std::string output_dir = ".";

    int n = 256;
    double grading = 1.0;

    double T = 1.0;
    double dt = 1e-3;

    std::vector<double> g{0, -1};
    std::string background = "straight";  // or a CSV path

    std::string generator = "bessel";  // bessel | zero | smooth
    double amplitude = 1.0;

    // kind-specific
    std::vector<double> eps_list, gamma_list;
    std::vector<int> n_list;
    double freq_tol = 0.01;
    double order_min = 1.8;
    int max_iter = 30;
    double tol = 1e-9;
    double picard_seed = 0.5;
    int order = 2;
    double tolerance = 1e-8;
    int m_max = 2;
    int draws = 50;
    std::string bound_kind = "EE1";
    double cap = 50.0;
    double lambda = 0.0;  // 0 means calibrate

    std::map<std::string, std::string> resolved;  // full key set for reports
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not a number: '" + v + "'");
    }
}

inline long to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not an integer: '" + v + "'");
    }
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) out.push_back(to_double(key, tok));
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
}

/// Raw "section.key -> value" pairs from the file.
inline std::map<std::string, std::string> read_kv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        if (kv.count(key)) throw ConfigError("duplicate key '" + key + "'");
        kv[key] = val;
    }
    return kv;
}

inline const std::set<std::string>& allowed_keys(const std::string& kind) {
    static const std::set<std::string> common = {
        "kind",       "seed",           "output_dir",          "mesh.n",
        "mesh.grading", "time.T",       "time.dt",             "physics.g",
        "physics.background", "data.generator", "data.amplitude"};
    static const std::map<std::string, std::set<std::string>> extra = {
        {"eigenmode", {"params.freq_tol"}},
        {"epsilon_sweep", {"params.eps_list"}},
        {"refinement", {"params.n_list", "params.order_min"}},
        {"picard_gamma_sweep",
         {"params.gamma_list", "params.max_iter", "params.tol", "params.picard_seed"}},
        {"compat_check", {"params.order", "params.tolerance"}},
        {"norm_equivalence", {"params.m_max", "params.draws"}},
        {"energy_verify",
         {"params.bound_kind", "params.gamma_list", "params.cap", "params.lambda"}},
    };
    auto it = extra.find(kind);
    if (it == extra.end()) throw ConfigError("unknown experiment kind '" + kind + "'");
    static std::map<std::string, std::set<std::string>> cache;
    auto [c, inserted] = cache.try_emplace(kind);
    if (inserted) {
        c->second = common;
        c->second.insert(it->second.begin(), it->second.end());
    }
    return c->second;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& path) {
    auto kv = detail::read_kv(path);
    auto it = kv.find("kind");
    if (it == kv.end()) throw ConfigError("missing required key 'kind'");
    ExperimentConfig c;
    c.kind = it->second;
    const auto& allowed = detail::allowed_keys(c.kind);
    for (const auto& [k, v] : kv)
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' for kind '" + c.kind + "'");

    auto get = [&](const std::string& k) -> const std::string* {
        auto i = kv.find(k);
        return i == kv.end() ? nullptr : &i->second;
    };
    auto need = [&](const std::string& k) -> const std::string& {
        auto* p = get(k);
        if (!p) throw ConfigError("kind '" + c.kind + "' requires key '" + k + "'");
        return *p;
    };
    using detail::to_double;
    using detail::to_int;
    using detail::to_list;

    if (auto* p = get("seed")) c.seed = static_cast<uint64_t>(to_int("seed", *p));
    if (auto* p = get("output_dir")) c.output_dir = *p;
    if (auto* p = get("mesh.n")) c.n = static_cast<int>(to_int("mesh.n", *p));
    if (auto* p = get("mesh.grading")) c.grading = to_double("mesh.grading", *p);
    if (auto* p = get("time.T")) c.T = to_double("time.T", *p);
    if (auto* p = get("time.dt")) c.dt = to_double("time.dt", *p);
    if (auto* p = get("physics.g")) c.g = to_list("physics.g", *p);
    if (auto* p = get("physics.background")) c.background = *p;
    if (auto* p = get("data.generator")) c.generator = *p;
    if (auto* p = get("data.amplitude")) c.amplitude = to_double("data.amplitude", *p);

    if (c.kind == "eigenmode") {
        if (auto* p = get("params.freq_tol")) c.freq_tol = to_double("params.freq_tol", *p);
        if (!(c.freq_tol > 0)) throw ConfigError("params.freq_tol must be positive");
    } else if (c.kind == "epsilon_sweep") {
        c.eps_list = to_list("params.eps_list", need("params.eps_list"));
    } else if (c.kind == "refinement") {
        for (double x : to_list("params.n_list", need("params.n_list")))
            c.n_list.push_back(static_cast<int>(x));
        if (auto* p = get("params.order_min")) c.order_min = to_double("params.order_min", *p);
    } else if (c.kind == "picard_gamma_sweep") {
        c.gamma_list = to_list("params.gamma_list", need("params.gamma_list"));
        if (auto* p = get("params.max_iter")) c.max_iter = static_cast<int>(to_int("params.max_iter", *p));
        if (auto* p = get("params.tol")) c.tol = to_double("params.tol", *p);
        if (auto* p = get("params.picard_seed")) c.picard_seed = to_double("params.picard_seed", *p);
        if (!(c.tol > 0)) throw ConfigError("params.tol must be positive");
    } else if (c.kind == "compat_check") {
        if (auto* p = get("params.order")) c.order = static_cast<int>(to_int("params.order", *p));
        if (auto* p = get("params.tolerance")) c.tolerance = to_double("params.tolerance", *p);
        if (!(c.tolerance > 0)) throw ConfigError("params.tolerance must be positive");
    } else if (c.kind == "norm_equivalence") {
        if (auto* p = get("params.m_max")) c.m_max = static_cast<int>(to_int("params.m_max", *p));
        if (auto* p = get("params.draws")) c.draws = static_cast<int>(to_int("params.draws", *p));
    } else if (c.kind == "energy_verify") {
        if (auto* p = get("params.bound_kind")) c.bound_kind = *p;
        if (c.bound_kind != "EE1" && c.bound_kind != "EstLP" && c.bound_kind != "BEE")
            throw ConfigError("params.bound_kind must be EE1, EstLP, or BEE");
        if (auto* p = get("params.gamma_list")) c.gamma_list = to_list("params.gamma_list", *p);
        if (c.gamma_list.empty()) c.gamma_list = {1, 2, 4, 8, 16, 32};
        if (auto* p = get("params.cap")) c.cap = to_double("params.cap", *p);
        if (auto* p = get("params.lambda")) c.lambda = to_double("params.lambda", *p);
        if (!(c.cap > 0)) throw ConfigError("params.cap must be positive");
    }

    if (c.n < 4) throw ConfigError("mesh.n must be at least 4");
    if (!(c.grading >= 1.0)) throw ConfigError("mesh.grading must be >= 1");
    if (!(c.dt > 0) || !(c.T >= c.dt)) throw ConfigError("need 0 < time.dt <= time.T");
    if (c.g.size() < 1 || c.g.size() > 3) throw ConfigError("physics.g needs 1..3 components");
    {
        double gn = 0;
        for (double x : c.g) gn += x * x;
        if (!(gn > 0)) throw ConfigError("physics.g must be nonzero");
    }
    if (c.generator != "bessel" && c.generator != "zero" && c.generator != "smooth" &&
        c.generator != "one")
        throw ConfigError("data.generator must be bessel, zero, smooth, or one");

    // resolved snapshot (defaults included) for report provenance
    auto put = [&](const std::string& k, const std::string& v) { c.resolved[k] = v; };
    auto putd = [&](const std::string& k, double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        put(k, os.str());
    };
    auto putl = [&](const std::string& k, const std::vector<double>& v) {
        std::ostringstream os;
        os.precision(17);
        for (size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
        put(k, os.str());
    };
    put("kind", c.kind);
    put("seed", std::to_string(c.seed));
    put("output_dir", c.output_dir);
    put("mesh.n", std::to_string(c.n));
    putd("mesh.grading", c.grading);
    putd("time.T", c.T);
    putd("time.dt", c.dt);
    putl("physics.g", c.g);
    put("physics.background", c.background);
    put("data.generator", c.generator);
    putd("data.amplitude", c.amplitude);
    if (c.kind == "eigenmode") putd("params.freq_tol", c.freq_tol);
    if (c.kind == "epsilon_sweep") putl("params.eps_list", c.eps_list);
    if (c.kind == "refinement") {
        std::ostringstream os;
        for (size_t i = 0; i < c.n_list.size(); ++i) os << (i ? " " : "") << c.n_list[i];
        put("params.n_list", os.str());
        putd("params.order_min", c.order_min);
    }
    if (c.kind == "picard_gamma_sweep") {
        putl("params.gamma_list", c.gamma_list);
        put("params.max_iter", std::to_string(c.max_iter));
        putd("params.tol", c.tol);
        putd("params.picard_seed", c.picard_seed);
    }
    if (c.kind == "compat_check") {
        put("params.order", std::to_string(c.order));
        putd("params.tolerance", c.tolerance);
    }
    if (c.kind == "norm_equivalence") {
        put("params.m_max", std::to_string(c.m_max));
        put("params.draws", std::to_string(c.draws));
    }
    if (c.kind == "energy_verify") {
        put("params.bound_kind", c.bound_kind);
        putl("params.gamma_list", c.gamma_list);
        putd("params.cap", c.cap);
        putd("params.lambda", c.lambda);
    }
    return c;
}

}  // namespace hangstring
