#pragma once

// Persistence: trajectory CSV (floats at 17 significant digits, enough to
// round-trip an IEEE double), JSON reports (every report embeds the full
// resolved configuration), and the background-state CSV loader.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hangstring/background.hpp"
#include "hangstring/compat.hpp"
#include "hangstring/energy.hpp"
#include "hangstring/evolution.hpp"
#include "hangstring/mesh.hpp"
#include "hangstring/string.hpp"

namespace hangstring {

using json = nlohmann::ordered_json;

/// 17 significant digits: lossless for IEEE binary64.
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

inline std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw Error("solver-failure", "cannot open for writing: " + path);
    return f;
}

}  // namespace detail

/// Columns: t, s, comp, u, v.
inline void write_trajectory_csv(const std::string& path, const Trajectory& tr) {
    auto f = detail::open_out(path);
    f << "t,s,comp,u,v\n";
    const int n = tr.mesh->n_cells;
    for (const auto& snap : tr.snapshots)
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < tr.components; ++c)
                f << fmt17(snap.t) << ',' << fmt17(tr.mesh->centers[static_cast<size_t>(i)]) << ','
                  << c << ',' << fmt17(snap.u.at(i, c)) << ',' << fmt17(snap.v.at(i, c)) << '\n';
}

/// Columns: t, s, comp, u, v, nu, nu_p, nu_l (the scalar multiplier columns
/// repeat across components of a row's (t, s)).
inline void write_trajectory_csv(const std::string& path, const StringTrajectory& st) {
    auto f = detail::open_out(path);
    f << "t,s,comp,u,v,nu,nu_p,nu_l\n";
    const Trajectory& tr = st.y;
    const int n = tr.mesh->n_cells;
    for (size_t k = 0; k < tr.snapshots.size(); ++k) {
        const auto& snap = tr.snapshots[k];
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < tr.components; ++c)
                f << fmt17(snap.t) << ',' << fmt17(tr.mesh->centers[static_cast<size_t>(i)]) << ','
                  << c << ',' << fmt17(snap.u.at(i, c)) << ',' << fmt17(snap.v.at(i, c)) << ','
                  << fmt17(st.nu[k].values[static_cast<size_t>(i)]) << ','
                  << fmt17(st.nu_p[k].values[static_cast<size_t>(i)]) << ','
                  << fmt17(st.nu_l[k].values[static_cast<size_t>(i)]) << '\n';
    }
}

inline json to_json(const CompatReport& r) {
    return json{{"order_checked", r.order_checked},
                {"tolerance", r.tolerance},
                {"residuals", r.residuals},
                {"passed", r.passed}};
}

inline json to_json(const EnergyReport& r) {
    return json{{"bound_kind", r.bound_kind},
                {"lambda", r.lambda},
                {"gamma", r.gamma},
                {"gamma_list", r.gamma_list},
                {"constants", r.constants},
                {"constant_fit", r.constant_fit},
                {"empirical_gamma1", r.empirical_gamma1},
                {"passed", r.passed},
                {"active_bound", r.active_bound}};
}

inline json to_json(const EpsSweepReport& r) {
    return json{{"eps_list", r.eps_list},
                {"max_jet_diff", r.max_jet_diff},
                {"fitted_slope", r.fitted_slope}};
}

/// Report envelope: result payload plus the full resolved configuration.
inline void write_report(const std::string& path, const std::string& kind, const json& result,
                         const std::map<std::string, std::string>& resolved_config) {
    json doc;
    doc["kind"] = kind;
    doc["result"] = result;
    json cfg = json::object();
    for (const auto& [k, v] : resolved_config) cfg[k] = v;
    doc["config"] = cfg;
    auto f = detail::open_out(path);
    f << doc.dump(2) << '\n';
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

/// Background samples from CSV with header t,s,x0,...,x{d-1},tau. The s
/// column must cover exactly the centers of the given mesh for every time
/// sample; time samples must be uniformly spaced. Spatial derivatives come
/// from the mesh stencils, time derivatives from centered differences
/// (one-sided at the ends).
inline BackgroundState load_background(const std::string& path, MeshPtr mesh,
                                       const std::array<double, 3>& g) {
    std::ifstream f(path);
    if (!f) throw Error("solver-failure", "cannot open background file: " + path);
    std::string line;
    if (!std::getline(f, line)) throw Error("solver-failure", "empty background file");
    auto header = detail::split_csv_line(line);
    if (header.size() < 4 || header[0] != "t" || header[1] != "s" || header.back() != "tau")
        throw Error("solver-failure", "background header must be t,s,x0,...,tau");
    const int dim = static_cast<int>(header.size()) - 3;

    // rows grouped by time, in file order
    std::map<double, std::vector<std::vector<double>>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw Error("solver-failure", "background row width mismatch");
        std::vector<double> vals;
        for (const auto& c : cells) vals.push_back(std::stod(c));
        rows[vals[0]].push_back(std::move(vals));
    }
    if (rows.empty()) throw Error("solver-failure", "background file has no rows");

    BackgroundState bg;
    bg.dim = dim;
    bg.g = g;
    bg.mesh = mesh;
    bg.steady = rows.size() == 1;
    const int n = mesh->n_cells;
    for (auto& [t, rws] : rows) {
        bg.times.push_back(t);
        if (static_cast<int>(rws.size()) != n)
            throw Error("invalid-mesh", "background sample does not cover the mesh");
        std::sort(rws.begin(), rws.end(),
                  [](const auto& a, const auto& b) { return a[1] < b[1]; });
        GridFn xf(mesh, dim), tf(mesh, 1);
        for (int i = 0; i < n; ++i) {
            if (std::abs(rws[static_cast<size_t>(i)][1] - mesh->centers[static_cast<size_t>(i)]) > 1e-9)
                throw Error("invalid-mesh", "background s column does not match mesh centers");
            for (int d = 0; d < dim; ++d) xf.at(i, d) = rws[static_cast<size_t>(i)][static_cast<size_t>(2 + d)];
            tf.values[static_cast<size_t>(i)] = rws[static_cast<size_t>(i)].back();
        }
        bg.x.push_back(xf);
        bg.tau.push_back(tf);
    }
    for (size_t k = 2; k < bg.times.size(); ++k) {
        double d0 = bg.times[1] - bg.times[0], dk = bg.times[k] - bg.times[k - 1];
        if (std::abs(dk - d0) > 1e-9 * std::max(1.0, std::abs(d0)))
            throw Error("invalid-series", "background time samples must be uniform");
    }
    for (size_t k = 0; k < bg.x.size(); ++k) {
        bg.xp.push_back(derivative1(bg.x[k]));
        bg.xpp.push_back(derivative1(bg.xp[k]));
        bg.xppp.push_back(derivative1(bg.xpp[k]));
        bg.taup.push_back(derivative1(bg.tau[k]));
    }
    const size_t ns = bg.x.size();
    for (size_t k = 0; k < ns; ++k) {
        GridFn xd(mesh, dim);
        if (ns >= 2) {
            double dtb = bg.times[1] - bg.times[0];
            const GridFn& a = bg.x[k == 0 ? 0 : k - 1];
            const GridFn& b = bg.x[k + 1 < ns ? k + 1 : ns - 1];
            double span = (k == 0 || k + 1 == ns) ? dtb : 2 * dtb;
            for (size_t idx = 0; idx < xd.values.size(); ++idx)
                xd.values[idx] = (b.values[idx] - a.values[idx]) / span;
        }
        bg.xdot.push_back(xd);
        bg.xdotp.push_back(derivative1(xd));
    }
    return bg;
}

}  // namespace hangstring
