#pragma once

// Time integration of the degenerate hyperbolic system
//   u_tt = (A u')' + Q u'(1,t) + eps s u_t' + f,   u(1,t) = 0,
// with no condition at the degenerate end s=0. Implicit midpoint on the
// first-order system (u, v); the spatial operator is in flux form with a
// structurally zero flux at the s=0 face and a Dirichlet ghost at s=1.
//
// Discrete structure the tests rely on:
//  * (L u, v)_W = -a(u, v) exactly (summation by parts with the face
//    conventions below), so the quadratic energy
//    1/2 (v,v)_W + 1/2 a(u,u) is conserved by implicit midpoint up to
//    linear-solve roundoff when A is time-independent, Q=0, f=0, eps=0.
//  * eps s v' is discretized as the average of the face values of s v'
//    using the same face gradients as the flux. With that choice
//    a(v, Rv) = -1/2 (G_n v)^2 telescopes exactly, which makes the
//    second-order energy functional non-increasing step by step.
//  * The boundary coupling Q u'(1,t) is folded into the implicit solve
//    as a rank-N correction of the banded factorization (Woodbury).

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "hangstring/linalg.hpp"
#include "hangstring/mesh.hpp"
#include "hangstring/norms.hpp"

namespace hangstring {

/// Time-dependent coefficient fields of the system. A is sampled at face
/// coordinates (so A(0,t) = 0 is honored exactly at the degenerate face),
/// Q and f at cell centers.
struct Coefficients {
    MeshPtr mesh;
    int components = 1;
    std::function<MatNN(double s, double t)> A;  // required, symmetric
    std::function<MatNN(double s, double t)> Q;  // null means Q = 0
    std::function<VecN(double s, double t)> f;   // null means f = 0
    bool time_independent = true;  // A, Q do not depend on t (f still may)
    double M0 = 4.0;               // eigenvalue bounds for A(s,t)/s
    double M1 = 4.0;
    double dt_coeff = 1e-3;        // FD step for time derivatives of coefficients
};

/// A = s Id, Q = 0, f = 0 (the hanging-chain normal-mode test bed).
inline Coefficients make_chain_coeffs(MeshPtr mesh, int components = 1, double scale = 1.0) {
    Coefficients c;
    c.mesh = std::move(mesh);
    c.components = components;
    int N = components;
    c.A = [N, scale](double s, double) { return MatNN::identity(N, scale * s); };
    return c;
}

struct CoeffValidation {
    bool symmetric_ok = true;
    bool bounds_ok = true;
    double worst_asymmetry = 0;
    double eig_min_ratio = 1e300;  // min over samples of lambda_min(A/s)
    double eig_max_ratio = 0;
};

/// Machine-checkable form of the coercivity assumption
/// M0^{-1} s Id <= A(s,t) <= M0 s Id, checked at cell centers.
inline CoeffValidation validate_coefficients(const Coefficients& c,
                                             const std::vector<double>& times) {
    CoeffValidation v;
    for (double t : times) {
        for (int i = 0; i < c.mesh->n_cells; ++i) {
            double s = c.mesh->centers[static_cast<size_t>(i)];
            MatNN a = c.A(s, t);
            for (int p = 0; p < a.n; ++p)
                for (int q = p + 1; q < a.n; ++q)
                    v.worst_asymmetry = std::max(v.worst_asymmetry, std::abs(a(p, q) - a(q, p)));
            MatNN scaled = a;
            for (int p = 0; p < a.n; ++p)
                for (int q = 0; q < a.n; ++q) scaled(p, q) = a(p, q) / s;
            auto ev = linalg::sym_eigenvalues(scaled);
            v.eig_min_ratio = std::min(v.eig_min_ratio, ev[0]);
            v.eig_max_ratio = std::max(v.eig_max_ratio, ev[static_cast<size_t>(a.n - 1)]);
        }
    }
    if (v.worst_asymmetry > 1e-12) v.symmetric_ok = false;
    if (v.eig_min_ratio < 1.0 / c.M0 || v.eig_max_ratio > c.M0) v.bounds_ok = false;
    return v;
}

struct EvolState {
    double t = 0;
    GridFn u, v;
    std::vector<double> trace;  // u'(1,t), one entry per component
};

struct Trajectory {
    std::vector<EvolState> snapshots;
    double dt = 0;
    double eps = 0;
    int components = 1;
    MeshPtr mesh;

    int n_steps() const { return static_cast<int>(snapshots.size()) - 1; }
};

namespace detail {

/// Frozen-time spatial operators and the factored implicit-midpoint
/// system for one stage time. Flat layout: x[i*N + c].
struct StepOp {
    MeshPtr mesh;
    int N = 1;
    double dt = 0, eps = 0;
    std::vector<MatNN> aface;          // A at faces, index 1..n used
    std::vector<MatNN> qc;             // Q at centers; empty when Q = 0
    std::array<double, 3> bw{};        // boundary-derivative weights (last 3 cells)
    linalg::Banded m;                  // banded part, factored
    std::vector<std::vector<double>> ycols;  // Mband^{-1} U, N columns
    std::vector<double> cap;           // capacitance I - B Y, N x N row-major

    /// build_solver = false skips the implicit-system assembly and
    /// factorization; only the operator applications are available then
    /// (used by the energy functionals).
    StepOp(const Coefficients& c, double tmid, double dt_, double eps_, bool build_solver = true)
        : mesh(c.mesh), N(c.components), dt(dt_), eps(eps_),
          m(c.mesh->n_cells * c.components, 2 * c.components - 1, 2 * c.components - 1) {
        const auto& msh = *mesh;
        const int n = msh.n_cells;
        aface.resize(static_cast<size_t>(n) + 1, MatNN(N));
        for (int j = 1; j <= n; ++j) aface[static_cast<size_t>(j)] = c.A(msh.faces[static_cast<size_t>(j)], tmid);
        if (c.Q) {
            qc.resize(static_cast<size_t>(n), MatNN(N));
            for (int i = 0; i < n; ++i) qc[static_cast<size_t>(i)] = c.Q(msh.centers[static_cast<size_t>(i)], tmid);
        }
        {
            const auto& s = msh.centers;
            bw = lagrange3_deriv(s[static_cast<size_t>(n - 3)], s[static_cast<size_t>(n - 2)],
                                 s[static_cast<size_t>(n - 1)], 1.0);
        }
        if (build_solver) assemble();
    }

    double hgap(int j) const {  // distance between the values feeding face gradient j
        const auto& cc = mesh->centers;
        if (j == mesh->n_cells) return 1.0 - cc[static_cast<size_t>(j - 1)];
        return cc[static_cast<size_t>(j)] - cc[static_cast<size_t>(j - 1)];
    }

    int id(int i, int comp) const { return i * N + comp; }

    /// Face gradients G_j(x) for all faces 1..n (G_n uses the Dirichlet
    /// ghost value 0 at s=1).
    void gradients(const std::vector<double>& x, std::vector<double>& g) const {
        const int n = mesh->n_cells;
        g.assign(static_cast<size_t>(n + 1) * N, 0.0);
        for (int j = 1; j <= n; ++j) {
            double h = hgap(j);
            for (int comp = 0; comp < N; ++comp) {
                double hi = (j == n) ? 0.0 : x[static_cast<size_t>(id(j, comp))];
                g[static_cast<size_t>(j * N + comp)] =
                    (hi - x[static_cast<size_t>(id(j - 1, comp))]) / h;
            }
        }
    }

    /// Flux part only: ((A x')')_i = (F_{i+1} - F_i)/delta_i, F_j = A_j G_j,
    /// F_0 = 0 structurally.
    std::vector<double> apply_flux(const std::vector<double>& x) const {
        const int n = mesh->n_cells;
        std::vector<double> g;
        gradients(x, g);
        std::vector<double> r(static_cast<size_t>(n) * N, 0.0);
        std::vector<double> flo(N, 0.0), fhi(N);
        for (int i = 0; i < n; ++i) {
            const MatNN& a = aface[static_cast<size_t>(i + 1)];
            for (int comp = 0; comp < N; ++comp) {
                double s = 0;
                for (int d = 0; d < N; ++d) s += a(comp, d) * g[static_cast<size_t>((i + 1) * N + d)];
                fhi[static_cast<size_t>(comp)] = s;
            }
            double inv = 1.0 / mesh->spacings[static_cast<size_t>(i)];
            for (int comp = 0; comp < N; ++comp)
                r[static_cast<size_t>(id(i, comp))] =
                    (fhi[static_cast<size_t>(comp)] - flo[static_cast<size_t>(comp)]) * inv;
            flo = fhi;
        }
        return r;
    }

    /// a(x, y) = sum_j hgap(j) (A_j G_j(x)) . G_j(y) — the quadratic form
    /// dual to the flux operator: (L x, y)_W = -a(x, y) exactly.
    double face_form(const std::vector<double>& x, const std::vector<double>& y) const {
        const int n = mesh->n_cells;
        std::vector<double> gx, gy;
        gradients(x, gx);
        gradients(y, gy);
        double acc = 0;
        for (int j = 1; j <= n; ++j) {
            const MatNN& a = aface[static_cast<size_t>(j)];
            for (int comp = 0; comp < N; ++comp) {
                double s = 0;
                for (int d = 0; d < N; ++d) s += a(comp, d) * gx[static_cast<size_t>(j * N + d)];
                acc += hgap(j) * s * gy[static_cast<size_t>(j * N + comp)];
            }
        }
        return acc;
    }

    /// Cell-weighted inner product (x, y)_W = sum_i delta_i x_i . y_i.
    double dot_w(const std::vector<double>& x, const std::vector<double>& y) const {
        double acc = 0;
        for (int i = 0; i < mesh->n_cells; ++i)
            for (int comp = 0; comp < N; ++comp)
                acc += mesh->spacings[static_cast<size_t>(i)] *
                       x[static_cast<size_t>(id(i, comp))] * y[static_cast<size_t>(id(i, comp))];
        return acc;
    }

    /// (L x)_i = (F_{i+1} - F_i)/delta_i + Q_i x'(1).
    std::vector<double> apply_l(const std::vector<double>& x) const {
        const int n = mesh->n_cells;
        std::vector<double> r = apply_flux(x);
        if (!qc.empty()) {
            std::vector<double> tr = btrace(x);
            for (int i = 0; i < n; ++i)
                for (int comp = 0; comp < N; ++comp) {
                    double s = 0;
                    for (int d = 0; d < N; ++d) s += qc[static_cast<size_t>(i)](comp, d) * tr[static_cast<size_t>(d)];
                    r[static_cast<size_t>(id(i, comp))] += s;
                }
        }
        return r;
    }

    /// (R x)_i = average of the face values of s x' over the two cell faces.
    std::vector<double> apply_r(const std::vector<double>& x) const {
        const int n = mesh->n_cells;
        std::vector<double> g;
        gradients(x, g);
        std::vector<double> r(static_cast<size_t>(n) * N, 0.0);
        for (int i = 0; i < n; ++i)
            for (int comp = 0; comp < N; ++comp) {
                double lo = (i == 0) ? 0.0
                                     : mesh->faces[static_cast<size_t>(i)] *
                                           g[static_cast<size_t>(i * N + comp)];
                double hi = mesh->faces[static_cast<size_t>(i + 1)] *
                            g[static_cast<size_t>((i + 1) * N + comp)];
                r[static_cast<size_t>(id(i, comp))] = 0.5 * (lo + hi);
            }
        return r;
    }

    /// u'(1) by the artifact-wide quadratic boundary extrapolation.
    std::vector<double> btrace(const std::vector<double>& x) const {
        const int n = mesh->n_cells;
        std::vector<double> tr(static_cast<size_t>(N), 0.0);
        for (int r = 0; r < 3; ++r)
            for (int comp = 0; comp < N; ++comp)
                tr[static_cast<size_t>(comp)] +=
                    bw[static_cast<size_t>(r)] * x[static_cast<size_t>(id(n - 3 + r, comp))];
        return tr;
    }

    /// Solve (I - (dt^2/4)L - (dt/2) eps R) w = rhs via the banded
    /// factorization plus a Woodbury correction for the Q coupling.
    std::vector<double> solve(std::vector<double> rhs) const {
        m.solve(rhs);
        if (qc.empty()) return rhs;
        std::vector<double> by = btrace(rhs);
        std::vector<double> corr = linalg::gauss_small(cap, by);
        for (int d = 0; d < N; ++d)
            for (size_t k = 0; k < rhs.size(); ++k)
                rhs[k] += ycols[static_cast<size_t>(d)][k] * corr[static_cast<size_t>(d)];
        return rhs;
    }

private:
    void assemble() {
        const int n = mesh->n_cells;
        const double cl = -0.25 * dt * dt;   // weight of L0 in the system matrix
        const double cr = -0.5 * dt * eps;   // weight of R
        for (int i = 0; i < n * N; ++i) m.add(i, i, 1.0);

        // flux form of (A u')': face j couples cells j-1 and j
        for (int j = 1; j <= n; ++j) {
            const MatNN& a = aface[static_cast<size_t>(j)];
            double h = hgap(j);
            for (int comp = 0; comp < N; ++comp)
                for (int d = 0; d < N; ++d) {
                    double coef = a(comp, d) / h;
                    // row j-1 sees +F_j / delta_{j-1}
                    double wlo = cl * coef / mesh->spacings[static_cast<size_t>(j - 1)];
                    if (j < n) m.add(id(j - 1, comp), id(j, d), wlo);
                    m.add(id(j - 1, comp), id(j - 1, d), -wlo);
                    // row j sees -F_j / delta_j
                    if (j <= n - 1) {
                        double whi = -cl * coef / mesh->spacings[static_cast<size_t>(j)];
                        m.add(id(j, comp), id(j, d), whi);
                        m.add(id(j, comp), id(j - 1, d), -whi);
                    }
                }
        }

        // eps s v': per-component, faces i and i+1 of each cell
        if (eps != 0.0) {
            for (int i = 0; i < n; ++i) {
                for (int comp = 0; comp < N; ++comp) {
                    if (i >= 1) {
                        double w = cr * 0.5 * mesh->faces[static_cast<size_t>(i)] / hgap(i);
                        m.add(id(i, comp), id(i, comp), w);
                        m.add(id(i, comp), id(i - 1, comp), -w);
                    }
                    double w = cr * 0.5 * mesh->faces[static_cast<size_t>(i + 1)] / hgap(i + 1);
                    if (i + 1 <= n - 1) {
                        m.add(id(i, comp), id(i + 1, comp), w);
                        m.add(id(i, comp), id(i, comp), -w);
                    } else {
                        m.add(id(i, comp), id(i, comp), -w);  // ghost value 0 at s=1
                    }
                }
            }
        }

        m.factor();

        if (!qc.empty()) {
            // M_full = M_band - U B with U = (dt^2/4) Q stacked at centers
            // and B the boundary-derivative extraction.
            ycols.assign(static_cast<size_t>(N), {});
            for (int d = 0; d < N; ++d) {
                std::vector<double> col(static_cast<size_t>(n) * N, 0.0);
                for (int i = 0; i < n; ++i)
                    for (int comp = 0; comp < N; ++comp)
                        col[static_cast<size_t>(id(i, comp))] =
                            0.25 * dt * dt * qc[static_cast<size_t>(i)](comp, d);
                m.solve(col);
                ycols[static_cast<size_t>(d)] = std::move(col);
            }
            cap.assign(static_cast<size_t>(N) * N, 0.0);
            for (int r = 0; r < N; ++r) {
                std::vector<double> byc = btrace(ycols[static_cast<size_t>(r)]);
                for (int d = 0; d < N; ++d)
                    cap[static_cast<size_t>(d) * N + r] =
                        (d == r ? 1.0 : 0.0) - byc[static_cast<size_t>(d)];
            }
        }
    }
};

inline std::vector<double> flatten(const GridFn& g) { return g.values; }

inline GridFn unflatten(const MeshPtr& mesh, int ncomp, std::vector<double> v) {
    GridFn g(mesh, ncomp);
    g.values = std::move(v);
    return g;
}

}  // namespace detail

/// Integrate the system from (u0, u1) to time T with step dt.
/// extra_forcing, when given, is evaluated at stage midpoints and added
/// to f (used by the successive-approximation scheme for lagged terms).
inline Trajectory solve_ibvp(const Coefficients& c, const GridFn& u0, const GridFn& u1,
                             double eps, double T, double dt,
                             const std::function<GridFn(double)>& extra_forcing = nullptr) {
    if (!(dt > 0) || dt > T) throw Error("step-failure", "need 0 < dt <= T");
    if (eps < 0 || eps > 1) throw Error("step-failure", "eps must be in [0,1]");
    if (u0.components != c.components || u1.components != c.components)
        throw Error("step-failure", "data component count does not match coefficients");
    for (const GridFn* d : {&u0, &u1}) {
        auto bv = boundary_value(*d);
        for (double x : bv)
            if (std::abs(x) > 1e-8)
                throw Error("step-failure", "initial data violate u(1) = 0 compatibility");
    }
    if (dt > 0.5) std::fprintf(stderr, "warning: dt = %g > 0.5 degrades accuracy\n", dt);

    const int n = c.mesh->n_cells, N = c.components;
    const int nsteps = static_cast<int>(std::llround(T / dt));

    Trajectory traj;
    traj.dt = dt;
    traj.eps = eps;
    traj.components = N;
    traj.mesh = c.mesh;
    traj.snapshots.reserve(static_cast<size_t>(nsteps) + 1);

    std::vector<double> u = detail::flatten(u0), v = detail::flatten(u1);
    auto record = [&](double t) {
        EvolState st;
        st.t = t;
        st.u = detail::unflatten(c.mesh, N, u);
        st.v = detail::unflatten(c.mesh, N, v);
        st.trace = boundary_deriv(st.u);
        traj.snapshots.push_back(std::move(st));
    };
    record(0.0);

    std::unique_ptr<detail::StepOp> frozen;
    if (c.time_independent) frozen = std::make_unique<detail::StepOp>(c, 0.5 * dt, dt, eps);

    for (int k = 0; k < nsteps; ++k) {
        double t = k * dt, tmid = t + 0.5 * dt;
        try {
            std::unique_ptr<detail::StepOp> scratch;
            const detail::StepOp* opp = frozen.get();
            if (!opp) {
                scratch = std::make_unique<detail::StepOp>(c, tmid, dt, eps);
                opp = scratch.get();
            }

            // rhs = v + (dt/2) (L u + f(tmid) + extra(tmid))
            std::vector<double> rhs = opp->apply_l(u);
            if (c.f) {
                for (int i = 0; i < n; ++i) {
                    VecN fv = c.f(c.mesh->centers[static_cast<size_t>(i)], tmid);
                    for (int comp = 0; comp < N; ++comp)
                        rhs[static_cast<size_t>(i * N + comp)] += fv[comp];
                }
            }
            if (extra_forcing) {
                GridFn ef = extra_forcing(tmid);
                for (size_t idx = 0; idx < rhs.size(); ++idx) rhs[idx] += ef.values[idx];
            }
            for (size_t idx = 0; idx < rhs.size(); ++idx)
                rhs[idx] = v[idx] + 0.5 * dt * rhs[idx];

            std::vector<double> w = opp->solve(std::move(rhs));
            for (size_t idx = 0; idx < u.size(); ++idx) {
                u[idx] += dt * w[idx];
                v[idx] = 2.0 * w[idx] - v[idx];
            }
        } catch (const Error& e) {
            if (e.kind() == "step-failure") throw;
            throw Error("step-failure", std::string(e.what()) + " at t = " + std::to_string(t + dt));
        }
        record((k + 1) * dt);
    }
    return traj;
}

/// Boundary-trace series t -> u'(1,t) for one component.
inline TimeSeries trace_series(const Trajectory& traj, int comp = 0) {
    if (traj.snapshots.empty()) throw Error("step-failure", "empty trajectory");
    TimeSeries s;
    for (const auto& st : traj.snapshots) {
        s.times.push_back(st.t);
        s.values.push_back(st.trace[static_cast<size_t>(comp)]);
    }
    return s;
}

/// Jet (u, u_t, ..., d_t^l u) at snapshot k, with orders >= 2 recovered by
/// second-order finite differences of the stored velocity.
inline Jet jet_from_trajectory(const Trajectory& traj, int k, int l) {
    const int m = static_cast<int>(traj.snapshots.size());
    if (l > 3) throw Error("unsupported-order", "jet_from_trajectory supports l <= 3");
    if (l >= 2 && m < 3) throw Error("insufficient-jet", "trajectory too short for time differences");
    const double dt = traj.dt;
    Jet j;
    j.entries.push_back(traj.snapshots[static_cast<size_t>(k)].u);
    if (l >= 1) j.entries.push_back(traj.snapshots[static_cast<size_t>(k)].v);
    auto vat = [&](int i) -> const GridFn& { return traj.snapshots[static_cast<size_t>(i)].v; };
    if (l >= 2) {
        GridFn a(traj.mesh, traj.components);
        if (k == 0)
            a = (1.0 / (2 * dt)) * ((-3.0) * vat(0) + 4.0 * vat(1) - vat(2));
        else if (k == m - 1)
            a = (1.0 / (2 * dt)) * (3.0 * vat(m - 1) - 4.0 * vat(m - 2) + vat(m - 3));
        else
            a = (1.0 / (2 * dt)) * (vat(k + 1) - vat(k - 1));
        j.entries.push_back(std::move(a));
    }
    if (l >= 3) {
        if (m < 4) throw Error("insufficient-jet", "trajectory too short for third time derivative");
        int kk = std::clamp(k, 1, m - 3);
        GridFn a = (1.0 / (dt * dt)) * (vat(kk + 1) - 2.0 * vat(kk) + vat(kk - 1));
        j.entries.push_back(std::move(a));
    }
    return j;
}

inline GridFn operator*(const GridFn& a, double c) { return c * a; }

struct EpsSweepReport {
    std::vector<double> eps_list;
    std::vector<double> max_jet_diff;  // max_t ||| u^eps - u^0 |||_2 per eps
    double fitted_slope = 0;           // log-log slope of diff vs eps
};

namespace detail {

inline double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0) || !(y[i] > 0)) continue;
        double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
        ++n;
    }
    if (n < 2) return 0;
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

/// Solve for each eps in a decreasing list and report max_t jet-norm
/// differences against the eps = 0 solution, with the fitted rate in eps.
inline EpsSweepReport epsilon_sweep(const Coefficients& c, const GridFn& u0, const GridFn& u1,
                                    std::vector<double> eps_list, double T, double dt) {
    for (size_t i = 1; i < eps_list.size(); ++i)
        if (!(eps_list[i] < eps_list[i - 1]))
            throw Error("step-failure", "eps_list must be strictly decreasing");
    EpsSweepReport rep;
    rep.eps_list = eps_list;
    if (eps_list.empty()) return rep;

    Trajectory ref = solve_ibvp(c, u0, u1, 0.0, T, dt);
    for (double eps : eps_list) {
        if (eps == 0.0) {
            rep.max_jet_diff.push_back(0.0);
            continue;
        }
        Trajectory tr = solve_ibvp(c, u0, u1, eps, T, dt);
        double worst = 0;
        for (size_t k = 0; k < tr.snapshots.size(); ++k) {
            Jet ja = jet_from_trajectory(tr, static_cast<int>(k), 2);
            Jet jb = jet_from_trajectory(ref, static_cast<int>(k), 2);
            Jet d;
            for (size_t r = 0; r < ja.entries.size(); ++r)
                d.entries.push_back(ja.entries[r] - jb.entries[r]);
            worst = std::max(worst, jet_norm(d, 2, 2));
        }
        rep.max_jet_diff.push_back(worst);
    }
    std::vector<double> xs, ys;
    for (size_t i = 0; i < eps_list.size(); ++i)
        if (eps_list[i] > 0 && rep.max_jet_diff[i] > 0) {
            xs.push_back(eps_list[i]);
            ys.push_back(rep.max_jet_diff[i]);
        }
    rep.fitted_slope = detail::fit_loglog_slope(xs, ys);
    return rep;
}

}  // namespace hangstring
