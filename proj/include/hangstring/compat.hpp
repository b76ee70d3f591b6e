#pragma once

// Initial-value recurrences and compatibility-condition checks. The
// recurrences build time derivatives with the center-stencil spatial
// derivatives (pointwise second order up to the boundary), not the
// stepper's flux operator: the flux form is only weakly consistent in
// the boundary cell, which would pollute the extrapolated boundary
// residuals with an O(1) defect. The string recurrence alternates
// two-point BVP solves and recurrence steps: the multiplier nu_j first,
// then the position derivative y_{j+2}.

#include <cmath>
#include <memory>
#include <vector>

#include "hangstring/background.hpp"
#include "hangstring/bvp.hpp"
#include "hangstring/evolution.hpp"
#include "hangstring/mesh.hpp"
#include "hangstring/norms.hpp"

namespace hangstring {

struct CompatReport {
    int order_checked = 0;
    double tolerance = 0;
    std::vector<double> residuals;  // |u_j(1)| per order j
    bool passed = false;
};

namespace detail {

/// One-sided second-order weights for d^r/dt^r at t=0 on a uniform grid
/// t = 0, h, 2h, ... (r = 0..3).
inline std::vector<double> onesided_weights(int r, double h) {
    switch (r) {
        case 0: return {1.0};
        case 1: return {-1.5 / h, 2.0 / h, -0.5 / h};
        case 2: {
            double h2 = h * h;
            return {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2};
        }
        case 3: {
            double h3 = 2 * h * h * h;
            return {-5.0 / h3, 18.0 / h3, -24.0 / h3, 14.0 / h3, -3.0 / h3};
        }
        default: throw Error("unsupported-order", "time derivative order must be 0..3");
    }
}

/// Coefficients whose A, Q, f are the r-th time derivatives of the given
/// ones at t = 0 (finite differences with step dt_coeff; exact zeros when
/// the coefficients are declared time-independent).
inline Coefficients coeff_time_deriv(const Coefficients& c, int r) {
    Coefficients cr = c;
    if (r == 0) return cr;
    const double h = c.dt_coeff;
    auto w = onesided_weights(r, h);
    if (c.time_independent) {
        int N = c.components;
        cr.A = [N](double, double) { return MatNN(N); };
        cr.Q = nullptr;
    } else {
        auto a0 = c.A;
        cr.A = [a0, w, h](double s, double) {
            MatNN acc = a0(s, 0.0);
            for (int p = 0; p < acc.n; ++p)
                for (int q = 0; q < acc.n; ++q) acc(p, q) *= w[0];
            for (size_t k = 1; k < w.size(); ++k) {
                MatNN ak = a0(s, static_cast<double>(k) * h);
                for (int p = 0; p < acc.n; ++p)
                    for (int q = 0; q < acc.n; ++q) acc(p, q) += w[k] * ak(p, q);
            }
            return acc;
        };
        if (c.Q) {
            auto q0 = c.Q;
            cr.Q = [q0, w, h](double s, double) {
                MatNN acc = q0(s, 0.0);
                for (int p = 0; p < acc.n; ++p)
                    for (int q = 0; q < acc.n; ++q) acc(p, q) *= w[0];
                for (size_t k = 1; k < w.size(); ++k) {
                    MatNN qk = q0(s, static_cast<double>(k) * h);
                    for (int p = 0; p < acc.n; ++p)
                        for (int q = 0; q < acc.n; ++q) acc(p, q) += w[k] * qk(p, q);
                }
                return acc;
            };
        }
    }
    return cr;
}

/// r-th time derivative of f at t = 0, sampled at centers.
inline GridFn f_time_deriv(const Coefficients& c, int r) {
    GridFn g(c.mesh, c.components);
    if (!c.f) return g;
    auto w = onesided_weights(r, c.dt_coeff);
    for (int i = 0; i < c.mesh->n_cells; ++i) {
        double s = c.mesh->centers[static_cast<size_t>(i)];
        for (size_t k = 0; k < w.size(); ++k) {
            VecN v = c.f(s, static_cast<double>(k) * c.dt_coeff);
            for (int comp = 0; comp < c.components; ++comp) g.at(i, comp) += w[k] * v[comp];
        }
    }
    return g;
}

inline long binom(int n, int k) {
    long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace detail

/// Initial values (u_0, ..., u_m) of the degenerate system from
///   u_{j+2} = sum_k binom(j,k) { ((d_t^{j-k}A)|0 u_k')' + (d_t^{j-k}Q)|0 u_k'(1) }
///             + (d_t^j f)|0.
inline Jet initial_jet_ls(const GridFn& u0, const GridFn& u1, const Coefficients& c, int m) {
    if (m < 2 || m > 4) throw Error("unsupported-order", "initial_jet_ls supports m = 2..4");
    const MeshPtr mesh = c.mesh;
    const int n = mesh->n_cells, N = c.components;

    // center samples of d_t^r A|0 (plus its s-derivative) and d_t^r Q|0
    std::vector<std::vector<MatNN>> acen, apcen, qcen;
    std::vector<bool> has_q;
    for (int r = 0; r <= m - 2; ++r) {
        Coefficients cr = detail::coeff_time_deriv(c, r);
        std::vector<MatNN> ar, qr;
        for (int i = 0; i < n; ++i) {
            double s = mesh->centers[static_cast<size_t>(i)];
            ar.push_back(cr.A(s, 0.0));
            if (cr.Q) qr.push_back(cr.Q(s, 0.0));
        }
        // entrywise s-derivative of the (smooth) coefficient samples
        std::vector<MatNN> apr(ar.size(), MatNN(N));
        for (int p = 0; p < N; ++p)
            for (int q = 0; q < N; ++q) {
                GridFn e(mesh, 1);
                for (int i = 0; i < n; ++i) e.values[static_cast<size_t>(i)] = ar[static_cast<size_t>(i)](p, q);
                GridFn de = derivative1(e);
                for (int i = 0; i < n; ++i) apr[static_cast<size_t>(i)](p, q) = de.values[static_cast<size_t>(i)];
            }
        has_q.push_back(cr.Q != nullptr);
        acen.push_back(std::move(ar));
        apcen.push_back(std::move(apr));
        qcen.push_back(std::move(qr));
    }

    Jet jet;
    jet.entries = {u0, u1};
    for (int j = 0; j <= m - 2; ++j) {
        GridFn next = detail::f_time_deriv(c, j);
        for (int k = 0; k <= j; ++k) {
            const int r = j - k;
            double b = static_cast<double>(detail::binom(j, k));
            // (A u')' = A' u' + A u'' with one-shot cubic-stencil u', u''
            auto [up, upp] = derivative12(jet.entries[static_cast<size_t>(k)]);
            for (int i = 0; i < n; ++i) {
                const MatNN& a = acen[static_cast<size_t>(r)][static_cast<size_t>(i)];
                const MatNN& ap = apcen[static_cast<size_t>(r)][static_cast<size_t>(i)];
                for (int p = 0; p < N; ++p) {
                    double v = 0;
                    for (int q = 0; q < N; ++q) v += ap(p, q) * up.at(i, q) + a(p, q) * upp.at(i, q);
                    next.at(i, p) += b * v;
                }
            }
            if (has_q[static_cast<size_t>(r)]) {
                auto tr = boundary_deriv(jet.entries[static_cast<size_t>(k)]);
                for (int i = 0; i < n; ++i) {
                    const MatNN& q = qcen[static_cast<size_t>(r)][static_cast<size_t>(i)];
                    for (int p = 0; p < N; ++p) {
                        double v = 0;
                        for (int d = 0; d < N; ++d) v += q(p, d) * tr[static_cast<size_t>(d)];
                        next.at(i, p) += b * v;
                    }
                }
            }
        }
        jet.entries.push_back(std::move(next));
    }
    return jet;
}

/// Residuals |u_j(1)| for j = 0..upto, using the artifact-wide quadratic
/// boundary extrapolation.
inline CompatReport check_compat(const Jet& jet, int upto, double tol) {
    if (jet.order() < upto) throw Error("insufficient-jet", "jet order below requested check order");
    CompatReport rep;
    rep.order_checked = upto;
    rep.tolerance = tol;
    rep.passed = true;
    for (int j = 0; j <= upto; ++j) {
        auto bv = boundary_value(jet.entries[static_cast<size_t>(j)]);
        double r = 0;
        for (double x : bv) r += x * x;
        r = std::sqrt(r);
        rep.residuals.push_back(r);
        if (r > tol) rep.passed = false;
    }
    return rep;
}

struct StringJets {
    Jet y;   // (y_0, ..., y_m)
    Jet nu;  // (nu_0, ..., nu_{m-2})
};

namespace detail {

/// r-th time derivative at t=0 of a background field given as samples on
/// a uniform time grid (identically zero for steady backgrounds, r >= 1).
inline GridFn bg_tderiv(const std::vector<GridFn>& fld, bool steady, double h, int r) {
    if (r == 0) return fld[0];
    if (steady) {
        GridFn z(fld[0].mesh, fld[0].components);
        return z;
    }
    auto w = onesided_weights(r, h);
    if (fld.size() < w.size())
        throw Error("insufficient-jet", "background has too few time samples for derivative order");
    GridFn g(fld[0].mesh, fld[0].components);
    for (size_t k = 0; k < w.size(); ++k)
        for (size_t idx = 0; idx < g.values.size(); ++idx)
            g.values[idx] += w[k] * fld[k].values[idx];
    return g;
}

inline long multinom3(int j, int j0, int j1) { return binom(j, j0) * binom(j - j0, j1); }

inline double dotc(const GridFn& a, const GridFn& b, int i) {
    double s = 0;
    for (int c = 0; c < a.components; ++c) s += a.at(i, c) * b.at(i, c);
    return s;
}

}  // namespace detail

/// Interleaved recurrences for the linearized string:
/// The multiplier step at j gives nu_j (BVP with datum -g . y_j'(1)); the
/// position step at j then gives y_{j+2}. f_derivs[r] / h_derivs[r] are
/// (d_t^r f)|0, (d_t^r h)|0 at centers; missing entries are treated as zero.
inline StringJets initial_jet_string(const GridFn& y0, const GridFn& y1,
                                     const std::vector<GridFn>& f_derivs,
                                     const std::vector<GridFn>& h_derivs,
                                     const BackgroundState& bg, int m) {
    if (m < 2 || m > 4) throw Error("unsupported-order", "initial_jet_string supports m = 2..4");
    const MeshPtr mesh = bg.mesh;
    const int n = mesh->n_cells, dim = bg.dim;
    const double hstep = bg.steady ? 1.0 : (bg.times.size() > 1 ? bg.times[1] - bg.times[0] : 1.0);

    auto tau_r = [&](int r) { return detail::bg_tderiv(bg.tau, bg.steady, hstep, r); };
    auto xp_r = [&](int r) { return detail::bg_tderiv(bg.xp, bg.steady, hstep, r); };
    auto xpp_r = [&](int r) { return detail::bg_tderiv(bg.xpp, bg.steady, hstep, r); };

    GridFn pot = detail::potential_from_background(bg, 0);

    StringJets out;
    out.y.entries = {y0, y1};

    for (int j = 0; j <= m - 2; ++j) {
        // ---- multiplier step at order j: source h_j and Neumann datum
        GridFn hj = (static_cast<size_t>(j) < h_derivs.size()) ? h_derivs[static_cast<size_t>(j)]
                                                               : GridFn::zeros(mesh, 1);
        // first sum: 2 sum_{j1+j2=j} binom (d_t^{j1+1} x') . (y_{j2+1})'
        for (int j1 = 0; j1 <= j; ++j1) {
            int j2 = j - j1;
            GridFn xdp = xp_r(j1 + 1);
            GridFn ydp = derivative1(out.y.entries[static_cast<size_t>(j2 + 1)]);
            double b = static_cast<double>(detail::binom(j, j1));
            for (int i = 0; i < n; ++i)
                hj.values[static_cast<size_t>(i)] += 2 * b * detail::dotc(xdp, ydp, i);
        }
        // second sum: -2 sum (d_t^{j0} tau)(d_t^{j1} x'') . (y_{j2})''
        for (int j0 = 0; j0 <= j; ++j0)
            for (int j1 = 0; j1 + j0 <= j; ++j1) {
                int j2 = j - j0 - j1;
                GridFn ta = tau_r(j0);
                GridFn xa = xpp_r(j1);
                GridFn ypp = derivative(out.y.entries[static_cast<size_t>(j2)], 2);
                double b = static_cast<double>(detail::multinom3(j, j0, j1));
                for (int i = 0; i < n; ++i)
                    hj.values[static_cast<size_t>(i)] -=
                        2 * b * ta.values[static_cast<size_t>(i)] * detail::dotc(xa, ypp, i);
            }
        // third sum: - sum_{j0 <= j-1} nu_{j0} (d_t^{j1} x'' . d_t^{j2} x'')
        for (int j0 = 0; j0 <= j - 1; ++j0)
            for (int j1 = 0; j1 + j0 <= j; ++j1) {
                int j2 = j - j0 - j1;
                GridFn xa = xpp_r(j1), xb = xpp_r(j2);
                const GridFn& nuj = out.nu.entries[static_cast<size_t>(j0)];
                double b = static_cast<double>(detail::multinom3(j, j0, j1));
                for (int i = 0; i < n; ++i)
                    hj.values[static_cast<size_t>(i)] -=
                        b * nuj.values[static_cast<size_t>(i)] * detail::dotc(xa, xb, i);
            }
        auto ybp = boundary_deriv(out.y.entries[static_cast<size_t>(j)]);
        double aj = 0;
        for (int d = 0; d < dim; ++d) aj -= bg.g[static_cast<size_t>(d)] * ybp[static_cast<size_t>(d)];
        out.nu.entries.push_back(solve_sturm({pot, hj, aj, {}}));

        // ---- position step at order j: y_{j+2}
        GridFn inner(mesh, dim);
        for (int j0 = 0; j0 <= j; ++j0) {
            int j1 = j - j0;
            GridFn ta = tau_r(j0);
            GridFn yp = derivative1(out.y.entries[static_cast<size_t>(j1)]);
            GridFn xa = xp_r(j1);
            const GridFn& nuj = out.nu.entries[static_cast<size_t>(j0)];
            double b = static_cast<double>(detail::binom(j, j0));
            for (int i = 0; i < n; ++i)
                for (int d = 0; d < dim; ++d)
                    inner.at(i, d) += b * (ta.values[static_cast<size_t>(i)] * yp.at(i, d) +
                                           nuj.values[static_cast<size_t>(i)] * xa.at(i, d));
        }
        GridFn yj2 = derivative1(inner);
        if (static_cast<size_t>(j) < f_derivs.size()) yj2 = yj2 + f_derivs[static_cast<size_t>(j)];
        out.y.entries.push_back(std::move(yj2));
    }
    return out;
}

}  // namespace hangstring
