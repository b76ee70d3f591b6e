#pragma once

// Tridiagonal finite-volume solvers for the two-point boundary value
// problems -nu'' + c nu = h on (0,1) with nu(0) = 0 (Dirichlet at the
// left face, half-cell stencil) and nu'(1) = a (Neumann via the given
// flux at the right face). The divergence-form variant keeps h_II at
// faces so its boundary contribution cancels against the Neumann datum
// exactly, mirroring the integration-by-parts structure.

#include <cmath>
#include <optional>
#include <vector>

#include "hangstring/background.hpp"
#include "hangstring/linalg.hpp"
#include "hangstring/mesh.hpp"
#include "hangstring/norms.hpp"

namespace hangstring {

struct SturmProblem {
    GridFn c;                     // potential, >= 0 pointwise (|x''|^2)
    GridFn h;                     // source at centers
    double a = 0;                 // Neumann datum at s=1
    std::optional<GridFn> h_II;   // divergence-form source (solve_sturm_div)
};

namespace detail {

// Interpolate center values to all faces: linear between neighbours,
// quadratic extrapolation at the boundary faces.
inline std::vector<double> centers_to_faces(const GridFn& u) {
    const auto& c = u.mesh->centers;
    const auto& f = u.mesh->faces;
    const int n = u.mesh->n_cells;
    std::vector<double> r(static_cast<size_t>(n) + 1);
    {
        auto w = lagrange3_value(c[0], c[1], c[2], f[0]);
        r[0] = w[0] * u.values[0] + w[1] * u.values[1] + w[2] * u.values[2];
    }
    for (int j = 1; j < n; ++j) {
        double t = (f[j] - c[static_cast<size_t>(j - 1)]) /
                   (c[static_cast<size_t>(j)] - c[static_cast<size_t>(j - 1)]);
        r[static_cast<size_t>(j)] = (1 - t) * u.values[static_cast<size_t>(j - 1)] +
                                    t * u.values[static_cast<size_t>(j)];
    }
    {
        auto w = lagrange3_value(c[n - 3], c[n - 2], c[n - 1], f[n]);
        r[static_cast<size_t>(n)] = w[0] * u.values[static_cast<size_t>(n - 3)] +
                                    w[1] * u.values[static_cast<size_t>(n - 2)] +
                                    w[2] * u.values[static_cast<size_t>(n - 1)];
    }
    return r;
}

inline GridFn solve_sturm_core(const GridFn& c, const std::vector<double>& rhs_in, double a) {
    const auto& m = *c.mesh;
    const int n = m.n_cells;
    std::vector<double> lo(n, 0), di(n, 0), up(n, 0), rhs = rhs_in;
    for (int i = 0; i < n; ++i) {
        double w = m.spacings[static_cast<size_t>(i)];
        double dl = (i == 0) ? m.centers[0]  // half cell to the Dirichlet face
                             : m.centers[static_cast<size_t>(i)] - m.centers[static_cast<size_t>(i - 1)];
        di[static_cast<size_t>(i)] = c.values[static_cast<size_t>(i)] + 1.0 / (dl * w);
        if (i > 0) lo[static_cast<size_t>(i)] = -1.0 / (dl * w);
        if (i < n - 1) {
            double dr = m.centers[static_cast<size_t>(i + 1)] - m.centers[static_cast<size_t>(i)];
            di[static_cast<size_t>(i)] += 1.0 / (dr * w);
            up[static_cast<size_t>(i)] = -1.0 / (dr * w);
        } else {
            rhs[static_cast<size_t>(i)] += a / w;  // prescribed flux at s=1
        }
    }
    auto sol = linalg::thomas(lo, di, up, rhs);

    // residual check of the discrete system
    double rmax = 0, scale = std::abs(a);
    for (int i = 0; i < n; ++i) {
        double r = di[static_cast<size_t>(i)] * sol[static_cast<size_t>(i)] - rhs[static_cast<size_t>(i)];
        if (i > 0) r += lo[static_cast<size_t>(i)] * sol[static_cast<size_t>(i - 1)];
        if (i < n - 1) r += up[static_cast<size_t>(i)] * sol[static_cast<size_t>(i + 1)];
        rmax = std::max(rmax, std::abs(r));
        scale = std::max(scale, std::abs(rhs[static_cast<size_t>(i)]));
        if (!std::isfinite(sol[static_cast<size_t>(i)]))
            throw Error("solver-failure", "non-finite Sturm solution");
    }
    if (rmax > 1e-12 * std::max(1.0, scale) * n)
        throw Error("solver-failure", "Sturm residual too large");

    GridFn g(c.mesh, 1);
    g.values = std::move(sol);
    return g;
}

}  // namespace detail

/// -nu'' + c nu = h, nu(0) = 0, nu'(1) = a.
inline GridFn solve_sturm(const SturmProblem& p) {
    if (p.h_II) throw Error("solver-failure", "solve_sturm does not take h_II; use solve_sturm_div");
    return detail::solve_sturm_core(p.c, p.h.values, p.a);
}

/// -nu'' + c nu = h - h_II', nu(0) = 0, nu'(1) = a + h_II(1).
/// h_II' is a face difference of h_II interpolated to faces.
inline GridFn solve_sturm_div(const SturmProblem& p) {
    if (!p.h_II) throw Error("solver-failure", "solve_sturm_div needs h_II");
    const auto& m = *p.c.mesh;
    auto hf = detail::centers_to_faces(*p.h_II);
    std::vector<double> rhs = p.h.values;
    for (int i = 0; i < m.n_cells; ++i)
        rhs[static_cast<size_t>(i)] -= (hf[static_cast<size_t>(i + 1)] - hf[static_cast<size_t>(i)]) /
                                       m.spacings[static_cast<size_t>(i)];
    return detail::solve_sturm_core(p.c, rhs, p.a + hf.back());
}

namespace detail {

/// |x''|^2 at centers from the background's cached derivative.
inline GridFn potential_from_background(const BackgroundState& bg, int ti) {
    const GridFn& xpp = bg.xpp_at(ti);
    GridFn c(bg.mesh, 1);
    for (int i = 0; i < bg.mesh->n_cells; ++i) {
        double ss = 0;
        for (int d = 0; d < bg.dim; ++d) ss += xpp.at(i, d) * xpp.at(i, d);
        c.values[static_cast<size_t>(i)] = ss;
    }
    return c;
}

}  // namespace detail

/// -phi'' + |x''|^2 phi = 0, phi(0) = 0, phi'(1) = 1.
inline GridFn solve_phi(const BackgroundState& bg, int ti) {
    SturmProblem p{detail::potential_from_background(bg, ti), GridFn::zeros(bg.mesh, 1), 1.0, {}};
    return solve_sturm(p);
}

/// Lower-order part nu_l: source 2 xdot' . ydot' - 2 (x'' . y'') tau + h,
/// Neumann datum -2 xdot'(1) . ydot(1) + 2 (x''(1) . y'(1)) tau(1).
inline GridFn solve_nul(const BackgroundState& bg, const Jet& y, const GridFn& h, int ti) {
    if (y.order() < 1) throw Error("insufficient-jet", "solve_nul needs (y, ydot)");
    const GridFn& xdotp = bg.xdotp_at(ti);
    const GridFn& xpp = bg.xpp_at(ti);
    const GridFn& tau = bg.tau_at(ti);
    GridFn yp = derivative1(y.entries[0]);
    GridFn ypp = derivative1(yp);
    GridFn ydotp = derivative1(y.entries[1]);

    GridFn src(bg.mesh, 1);
    for (int i = 0; i < bg.mesh->n_cells; ++i) {
        double t1 = 0, t2 = 0;
        for (int d = 0; d < bg.dim; ++d) {
            t1 += xdotp.at(i, d) * ydotp.at(i, d);
            t2 += xpp.at(i, d) * ypp.at(i, d);
        }
        src.values[static_cast<size_t>(i)] =
            2 * t1 - 2 * t2 * tau.values[static_cast<size_t>(i)] + h.values[static_cast<size_t>(i)];
    }
    auto xdotp1 = boundary_value(xdotp);
    auto xpp1 = boundary_value(xpp);
    auto ydot1 = boundary_value(y.entries[1]);
    auto yp1 = boundary_value(yp);
    double tau1 = boundary_value(tau)[0];
    double a = 0;
    for (int d = 0; d < bg.dim; ++d)
        a += -2 * xdotp1[static_cast<size_t>(d)] * ydot1[static_cast<size_t>(d)] +
             2 * xpp1[static_cast<size_t>(d)] * yp1[static_cast<size_t>(d)] * tau1;
    SturmProblem p{detail::potential_from_background(bg, ti), src, a, {}};
    return solve_sturm(p);
}

/// nu = nu_p + nu_l with nu_p(s) = -((g + 2 tau x'')(1) . y'(1)) phi(s).
inline GridFn assemble_nu(const BackgroundState& bg, const GridFn& phi,
                          const std::vector<double>& y_boundary_slope, const GridFn& nul, int ti) {
    auto xpp1 = boundary_value(bg.xpp_at(ti));
    double tau1 = boundary_value(bg.tau_at(ti))[0];
    double coeff = 0;
    for (int d = 0; d < bg.dim; ++d)
        coeff += (bg.g[static_cast<size_t>(d)] + 2 * tau1 * xpp1[static_cast<size_t>(d)]) *
                 y_boundary_slope[static_cast<size_t>(d)];
    GridFn nu = nul;
    for (int i = 0; i < bg.mesh->n_cells; ++i)
        nu.values[static_cast<size_t>(i)] -= coeff * phi.values[static_cast<size_t>(i)];
    return nu;
}

}  // namespace hangstring
