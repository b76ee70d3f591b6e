#pragma once

// Background state (x, tau) for the linearized hanging string: sampled
// position and tension fields with cached spatial/temporal derivatives.
// Either analytic-in-time (steady straight state) or loaded from a
// (mesh x time grid) sample set; derivatives are computed once at
// construction and never re-derived per step.

#include <array>
#include <cmath>
#include <vector>

#include "hangstring/mesh.hpp"

namespace hangstring {

struct BackgroundState {
    int dim = 2;
    std::array<double, 3> g{0, -1, 0};
    MeshPtr mesh;
    std::vector<double> times;  // sample times; a single entry means steady

    // Per-sample center fields. For a steady background each vector has
    // one element reused for every t.
    std::vector<GridFn> x, xp, xpp, xppp;     // position and s-derivatives
    std::vector<GridFn> xdot, xdotp;          // time derivative and its s-derivative
    std::vector<GridFn> tau, taup;            // tension and s-derivative
    bool steady = false;

    double gnorm() const {
        return std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    }

    int n_samples() const { return static_cast<int>(tau.size()); }

    /// Sample index clamped for steady backgrounds.
    int idx(int ti) const { return steady ? 0 : ti; }

    const GridFn& x_at(int ti) const { return x[static_cast<size_t>(idx(ti))]; }
    const GridFn& xp_at(int ti) const { return xp[static_cast<size_t>(idx(ti))]; }
    const GridFn& xpp_at(int ti) const { return xpp[static_cast<size_t>(idx(ti))]; }
    const GridFn& xdot_at(int ti) const { return xdot[static_cast<size_t>(idx(ti))]; }
    const GridFn& xdotp_at(int ti) const { return xdotp[static_cast<size_t>(idx(ti))]; }
    const GridFn& tau_at(int ti) const { return tau[static_cast<size_t>(idx(ti))]; }

    /// Tension at an arbitrary coordinate (used to sample A = tau Id at
    /// faces). Anchored at tau(0) = 0; piecewise linear through the
    /// centers; quadratic extrapolation at s = 1.
    double tau_value(double s, int ti) const {
        const GridFn& tf = tau_at(ti);
        const auto& c = mesh->centers;
        const int n = mesh->n_cells;
        if (s <= 0.0) return 0.0;
        if (s <= c[0]) return tf.values[0] * (s / c[0]);
        if (s >= c[static_cast<size_t>(n - 1)]) {
            auto w = detail::lagrange3_value(c[n - 3], c[n - 2], c[n - 1], s);
            return w[0] * tf.values[static_cast<size_t>(n - 3)] +
                   w[1] * tf.values[static_cast<size_t>(n - 2)] +
                   w[2] * tf.values[static_cast<size_t>(n - 1)];
        }
        // binary search for the bracketing centers
        int lo = 0, hi = n - 1;
        while (hi - lo > 1) {
            int mid = (lo + hi) / 2;
            (c[static_cast<size_t>(mid)] <= s ? lo : hi) = mid;
        }
        double t = (s - c[static_cast<size_t>(lo)]) /
                   (c[static_cast<size_t>(hi)] - c[static_cast<size_t>(lo)]);
        return (1 - t) * tf.values[static_cast<size_t>(lo)] + t * tf.values[static_cast<size_t>(hi)];
    }

    /// Nearest sample index for a continuous time (steady: always 0).
    int sample_index(double t) const {
        if (steady || times.size() < 2) return 0;
        double dtb = times[1] - times[0];
        int k = static_cast<int>(std::lround(t / dtb));
        return std::clamp(k, 0, n_samples() - 1);
    }

    struct Validation {
        bool tau_bounds_ok = true;
        bool anchored_ok = true;       // tau(0)=0, x(1)=0
        double worst_inextensibility = 0;  // max | |x'| - 1 |
        double m0_fit = 1;             // smallest M0 with tau/s in [1/M0, M0]
    };

    /// Machine-checkable form of the coefficient assumptions: tau(0)=0,
    /// x(1)=0, tau(s)/s within [1/M0, M0] at centers, |x'| = 1 reported.
    Validation validate(double m0) const {
        Validation v;
        for (int k = 0; k < n_samples(); ++k) {
            const GridFn& tf = tau[static_cast<size_t>(k)];
            const GridFn& xf = x[static_cast<size_t>(k)];
            const GridFn& xpf = xp[static_cast<size_t>(k)];
            for (int i = 0; i < mesh->n_cells; ++i) {
                double ratio = tf.values[static_cast<size_t>(i)] / mesh->centers[i];
                v.m0_fit = std::max({v.m0_fit, ratio, ratio > 0 ? 1.0 / ratio : 1e300});
                if (ratio < 1.0 / m0 || ratio > m0) v.tau_bounds_ok = false;
                double xn = 0;
                for (int c = 0; c < dim; ++c) xn += xpf.at(i, c) * xpf.at(i, c);
                v.worst_inextensibility =
                    std::max(v.worst_inextensibility, std::abs(std::sqrt(xn) - 1.0));
            }
            auto xb = boundary_value(xf);
            double xbn = 0;
            for (int c = 0; c < dim; ++c) xbn += xb[static_cast<size_t>(c)] * xb[static_cast<size_t>(c)];
            if (std::sqrt(xbn) > 1e-10) v.anchored_ok = false;
        }
        return v;
    }
};

/// Steady hanging state: x(s) = (1-s) g/|g|, tau(s) = |g| s. Exact solution
/// of the nonlinear system, used as the primary test bed.
inline BackgroundState make_straight_background(const std::array<double, 3>& g, MeshPtr mesh,
                                                double T, double /*dt*/, int dim = 2) {
    BackgroundState bg;
    bg.dim = dim;
    bg.g = g;
    bg.mesh = std::move(mesh);
    bg.steady = true;
    bg.times = {0.0, T};
    double gn = bg.gnorm();
    if (!(gn > 0)) throw Error("invalid-gravity", "|g| must be positive");

    const int n = bg.mesh->n_cells;
    GridFn xf(bg.mesh, dim), xpf(bg.mesh, dim), zf(bg.mesh, dim), tf(bg.mesh, 1), tpf(bg.mesh, 1);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < dim; ++c) {
            xf.at(i, c) = (1.0 - bg.mesh->centers[i]) * g[static_cast<size_t>(c)] / gn;
            xpf.at(i, c) = -g[static_cast<size_t>(c)] / gn;
        }
        tf.values[static_cast<size_t>(i)] = gn * bg.mesh->centers[i];
        tpf.values[static_cast<size_t>(i)] = gn;
    }
    bg.x = {xf};
    bg.xp = {xpf};
    bg.xpp = {zf};
    bg.xppp = {zf};
    bg.xdot = {zf};
    bg.xdotp = {zf};
    bg.tau = {tf};
    bg.taup = {tpf};
    return bg;
}

}  // namespace hangstring
