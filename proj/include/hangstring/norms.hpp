#pragma once

// Discrete weighted Sobolev norms X^m / Y^m, jet norms, the averaging
// operator, and the exponentially weighted time functionals I_{gamma,t}
// and the explicit upper bounds for the dual norm S*_{gamma,t}.
//
// All spatial derivatives go through derivative()/derivative1() from the
// mesh module so that the identity
//   ||u||_{X^{m+1}}^2 = ||u||_{L^2}^2 + ||u'||_{Y^m}^2
// holds at roundoff for the discrete stencils.

#include <cmath>
#include <limits>
#include <vector>

#include "hangstring/mesh.hpp"

namespace hangstring {

/// Stack of time derivatives (u, du/dt, ..., d^l u/dt^l) at one time.
struct Jet {
    std::vector<GridFn> entries;
    int order() const { return static_cast<int>(entries.size()) - 1; }
};

struct TimeSeries {
    std::vector<double> times;   // strictly increasing, times[0] = 0
    std::vector<double> values;  // same length

    void validate() const {
        if (times.empty() || times.size() != values.size())
            throw Error("invalid-series", "empty or mismatched time series");
        if (times[0] != 0.0) throw Error("invalid-series", "time series must start at 0");
        for (size_t i = 1; i < times.size(); ++i)
            if (!(times[i] > times[i - 1]))
                throw Error("invalid-series", "times must be strictly increasing");
    }
};

namespace detail {

// sqrt( sum_i w_i s_i^{2 alpha} |u_i|^2 ), componentwise sum of squares.
inline double weighted_l2(const GridFn& u, double alpha) {
    const auto& m = *u.mesh;
    double acc = 0;
    for (int i = 0; i < m.n_cells; ++i) {
        double ss = 0;
        for (int c = 0; c < u.components; ++c) ss += u.at(i, c) * u.at(i, c);
        double w = alpha == 0.0 ? 1.0 : std::pow(m.centers[i], 2 * alpha);
        acc += m.spacings[i] * w * ss;
    }
    return std::sqrt(acc);
}

// Derivative cache: derivs[r] = D^r u, r = 0..kmax.
inline std::vector<GridFn> deriv_stack(const GridFn& u, int kmax) {
    std::vector<GridFn> d;
    d.reserve(kmax + 1);
    d.push_back(u);
    for (int r = 1; r <= kmax; ++r) d.push_back(derivative1(d.back()));
    return d;
}

inline double sq(double x) { return x * x; }

}  // namespace detail

/// X^m norm (weighted Sobolev), m <= 4.
inline double xnorm(const GridFn& u, int m) {
    if (m < 0 || m > 4) throw Error("unsupported-order", "xnorm supports m = 0..4");
    const int k = m / 2;
    const int top = m;  // highest derivative order appearing
    auto d = detail::deriv_stack(u, top);
    double acc = 0;
    for (int r = 0; r <= k; ++r) acc += detail::sq(detail::weighted_l2(d[r], 0.0));  // H^k part
    if (m % 2 == 0) {
        for (int j = 1; j <= k; ++j) acc += detail::sq(detail::weighted_l2(d[k + j], j));
    } else {
        for (int j = 1; j <= k + 1; ++j) acc += detail::sq(detail::weighted_l2(d[k + j], j - 0.5));
    }
    return std::sqrt(acc);
}

/// Y^m norm, m <= 3. Defined so that X^{m+1} splits as L^2 + Y^m of the
/// derivative when the same stencils are reused.
inline double ynorm(const GridFn& u, int m) {
    if (m < 0 || m > 3) throw Error("unsupported-order", "ynorm supports m = 0..3");
    if (m == 0) return detail::weighted_l2(u, 0.5);
    double acc = 0;
    if (m % 2 == 1) {
        const int k = (m - 1) / 2;
        auto d = detail::deriv_stack(u, 2 * k + 1);
        for (int r = 0; r <= k; ++r) acc += detail::sq(detail::weighted_l2(d[r], 0.0));
        for (int j = 1; j <= k + 1; ++j) acc += detail::sq(detail::weighted_l2(d[k + j], j));
    } else {
        const int k = (m - 2) / 2;
        auto d = detail::deriv_stack(u, 2 * k + 2);
        for (int r = 0; r <= k; ++r) acc += detail::sq(detail::weighted_l2(d[r], 0.0));
        for (int j = 1; j <= k + 2; ++j) acc += detail::sq(detail::weighted_l2(d[k + j], j - 0.5));
    }
    return std::sqrt(acc);
}

/// ||| u |||_{m,l}: root-sum-square of X^{m-j} norms of the jet entries.
inline double jet_norm(const Jet& j, int m, int l) {
    if (l > m || m - l < 0) throw Error("unsupported-order", "jet_norm needs 0 <= l <= m");
    if (j.order() < l) throw Error("insufficient-jet", "jet order below requested l");
    double acc = 0;
    for (int r = 0; r <= l; ++r) acc += detail::sq(xnorm(j.entries[r], m - r));
    return std::sqrt(acc);
}

/// ||| u |||_m^dagger: plain sum of Y^{m-j} norms.
inline double dagger_jet_norm(const Jet& j, int m) {
    if (m < 0) return 0.0;  // convention ||| . |||_{-1}^dagger = 0
    if (j.order() < m) throw Error("insufficient-jet", "jet order below requested m");
    double acc = 0;
    for (int r = 0; r <= m; ++r) acc += ynorm(j.entries[r], m - r);
    return acc;
}

/// Averaging operator (M u)(s) = s^{-1} int_0^s u, cumulative midpoint
/// quadrature. The partial cell [face_i, s_i] integrates the linear
/// reconstruction u_i + u_i' (s - s_i); the constant-value rule would be
/// only first-order accurate after division by s in the degenerate cell.
inline GridFn apply_averaging(const GridFn& u) {
    const auto& m = *u.mesh;
    GridFn du = derivative1(u);
    GridFn r(u.mesh, u.components);
    std::vector<double> cum(u.components, 0.0);  // integral over full cells below i
    for (int i = 0; i < m.n_cells; ++i) {
        double partial = m.centers[i] - m.faces[i];
        for (int c = 0; c < u.components; ++c) {
            double seg = partial * u.at(i, c) - 0.5 * partial * partial * du.at(i, c);
            r.at(i, c) = (cum[static_cast<size_t>(c)] + seg) / m.centers[i];
            cum[static_cast<size_t>(c)] += m.spacings[i] * u.at(i, c);
        }
    }
    return r;
}

namespace detail {

inline double trapz(const std::vector<double>& t, const std::vector<double>& f) {
    double acc = 0;
    for (size_t i = 1; i < t.size(); ++i)
        acc += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
    return acc;
}

}  // namespace detail

/// |f|_{L^p_gamma(0,t)} over the full series by trapezoid rule.
inline double lp_gamma(const TimeSeries& f, double gamma, double p) {
    f.validate();
    std::vector<double> g(f.values.size());
    for (size_t i = 0; i < g.size(); ++i)
        g[i] = std::pow(std::exp(-gamma * f.times[i]) * std::abs(f.values[i]), p);
    return std::pow(detail::trapz(f.times, g), 1.0 / p);
}

/// I_{gamma,t}(f) = sup e^{-gamma t'}|f| + sqrt(gamma) |f|_{L^2_gamma}.
inline double igamma(const TimeSeries& f, double gamma) {
    if (!(gamma > 0)) throw Error("invalid-gamma", "gamma must be positive");
    f.validate();
    double sup = 0;
    for (size_t i = 0; i < f.times.size(); ++i)
        sup = std::max(sup, std::exp(-gamma * f.times[i]) * std::abs(f.values[i]));
    return sup + std::sqrt(gamma) * lp_gamma(f, gamma, 2.0);
}

/// Upper bound for the dual norm S*_{gamma,t}: the smaller of the two
/// explicit bounds |f|_{L^1_gamma} and gamma^{-1/2} |f|_{L^2_gamma}.
/// The exact dual norm is never computed; reports carry which bound won.
struct SstarUpper {
    double value = 0;
    const char* active = "L1_gamma";
};

inline SstarUpper sstar_upper(const TimeSeries& f, double gamma) {
    if (!(gamma > 0)) throw Error("invalid-gamma", "gamma must be positive");
    double b1 = lp_gamma(f, gamma, 1.0);
    double b2 = lp_gamma(f, gamma, 2.0) / std::sqrt(gamma);
    if (b1 <= b2) return {b1, "L1_gamma"};
    return {b2, "L2_gamma"};
}

}  // namespace hangstring
