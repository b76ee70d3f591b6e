#pragma once

// Unit-disc lifting v(x1, x2) = u(x1^2 + x2^2) and the radial reduction of
// the disc Sobolev norms. Everything stays one-dimensional: the radial
// nodes are r_i = sqrt(s_i), so r^2 lands exactly on the source mesh
// centers, and all integrals go back to the source mesh via s = r^2
// (r dr = ds / 2), which maps the measures exactly.

#include <cmath>
#include <vector>

#include "hangstring/mesh.hpp"
#include "hangstring/norms.hpp"

namespace hangstring {

struct RadialProfile {
    std::vector<double> r_nodes;  // sqrt(centers) of the source mesh
    std::vector<double> values;   // v(r_i) = u(s_i)
    MeshPtr source;               // the interval mesh the profile came from
};

/// v(r_i) = u(s_i) with r_i = sqrt(s_i); no interpolation.
inline RadialProfile lift_to_disc(const GridFn& u) {
    RadialProfile p;
    p.source = u.mesh;
    p.values = u.values;
    p.r_nodes.reserve(u.mesh->centers.size());
    for (double s : u.mesh->centers) p.r_nodes.push_back(std::sqrt(s));
    return p;
}

/// Cumulative H^m(D) norm of the radial profile, m <= 2:
///   ||v||^2 = 2 pi int v^2 r dr                     = pi int u^2 ds
///   |v|_1^2 = 2 pi int v_r^2 r dr                   = 4 pi int s u'^2 ds
///   |v|_2^2 = 2 pi int (v_rr^2 + (v_r / r)^2) r dr
///           = pi int [(2u' + 4 s u'')^2 + (2u')^2] ds
/// with v_r / r evaluated as 2u'(r^2), which is finite at r = 0.
inline double disc_hm_norm(const RadialProfile& v, int m) {
    if (m < 0 || m > 2) throw Error("unsupported-order", "disc_hm_norm supports m in 0..2");
    GridFn u(v.source, 1);
    u.values = v.values;

    auto sq = [](const GridFn& g) {
        GridFn r = g;
        for (double& x : r.values) x *= x;
        return r;
    };
    const double pi = M_PI;
    double total = pi * integrate_weighted(sq(u), 0.0, 1.0);
    if (m >= 1) {
        GridFn up = derivative1(u);
        total += 4.0 * pi * integrate_weighted(sq(up), 1.0, 1.0);
        if (m >= 2) {
            GridFn upp = derivative1(up);
            GridFn vrr(v.source, 1);
            for (int i = 0; i < v.source->n_cells; ++i) {
                double s = v.source->centers[static_cast<size_t>(i)];
                double t = 2.0 * up.values[static_cast<size_t>(i)] +
                           4.0 * s * upp.values[static_cast<size_t>(i)];
                vrr.values[static_cast<size_t>(i)] = t;
            }
            total += pi * (integrate_weighted(sq(vrr), 0.0, 1.0) +
                           4.0 * integrate_weighted(sq(up), 0.0, 1.0));
        }
    }
    return std::sqrt(total);
}

/// disc_hm_norm(lift_to_disc(u), m) / xnorm(u, m); scale-invariant.
inline double equivalence_ratio(const GridFn& u, int m) {
    double denom = xnorm(u, m);
    if (denom == 0.0) throw Error("undefined-ratio", "equivalence_ratio of the zero function");
    return disc_hm_norm(lift_to_disc(u), m) / denom;
}

}  // namespace hangstring
