#pragma once

// Cell-centered discretization of [0,1] with a flux face at s=0.
// The degenerate end s=0 carries no boundary condition; all quadrature
// points (cell centers) are strictly positive so weights s^alpha are
// never evaluated at zero.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hangstring {

/// Error with a machine-readable kind tag ("invalid-mesh", "solver-failure", ...).
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

struct Mesh {
    int n_cells = 0;
    double grading = 1.0;
    std::vector<double> faces;     // n_cells + 1, faces[0] = 0, faces[n] = 1
    std::vector<double> centers;   // n_cells, midpoints of faces
    std::vector<double> spacings;  // n_cells, face differences
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// faces[i] = (i/n)^grading; grading > 1 concentrates cells near s=0.
inline MeshPtr make_mesh(int n, double grading = 1.0) {
    if (n < 4)
        throw Error("invalid-mesh", "need at least 4 cells, got " + std::to_string(n));
    if (grading < 1.0)
        throw Error("invalid-mesh", "grading exponent must be >= 1");
    auto m = std::make_shared<Mesh>();
    m->n_cells = n;
    m->grading = grading;
    m->faces.resize(n + 1);
    m->centers.resize(n);
    m->spacings.resize(n);
    for (int i = 0; i <= n; ++i)
        m->faces[i] = std::pow(double(i) / n, grading);
    m->faces[0] = 0.0;
    m->faces[n] = 1.0;
    for (int i = 0; i < n; ++i) {
        m->centers[i] = 0.5 * (m->faces[i] + m->faces[i + 1]);
        m->spacings[i] = m->faces[i + 1] - m->faces[i];
    }
    return m;
}

/// Vector-valued function sampled at cell centers. Storage is cell-major:
/// values[i*components + c].
struct GridFn {
    MeshPtr mesh;
    int components = 1;
    std::vector<double> values;

    GridFn() = default;
    GridFn(MeshPtr m, int ncomp)
        : mesh(std::move(m)), components(ncomp),
          values(static_cast<size_t>(mesh->n_cells) * ncomp, 0.0) {}

    static GridFn zeros(MeshPtr m, int ncomp = 1) { return GridFn(std::move(m), ncomp); }

    /// Sample a scalar function at cell centers.
    static GridFn sample(const MeshPtr& m, const std::function<double(double)>& f) {
        GridFn g(m, 1);
        for (int i = 0; i < m->n_cells; ++i) g.values[i] = f(m->centers[i]);
        return g;
    }

    int n() const { return mesh->n_cells; }
    double& at(int i, int c = 0) { return values[static_cast<size_t>(i) * components + c]; }
    double at(int i, int c = 0) const { return values[static_cast<size_t>(i) * components + c]; }

    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    /// Extract one component as a scalar GridFn.
    GridFn component(int c) const {
        GridFn g(mesh, 1);
        for (int i = 0; i < n(); ++i) g.values[i] = at(i, c);
        return g;
    }
};

inline void check_same_mesh(const GridFn& a, const GridFn& b) {
    if (a.mesh != b.mesh && (a.mesh->n_cells != b.mesh->n_cells))
        throw Error("invalid-mesh", "grid functions on different meshes");
}

inline GridFn operator+(const GridFn& a, const GridFn& b) {
    check_same_mesh(a, b);
    GridFn r = a;
    for (size_t i = 0; i < r.values.size(); ++i) r.values[i] += b.values[i];
    return r;
}

inline GridFn operator-(const GridFn& a, const GridFn& b) {
    check_same_mesh(a, b);
    GridFn r = a;
    for (size_t i = 0; i < r.values.size(); ++i) r.values[i] -= b.values[i];
    return r;
}

inline GridFn operator*(double c, const GridFn& a) {
    GridFn r = a;
    for (double& v : r.values) v *= c;
    return r;
}

namespace detail {

/// Derivative weights of the quadratic through (x0,x1,x2) evaluated at xe.
inline std::array<double, 3> lagrange3_deriv(double x0, double x1, double x2, double xe) {
    return {
        (2 * xe - x1 - x2) / ((x0 - x1) * (x0 - x2)),
        (2 * xe - x0 - x2) / ((x1 - x0) * (x1 - x2)),
        (2 * xe - x0 - x1) / ((x2 - x0) * (x2 - x1)),
    };
}

/// Value weights of the quadratic through (x0,x1,x2) evaluated at xe.
inline std::array<double, 3> lagrange3_value(double x0, double x1, double x2, double xe) {
    return {
        (xe - x1) * (xe - x2) / ((x0 - x1) * (x0 - x2)),
        (xe - x0) * (xe - x2) / ((x1 - x0) * (x1 - x2)),
        (xe - x0) * (xe - x1) / ((x2 - x0) * (x2 - x1)),
    };
}

}  // namespace detail

/// First spatial derivative at cell centers: 3-point Lagrange stencils,
/// centered in the interior, one-sided at both ends. Exact for quadratics
/// on any mesh.
inline GridFn derivative1(const GridFn& u) {
    const auto& s = u.mesh->centers;
    const int n = u.n(), N = u.components;
    if (n < 3) throw Error("invalid-mesh", "derivative needs at least 3 cells");
    GridFn d(u.mesh, N);
    for (int i = 0; i < n; ++i) {
        int i0 = std::clamp(i - 1, 0, n - 3);
        auto w = detail::lagrange3_deriv(s[i0], s[i0 + 1], s[i0 + 2], s[i]);
        for (int c = 0; c < N; ++c)
            d.at(i, c) = w[0] * u.at(i0, c) + w[1] * u.at(i0 + 1, c) + w[2] * u.at(i0 + 2, c);
    }
    return d;
}

/// First and second derivative at the centers from a single cubic
/// (4-point) Lagrange stencil. Unlike repeating the 3-point stencil,
/// whose stencil switches near the ends degrade the composition to first
/// order, the one-shot cubic keeps both derivatives second order
/// pointwise up to the boundary; compatibility residuals rely on this.
inline std::pair<GridFn, GridFn> derivative12(const GridFn& u) {
    const auto& s = u.mesh->centers;
    const int n = u.n(), N = u.components;
    if (n < 4) throw Error("invalid-mesh", "derivative12 needs at least 4 cells");
    GridFn d1(u.mesh, N), d2(u.mesh, N);
    for (int i = 0; i < n; ++i) {
        int i0 = std::clamp(i - 1, 0, n - 4);
        double xe = s[i];
        for (int c = 0; c < N; ++c) {
            double v1 = 0, v2 = 0;
            for (int k = 0; k < 4; ++k) {
                double xk = s[i0 + k], den = 1;
                double o[3];
                int m = 0;
                for (int j = 0; j < 4; ++j)
                    if (j != k) {
                        o[m++] = s[i0 + j];
                        den *= xk - s[i0 + j];
                    }
                double w1 = ((xe - o[1]) * (xe - o[2]) + (xe - o[0]) * (xe - o[2]) +
                             (xe - o[0]) * (xe - o[1])) / den;
                double w2 = 2 * ((xe - o[0]) + (xe - o[1]) + (xe - o[2])) / den;
                v1 += w1 * u.at(i0 + k, c);
                v2 += w2 * u.at(i0 + k, c);
            }
            d1.at(i, c) = v1;
            d2.at(i, c) = v2;
        }
    }
    return {std::move(d1), std::move(d2)};
}

/// k-th spatial derivative, k <= 4, by repeated application of the
/// first-derivative stencil. Using one operator everywhere keeps the
/// discrete norm identity ||u||_{X^{m+1}}^2 = ||u||^2 + ||u'||_{Y^m}^2 exact.
inline GridFn derivative(const GridFn& u, int k) {
    if (k < 1 || k > 4) throw Error("unsupported-order", "derivative order must be 1..4");
    if (u.n() < k + 2) throw Error("invalid-mesh", "mesh too coarse for derivative order");
    GridFn d = derivative1(u);
    for (int j = 1; j < k; ++j) d = derivative1(d);
    return d;
}

/// || s^alpha u ||_{L^p} by midpoint quadrature at cell centers.
/// p = infinity returns max over centers of s^alpha |u|.
inline double integrate_weighted(const GridFn& u, double alpha, double p) {
    if (alpha < 0) throw Error("invalid-weight", "alpha must be >= 0");
    if (p < 1) throw Error("invalid-weight", "p must be in [1,inf]");
    if (u.components != 1)
        throw Error("invalid-weight", "integrate_weighted expects a scalar grid function");
    const auto& m = *u.mesh;
    if (std::isinf(p)) {
        double r = 0;
        for (int i = 0; i < m.n_cells; ++i)
            r = std::max(r, std::pow(m.centers[i], alpha) * std::abs(u.values[i]));
        return r;
    }
    double acc = 0;
    for (int i = 0; i < m.n_cells; ++i)
        acc += m.spacings[i] * std::pow(std::pow(m.centers[i], alpha) * std::abs(u.values[i]), p);
    return std::pow(acc, 1.0 / p);
}

/// One-sided second-order derivative at s=1 (quadratic extrapolation from
/// the last three centers). This is the single boundary convention used
/// artifact-wide for traces and compatibility residuals.
inline std::vector<double> boundary_deriv(const GridFn& u) {
    const int n = u.n(), N = u.components;
    if (n < 3) throw Error("invalid-mesh", "boundary_deriv needs at least 3 cells");
    const auto& s = u.mesh->centers;
    auto w = detail::lagrange3_deriv(s[n - 3], s[n - 2], s[n - 1], 1.0);
    std::vector<double> r(N, 0.0);
    for (int c = 0; c < N; ++c)
        r[c] = w[0] * u.at(n - 3, c) + w[1] * u.at(n - 2, c) + w[2] * u.at(n - 1, c);
    return r;
}

/// Quadratically extrapolated value at s=1 from the last three centers.
inline std::vector<double> boundary_value(const GridFn& u) {
    const int n = u.n(), N = u.components;
    if (n < 3) throw Error("invalid-mesh", "boundary_value needs at least 3 cells");
    const auto& s = u.mesh->centers;
    auto w = detail::lagrange3_value(s[n - 3], s[n - 2], s[n - 1], 1.0);
    std::vector<double> r(N, 0.0);
    for (int c = 0; c < N; ++c)
        r[c] = w[0] * u.at(n - 3, c) + w[1] * u.at(n - 2, c) + w[2] * u.at(n - 1, c);
    return r;
}

}  // namespace hangstring
