#pragma once

// Small dense and banded linear algebra used by the BVP and evolution
// solvers: Thomas algorithm, banded LU with partial pivoting, Jacobi
// eigenvalues for symmetric matrices up to 3x3, and a small Gauss solve
// for the low-rank (Woodbury) boundary coupling.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "hangstring/mesh.hpp"

namespace hangstring {

/// N x N matrix value, N <= 3. Row-major.
struct MatNN {
    int n = 1;
    std::array<double, 9> v{};
    MatNN() = default;
    explicit MatNN(int dim) : n(dim) { v.fill(0.0); }
    static MatNN identity(int dim, double scale = 1.0) {
        MatNN m(dim);
        for (int i = 0; i < dim; ++i) m(i, i) = scale;
        return m;
    }
    double& operator()(int i, int j) { return v[static_cast<size_t>(i) * n + j]; }
    double operator()(int i, int j) const { return v[static_cast<size_t>(i) * n + j]; }
};

struct VecN {
    int n = 1;
    std::array<double, 3> v{};
    VecN() = default;
    explicit VecN(int dim) : n(dim) { v.fill(0.0); }
    double& operator[](int i) { return v[static_cast<size_t>(i)]; }
    double operator[](int i) const { return v[static_cast<size_t>(i)]; }
};

inline VecN matvec(const MatNN& m, const VecN& x) {
    VecN r(m.n);
    for (int i = 0; i < m.n; ++i)
        for (int j = 0; j < m.n; ++j) r[i] += m(i, j) * x[j];
    return r;
}

namespace linalg {

/// Tridiagonal solve (Thomas, no pivoting). Intended for the M-matrix
/// systems arising from the Sturm discretizations; throws on breakdown.
inline std::vector<double> thomas(std::vector<double> lo, std::vector<double> di,
                                  std::vector<double> up, std::vector<double> rhs) {
    const size_t n = di.size();
    for (size_t i = 1; i < n; ++i) {
        if (di[i - 1] == 0.0) throw Error("solver-failure", "tridiagonal pivot breakdown");
        double m = lo[i] / di[i - 1];
        di[i] -= m * up[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    if (di[n - 1] == 0.0) throw Error("solver-failure", "tridiagonal pivot breakdown");
    std::vector<double> x(n);
    x[n - 1] = rhs[n - 1] / di[n - 1];
    for (size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - up[i] * x[i + 1]) / di[i];
    return x;
}

/// Banded matrix in LAPACK-like storage with room for pivot fill-in.
/// ab(kl + ku + i - j, j) holds A(i, j) for max(0,j-ku) <= i <= min(n-1,j+kl).
class Banded {
public:
    Banded(int n, int kl, int ku)
        : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1),
          ab_(static_cast<size_t>(ldab_) * n, 0.0) {}

    int size() const { return n_; }

    double& at(int i, int j) { return ab_[static_cast<size_t>(j) * ldab_ + (kl_ + ku_ + i - j)]; }
    void add(int i, int j, double val) { at(i, j) += val; }

    /// In-place LU with partial pivoting (fill-in confined to kl extra
    /// superdiagonals). Throws solver-failure on a zero pivot.
    void factor() {
        piv_.resize(n_);
        const int kv = kl_ + ku_;  // superdiagonals incl. fill-in
        for (int j = 0; j < n_; ++j) {
            int km = std::min(kl_, n_ - 1 - j);
            // pivot search in column j, rows j..j+km
            int ip = j;
            double pmax = std::abs(entry(j, j));
            for (int i = j + 1; i <= j + km; ++i) {
                double a = std::abs(entry(i, j));
                if (a > pmax) { pmax = a; ip = i; }
            }
            piv_[j] = ip;
            if (pmax == 0.0) throw Error("solver-failure", "banded LU zero pivot");
            if (ip != j) {
                int jmax = std::min(n_ - 1, j + kv);
                for (int c = j; c <= jmax; ++c) std::swap(entry(j, c), entry(ip, c));
            }
            double pivot = entry(j, j);
            for (int i = j + 1; i <= j + km; ++i) {
                double m = entry(i, j) / pivot;
                entry(i, j) = m;
                int jmax = std::min(n_ - 1, j + kv);
                for (int c = j + 1; c <= jmax; ++c) entry(i, c) -= m * entry(j, c);
            }
        }
        factored_ = true;
    }

    void solve(std::vector<double>& b) const {
        const int kv = kl_ + ku_;
        for (int j = 0; j < n_; ++j) {
            if (piv_[j] != j) std::swap(b[j], b[piv_[j]]);
            int km = std::min(kl_, n_ - 1 - j);
            for (int i = j + 1; i <= j + km; ++i) b[i] -= centry(i, j) * b[j];
        }
        for (int j = n_ - 1; j >= 0; --j) {
            int jmax = std::min(n_ - 1, j + kv);
            for (int c = j + 1; c <= jmax; ++c) b[j] -= centry(j, c) * b[c];
            b[j] /= centry(j, j);
        }
    }

    bool factored() const { return factored_; }

private:
    // Access valid for |i-j| within the fill-in-extended band.
    double& entry(int i, int j) { return ab_[static_cast<size_t>(j) * ldab_ + (kl_ + ku_ + i - j)]; }
    double centry(int i, int j) const {
        return ab_[static_cast<size_t>(j) * ldab_ + (kl_ + ku_ + i - j)];
    }

    int n_, kl_, ku_, ldab_;
    std::vector<double> ab_;
    std::vector<int> piv_;
    bool factored_ = false;
};

/// Dense Gauss elimination with partial pivoting for tiny systems
/// (Woodbury capacitance matrices, N <= 3).
inline std::vector<double> gauss_small(std::vector<double> a, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int j = 0; j < n; ++j) {
        int ip = j;
        for (int i = j + 1; i < n; ++i)
            if (std::abs(a[i * n + j]) > std::abs(a[ip * n + j])) ip = i;
        if (a[ip * n + j] == 0.0) throw Error("solver-failure", "singular capacitance matrix");
        if (ip != j) {
            for (int c = 0; c < n; ++c) std::swap(a[j * n + c], a[ip * n + c]);
            std::swap(b[j], b[ip]);
        }
        for (int i = j + 1; i < n; ++i) {
            double m = a[i * n + j] / a[j * n + j];
            for (int c = j; c < n; ++c) a[i * n + c] -= m * a[j * n + c];
            b[i] -= m * b[j];
        }
    }
    for (int j = n - 1; j >= 0; --j) {
        for (int c = j + 1; c < n; ++c) b[j] -= a[j * n + c] * b[c];
        b[j] /= a[j * n + j];
    }
    return b;
}

/// Eigenvalues of a symmetric matrix up to 3x3 by cyclic Jacobi sweeps.
inline std::array<double, 3> sym_eigenvalues(MatNN m) {
    const int n = m.n;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (m(p, q) == 0.0) continue;
                double theta = 0.5 * std::atan2(2 * m(p, q), m(q, q) - m(p, p));
                double c = std::cos(theta), s = std::sin(theta);
                for (int k = 0; k < n; ++k) {
                    double mk_p = m(k, p), mk_q = m(k, q);
                    m(k, p) = c * mk_p - s * mk_q;
                    m(k, q) = s * mk_p + c * mk_q;
                }
                for (int k = 0; k < n; ++k) {
                    double mp_k = m(p, k), mq_k = m(q, k);
                    m(p, k) = c * mp_k - s * mq_k;
                    m(q, k) = s * mp_k + c * mq_k;
                }
            }
    }
    std::array<double, 3> ev{0, 0, 0};
    for (int i = 0; i < n; ++i) ev[static_cast<size_t>(i)] = m(i, i);
    std::sort(ev.begin(), ev.begin() + n);
    return ev;
}

/// Singular values of an N x N matrix (N <= 3): sqrt of eigenvalues of A^T A.
inline std::array<double, 3> singular_values(const MatNN& a) {
    MatNN ata(a.n);
    for (int i = 0; i < a.n; ++i)
        for (int j = 0; j < a.n; ++j) {
            double s = 0;
            for (int k = 0; k < a.n; ++k) s += a(k, i) * a(k, j);
            ata(i, j) = s;
        }
    auto ev = sym_eigenvalues(ata);
    std::array<double, 3> sv{0, 0, 0};
    for (int i = 0; i < a.n; ++i)
        sv[static_cast<size_t>(i)] = std::sqrt(std::max(0.0, ev[static_cast<size_t>(a.n - 1 - i)]));
    return sv;  // descending
}

}  // namespace linalg
}  // namespace hangstring
