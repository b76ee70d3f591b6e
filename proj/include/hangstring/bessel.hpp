#pragma once

// Power-series Bessel functions J0, J1 and the first zero of J0, used by
// the hanging-chain eigenmode data generator. The series converge quickly
// for the arguments needed here (|x| <= j_{0,1} ~ 2.4).

#include <cmath>

namespace hangstring {

inline double bessel_j0(double x) {
    // J0(x) = sum (-1)^k (x^2/4)^k / (k!)^2
    double q = 0.25 * x * x, term = 1.0, sum = 1.0;
    for (int k = 1; k <= 60; ++k) {
        term *= -q / (static_cast<double>(k) * k);
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

inline double bessel_j1(double x) {
    // J1(x) = (x/2) sum (-1)^k (x^2/4)^k / (k! (k+1)!)
    double q = 0.25 * x * x, term = 1.0, sum = 1.0;
    for (int k = 1; k <= 60; ++k) {
        term *= -q / (static_cast<double>(k) * (k + 1));
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return 0.5 * x * sum;
}

/// First positive zero of J0 by bisection on [2,3].
inline double bessel_j0_first_zero() {
    double lo = 2.0, hi = 3.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (bessel_j0(lo) * bessel_j0(mid) <= 0)
            hi = mid;
        else
            lo = mid;
        if (hi - lo < 1e-15) break;
    }
    return 0.5 * (lo + hi);
}

}  // namespace hangstring
