#pragma once

// Counter-based deterministic random generator (splitmix64) and the
// randomized smooth-function family used by property checks and sweep
// experiments. Draw k of a family is a low-order trigonometric sum whose
// coefficients depend only on (seed, k), so the same continuum function
// can be sampled on any mesh.

#include <cmath>
#include <cstdint>
#include <functional>

namespace hangstring {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class CounterRng {
public:
    explicit CounterRng(uint64_t seed) : seed_(seed) {}

    /// Uniform in [0,1), fully determined by (seed, counter).
    double uniform(uint64_t counter) const {
        uint64_t z = splitmix64(seed_ ^ (counter * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
        return static_cast<double>(z >> 11) * 0x1.0p-53;
    }

    /// Uniform in [-1,1).
    double symmetric(uint64_t counter) const { return 2.0 * uniform(counter) - 1.0; }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
};

/// One draw from the smooth family: u(s) = sum_k a_k cos(k pi s) + b_k sin(k pi s),
/// k = 0..modes. Analytic derivatives of any order are available, which
/// the tests use as oracles.
struct SmoothDraw {
    static constexpr int modes = 4;
    double a[modes + 1];
    double b[modes + 1];

    double eval(double s, int deriv = 0) const {
        double r = 0;
        for (int k = 0; k <= modes; ++k) {
            double w = k * M_PI, p = std::pow(w, deriv);
            // d^m cos(ws) cycles cos -> -sin -> -cos -> sin
            double phase = 0.5 * M_PI * deriv;
            r += a[k] * p * std::cos(w * s + phase);
            r += b[k] * p * std::sin(w * s + phase);
        }
        return r;
    }

    std::function<double(double)> fn(int deriv = 0) const {
        SmoothDraw d = *this;
        return [d, deriv](double s) { return d.eval(s, deriv); };
    }
};

inline SmoothDraw smooth_draw(const CounterRng& rng, uint64_t index) {
    SmoothDraw d{};
    for (int k = 0; k <= SmoothDraw::modes; ++k) {
        d.a[k] = rng.symmetric(index * 64 + 2 * k);
        d.b[k] = rng.symmetric(index * 64 + 2 * k + 1);
    }
    return d;
}

}  // namespace hangstring
