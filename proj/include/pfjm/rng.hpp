#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace pfjm {

/// Deterministic random stream over mt19937_64 with self-contained
/// distribution transforms, so two runs with the same seed (and the same
/// binary) produce bit-identical draws. One Rng must not be shared
/// mutably across concurrent callers; give each worker its own stream.
///
/// Transforms used:
///   uniform  -- 53-bit mantissa from the raw 64-bit word, in [0,1)
///   normal   -- Box-Muller pair, second value cached
///   gamma    -- Marsaglia-Tsang squeeze (alpha >= 1), with the
///               boost gamma(alpha+1) * U^(1/alpha) for alpha < 1
///   beta     -- ratio of two gamma draws
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return (engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1); rejects exact zeros.
    double uniform_pos() {
        double u;
        do { u = uniform(); } while (u <= 0.0);
        return u;
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double mag = std::sqrt(-2.0 * std::log(u1));
        double ang = 2.0 * M_PI * u2;
        spare_ = mag * std::sin(ang);
        have_spare_ = true;
        return mag * std::cos(ang);
    }

    /// Gamma(alpha, 1), alpha > 0.
    double gamma(double alpha) {
        if (!(alpha > 0.0)) throw std::invalid_argument("Rng::gamma: alpha must be > 0");
        if (alpha < 1.0) {
            double u = uniform_pos();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    /// Beta(a, b) via two gamma draws.
    double beta(double a, double b) {
        double ga = gamma(a);
        double gb = gamma(b);
        return ga / (ga + gb);
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pfjm
