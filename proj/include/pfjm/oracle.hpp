#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfjm/rng.hpp"

namespace pfjm {

/// Exact Poisson-field reference: the augmented electric field of a finite
/// charge set evaluated by direct summation, and field-line integration of
/// the anchored ODE dx/dr = e_x / e_r. Used to validate the learned model
/// and the sampler, never as a training signal.

struct ChargeSet {
    std::vector<std::vector<double>> charges;  // M points of length N on the z=0 hyperplane
    std::vector<double> weights;               // nonnegative, summing to 1

    std::size_t count() const { return charges.size(); }
    std::size_t dim() const { return charges.empty() ? 0 : charges.front().size(); }

    void validate() const {
        if (charges.empty()) throw std::invalid_argument("ChargeSet: empty");
        if (weights.size() != charges.size())
            throw std::invalid_argument("ChargeSet: weight count mismatch");
        const std::size_t n = charges.front().size();
        double sum = 0.0;
        for (std::size_t i = 0; i < charges.size(); ++i) {
            if (charges[i].size() != n)
                throw std::invalid_argument("ChargeSet: inconsistent charge dimension");
            if (weights[i] < 0) throw std::invalid_argument("ChargeSet: negative weight");
            sum += weights[i];
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("ChargeSet: weights must sum to 1");
    }

    static ChargeSet uniform(std::vector<std::vector<double>> points) {
        ChargeSet cs;
        cs.weights.assign(points.size(), 1.0 / static_cast<double>(points.size()));
        cs.charges = std::move(points);
        return cs;
    }
};

/// Field components up to a common positive factor exp(log_scale). Only the
/// ratio e_x/e_r enters the ODE, so the scale (and the unit-sphere surface
/// area prefactor) never needs to be materialized.
struct FieldValue {
    std::vector<double> e_x;
    double e_r = 0.0;
    double log_scale = 0.0;
};

/// Per-charge contributions combined in the log domain:
/// log-magnitude L_i = ln w_i - (N+D)/2 * ln(|x-y_i|^2 + r^2),
/// then e_x = sum exp(L_i - m) (x - y_i), e_r = r * sum exp(L_i - m).
inline FieldValue field(const ChargeSet& charges, const std::vector<double>& x, double r,
                        std::size_t D) {
    // Weight normalization cancels in e_x/e_r, so field accepts any positive
    // total weight; the strict sum-to-1 check lives in ChargeSet::validate.
    if (charges.charges.empty()) throw std::invalid_argument("field: empty charge set");
    if (charges.weights.size() != charges.charges.size())
        throw std::invalid_argument("field: weight count mismatch");
    if (!(r > 0)) throw std::invalid_argument("field: r must be > 0");
    const std::size_t n = charges.dim();
    if (x.size() != n) throw std::invalid_argument("field: point dimension mismatch");

    const double half_power = 0.5 * static_cast<double>(n + D);
    std::vector<double> logmag(charges.count());
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < charges.count(); ++i) {
        double d2 = r * r;
        for (std::size_t k = 0; k < n; ++k) {
            double diff = x[k] - charges.charges[i][k];
            d2 += diff * diff;
        }
        double lw = charges.weights[i] > 0 ? std::log(charges.weights[i])
                                           : -std::numeric_limits<double>::infinity();
        logmag[i] = lw - half_power * std::log(d2);
        if (logmag[i] > m) m = logmag[i];
    }

    FieldValue out;
    out.e_x.assign(n, 0.0);
    out.log_scale = m;
    for (std::size_t i = 0; i < charges.count(); ++i) {
        double s = std::exp(logmag[i] - m);
        if (s == 0.0) continue;
        for (std::size_t k = 0; k < n; ++k)
            out.e_x[k] += s * (x[k] - charges.charges[i][k]);
        out.e_r += s;
    }
    out.e_r *= r;
    return out;
}

/// dx/dr = e_x / e_r.
inline std::vector<double> ode_rhs(const ChargeSet& charges, const std::vector<double>& x,
                                   double r, std::size_t D) {
    FieldValue f = field(charges, x, r, D);
    std::vector<double> out(f.e_x.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = f.e_x[k] / f.e_r;
    return out;
}

inline constexpr double kOracleRMin = 1e-3;

/// Backward field-line integration from r_start down to max(r_end, r_min),
/// fourth-order Runge-Kutta stepping uniformly in ln r (field lines vary on
/// multiplicative r scales). Aborts with the step index on non-finite state.
inline std::vector<double> integrate_field_line(const ChargeSet& charges,
                                                const std::vector<double>& x0, double r_start,
                                                double r_end, std::size_t steps, std::size_t D) {
    if (!(r_start > 0)) throw std::invalid_argument("integrate_field_line: r_start must be > 0");
    if (r_end < 0 || r_end >= r_start)
        throw std::invalid_argument("integrate_field_line: need r_start > r_end >= 0");
    if (steps < 1) throw std::invalid_argument("integrate_field_line: steps must be >= 1");

    const double r_lo = std::max(r_end, kOracleRMin);
    const double s0 = std::log(r_start);
    const double s1 = std::log(r_lo);
    const double h = (s1 - s0) / static_cast<double>(steps);
    const std::size_t n = x0.size();

    // In s = ln r: dx/ds = r * ode_rhs(x, r).
    auto rhs = [&](const std::vector<double>& x, double s) {
        double r = std::exp(s);
        std::vector<double> g = ode_rhs(charges, x, r, D);
        for (auto& v : g) v *= r;
        return g;
    };

    std::vector<double> x = x0;
    for (std::size_t step = 0; step < steps; ++step) {
        double s = s0 + h * static_cast<double>(step);
        std::vector<double> k1 = rhs(x, s);
        std::vector<double> xt(n);
        for (std::size_t k = 0; k < n; ++k) xt[k] = x[k] + 0.5 * h * k1[k];
        std::vector<double> k2 = rhs(xt, s + 0.5 * h);
        for (std::size_t k = 0; k < n; ++k) xt[k] = x[k] + 0.5 * h * k2[k];
        std::vector<double> k3 = rhs(xt, s + 0.5 * h);
        for (std::size_t k = 0; k < n; ++k) xt[k] = x[k] + h * k3[k];
        std::vector<double> k4 = rhs(xt, s + h);
        for (std::size_t k = 0; k < n; ++k) {
            x[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
            if (!std::isfinite(x[k]))
                throw std::runtime_error("integrate_field_line: non-finite state at step " +
                                         std::to_string(step));
        }
    }
    return x;
}

/// Gaussian far-field stand-in for the r = r_max hyper-cylinder prior:
/// x ~ Normal(0, (r_max^2 / D) I_N).
inline std::vector<double> sample_prior(Rng& rng, double r_max, std::size_t N, std::size_t D) {
    if (!(r_max > 0)) throw std::invalid_argument("sample_prior: r_max must be > 0");
    double scale = r_max / std::sqrt(static_cast<double>(D));
    std::vector<double> x(N);
    for (auto& v : x) v = scale * rng.normal();
    return x;
}

}  // namespace pfjm
