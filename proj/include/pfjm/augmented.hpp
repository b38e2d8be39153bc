#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pfjm/rng.hpp"
#include "pfjm/tensor.hpp"

namespace pfjm {

/// Perturbation-kernel geometry in the augmented (N+D)-dimensional space.
/// All randomness of the training forward process lives here.

struct AugmentationParams {
    std::size_t N = 1;        // flattened data dimension (L*W*3 for joint volumes)
    std::size_t D = 128;      // augmented dimension
    double sigma_data = 0.5;  // data scale for preconditioning/weighting
    double p_mean = -1.2;     // ln-sigma prior mean
    double p_std = 1.2;       // ln-sigma prior std

    void validate() const {
        if (N < 1) throw std::invalid_argument("AugmentationParams: N must be >= 1");
        if (D < 1) throw std::invalid_argument("AugmentationParams: D must be >= 1");
        if (!(sigma_data > 0)) throw std::invalid_argument("AugmentationParams: sigma_data must be > 0");
        if (!(p_std > 0)) throw std::invalid_argument("AugmentationParams: p_std must be > 0");
    }
};

/// One perturbation event. Invariants: r == sigma*sqrt(D), |v| == 1, R >= 0.
struct NoiseDraw {
    double sigma = 0.0;
    double r = 0.0;
    double R = 0.0;
    std::vector<double> v;  // unit direction, length N
};

/// r = sigma * sqrt(D): the anchor-variable scale matching noise level sigma.
inline double sigma_to_r(double sigma, std::size_t D) {
    if (sigma < 0) throw std::invalid_argument("sigma_to_r: sigma must be >= 0");
    if (D < 1) throw std::invalid_argument("sigma_to_r: D must be >= 1");
    return sigma * std::sqrt(static_cast<double>(D));
}

/// Log-normal noise-level prior: ln(sigma) ~ Normal(p_mean, p_std^2).
inline double sample_sigma(Rng& rng, const AugmentationParams& params) {
    return std::exp(params.p_mean + params.p_std * rng.normal());
}

/// Radial magnitude R with density proportional to
/// R^(N-1) / (R^2 + r^2)^((N+D)/2), sampled exactly through the change of
/// variables B = R^2/(R^2+r^2) ~ Beta(N/2, D/2).
inline double sample_radius(Rng& rng, double r, std::size_t N, std::size_t D) {
    if (!(r > 0)) throw std::invalid_argument("sample_radius: r must be > 0");
    if (D < 1) throw std::invalid_argument("sample_radius: D must be >= 1");
    double b = rng.beta(0.5 * static_cast<double>(N), 0.5 * static_cast<double>(D));
    const double eps = 1e-12;
    if (b < eps) b = eps;
    if (b > 1.0 - eps) b = 1.0 - eps;
    return r * std::sqrt(b / (1.0 - b));
}

/// Uniform direction on the unit (N-1)-sphere: v = u/|u|, u ~ Normal(0, I).
inline std::vector<double> sample_unit_direction(Rng& rng, std::size_t N) {
    if (N < 1) throw std::invalid_argument("sample_unit_direction: N must be >= 1");
    std::vector<double> v(N);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (auto& x : v) x /= norm;
    return v;
}

/// One full draw for Algorithm-style training: sigma, r, R, v.
inline NoiseDraw sample_noise(Rng& rng, const AugmentationParams& params) {
    params.validate();
    NoiseDraw d;
    d.sigma = sample_sigma(rng, params);
    d.r = sigma_to_r(d.sigma, params.D);
    d.R = sample_radius(rng, d.r, params.N, params.D);
    d.v = sample_unit_direction(rng, params.N);
    return d;
}

/// x_hat = y + R*v, reshaped to y's shape. ||x_hat - y|| == R by construction.
inline Tensor perturb(const Tensor& y, double R, const std::vector<double>& v) {
    if (R < 0) throw std::invalid_argument("perturb: R must be >= 0");
    if (v.size() != y.size())
        throw std::invalid_argument("perturb: direction length " + std::to_string(v.size()) +
                                    " != volume size " + std::to_string(y.size()));
    Tensor out = y;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += R * v[i];
    return out;
}

}  // namespace pfjm
