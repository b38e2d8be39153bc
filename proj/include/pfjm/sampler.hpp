#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfjm/model.hpp"
#include "pfjm/phantom.hpp"
#include "pfjm/rng.hpp"
#include "pfjm/tensor.hpp"

namespace pfjm {

enum class InitMode { condition, condition_plus_noise };

/// Decreasing noise-level sequence t(0) = sigma_max > ... > t(T) = 0 plus
/// the per-step condition-refinement weight w.
struct SamplerSchedule {
    std::size_t T = 10;
    std::vector<double> t;  // T+1 values
    double w = 0.1;
    double sigma_min = 0.002, sigma_max = 80.0, rho = 7.0;
    InitMode init_mode = InitMode::condition;

    void validate() const {
        if (T < 1 || t.size() != T + 1) throw std::invalid_argument("SamplerSchedule: bad t");
        if (t.front() != sigma_max || t.back() != 0.0)
            throw std::invalid_argument("SamplerSchedule: endpoints must be sigma_max and 0");
        for (std::size_t i = 0; i + 1 < t.size(); ++i)
            if (!(t[i] > t[i + 1]))
                throw std::invalid_argument("SamplerSchedule: t must be strictly decreasing");
        if (w < 0 || w > 1) throw std::invalid_argument("SamplerSchedule: w must be in [0,1]");
    }
};

/// Geometric-polynomial noise schedule:
/// t(n) = (sigma_max^(1/rho) + n/(T-1) * (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho
/// for n < T, and t(T) = 0. T = 1 degenerates to {sigma_max, 0}.
inline SamplerSchedule build_schedule(std::size_t T, double sigma_min, double sigma_max,
                                      double rho) {
    if (T < 1) throw std::invalid_argument("build_schedule: T must be >= 1");
    if (!(sigma_min > 0) || !(sigma_min < sigma_max))
        throw std::invalid_argument("build_schedule: need 0 < sigma_min < sigma_max");
    if (!(rho >= 1)) throw std::invalid_argument("build_schedule: rho must be >= 1");
    SamplerSchedule s;
    s.T = T;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.rho = rho;
    s.t.resize(T + 1);
    double a = std::pow(sigma_max, 1.0 / rho);
    double b = std::pow(sigma_min, 1.0 / rho);
    for (std::size_t n = 0; n < T; ++n) {
        double frac = (T == 1) ? 0.0 : static_cast<double>(n) / static_cast<double>(T - 1);
        s.t[n] = std::pow(a + frac * (b - a), rho);
    }
    s.t[0] = sigma_max;  // exact endpoint, not pow(pow(sigma_max,1/rho),rho)
    s.t[T] = 0.0;
    return s;
}

/// Generative-direction refinement: (1-w) x + w c, elementwise.
inline Tensor refine_with_condition(const Tensor& x, const Tensor& c, double w) {
    if (!x.same_shape(c)) throw std::invalid_argument("refine_with_condition: shape mismatch");
    if (w < 0 || w > 1) throw std::invalid_argument("refine_with_condition: w must be in [0,1]");
    return lerp(x, c, w);
}

/// Condition-initialized conditional Heun sampling. Per step n:
/// refine x with the condition, take the Euler step along
/// d = (x - f(x, t(n), c)) / t(n), and when t(n+1) > 0 average with the
/// recomputed slope at the proposal (trapezoidal corrector).
/// Deterministic with init_mode == condition.
using DenoiseFn = std::function<Tensor(const Tensor& x, double t, const Tensor& cond)>;

inline JointVolume sample_fn(const DenoiseFn& denoiser, const JointVolume& c,
                             const SamplerSchedule& schedule, Rng* rng = nullptr) {
    schedule.validate();
    if (!c.pixels.all_finite()) throw std::invalid_argument("sample: non-finite condition");

    Tensor x = c.pixels;
    if (schedule.init_mode == InitMode::condition_plus_noise) {
        if (!rng) throw std::invalid_argument("sample: condition_plus_noise needs an rng");
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += schedule.t[0] * rng->normal();
    }

    for (std::size_t n = 0; n < schedule.T; ++n) {
        const double tn = schedule.t[n], tn1 = schedule.t[n + 1];
        x = refine_with_condition(x, c.pixels, schedule.w);

        Tensor denoised = denoiser(x, tn, c.pixels);
        Tensor d = x;
        d -= denoised;
        d *= 1.0 / tn;

        Tensor x_next = x;
        for (std::size_t i = 0; i < x.size(); ++i) x_next[i] += (tn1 - tn) * d[i];

        if (tn1 > 0.0) {
            Tensor denoised2 = denoiser(x_next, tn1, c.pixels);
            for (std::size_t i = 0; i < x.size(); ++i) {
                double d2 = (x_next[i] - denoised2[i]) / tn1;
                x_next[i] = x[i] + (tn1 - tn) * 0.5 * (d[i] + d2);
            }
        }
        if (!x_next.all_finite())
            throw std::runtime_error("sample: non-finite state after step " + std::to_string(n) +
                                     " (t=" + std::to_string(tn) + ")");
        x = std::move(x_next);
    }
    return JointVolume(std::move(x), VolumeRole::reconstruction);
}

inline JointVolume sample(DenoiserModel& model, const JointVolume& c,
                          const SamplerSchedule& schedule, Rng* rng = nullptr) {
    return sample_fn(
        [&model](const Tensor& x, double t, const Tensor& cond) {
            return model.forward(x, t, cond);
        },
        c, schedule, rng);
}

/// Empirical convergence-order probe on a linear denoiser f(x, t) = a*x,
/// whose flow dx/dt = (1-a) x / t has the closed form x = x0 (t/t0)^(1-a).
/// Integrates from t0 down to t1 > 0 on a geometric grid with T and 2T
/// Heun (or Euler) steps and returns log2(err_T / err_2T).
inline double heun_order_probe(double a, double t0, double t1, std::size_t T,
                               bool euler_only = false) {
    if (!(t0 > t1) || !(t1 > 0)) throw std::invalid_argument("heun_order_probe: need t0 > t1 > 0");
    auto integrate = [&](std::size_t steps) {
        double x = 1.0;
        double ratio = std::pow(t1 / t0, 1.0 / static_cast<double>(steps));
        double tn = t0;
        for (std::size_t n = 0; n < steps; ++n) {
            double tn1 = tn * ratio;
            double d = (x - a * x) / tn;
            double x_euler = x + (tn1 - tn) * d;
            if (euler_only) {
                x = x_euler;
            } else {
                double d2 = (x_euler - a * x_euler) / tn1;
                x = x + (tn1 - tn) * 0.5 * (d + d2);
            }
            tn = tn1;
        }
        return x;
    };
    double exact = std::pow(t1 / t0, 1.0 - a);
    double err1 = std::abs(integrate(T) - exact);
    double err2 = std::abs(integrate(2 * T) - exact);
    if (err2 == 0.0) return std::numeric_limits<double>::infinity();
    return std::log2(err1 / err2);
}

}  // namespace pfjm
