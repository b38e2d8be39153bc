#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pfjm/rng.hpp"
#include "pfjm/tensor.hpp"

namespace pfjm {

/// Intensity convention: pixel values live in [-1, 1]; metric reporting maps
/// them affinely to [-1024, 1024] pseudo-HU.
inline constexpr double kPseudoHuScale = 1024.0;

enum class VolumeRole { routine, lowdose, reconstruction };

inline const char* role_name(VolumeRole r) {
    switch (r) {
        case VolumeRole::routine: return "routine";
        case VolumeRole::lowdose: return "lowdose";
        case VolumeRole::reconstruction: return "reconstruction";
    }
    return "?";
}

/// Three-phase image stack, channels in phase order (I, II, III),
/// stored as {3, L, W}.
struct JointVolume {
    Tensor pixels;
    VolumeRole role = VolumeRole::routine;

    JointVolume() = default;
    JointVolume(std::size_t L, std::size_t W, VolumeRole r = VolumeRole::routine)
        : pixels({3, L, W}), role(r) {}
    JointVolume(Tensor t, VolumeRole r) : pixels(std::move(t)), role(r) {
        if (pixels.shape().size() != 3 || pixels.shape()[0] != 3)
            throw std::invalid_argument("JointVolume: expected shape {3, L, W}");
    }

    std::size_t height() const { return pixels.shape()[1]; }
    std::size_t width() const { return pixels.shape()[2]; }
    std::size_t channel_size() const { return height() * width(); }

    double& at(std::size_t phase, std::size_t i, std::size_t j) {
        return pixels[phase * channel_size() + i * width() + j];
    }
    double at(std::size_t phase, std::size_t i, std::size_t j) const {
        return pixels[phase * channel_size() + i * width() + j];
    }

    /// Copy of one phase channel as a flat {L*W} tensor.
    Tensor channel(std::size_t phase) const {
        Tensor out({channel_size()});
        const double* src = pixels.data() + phase * channel_size();
        std::copy(src, src + channel_size(), out.data());
        return out;
    }
};

/// Channel-stack three single-phase images in phase order.
inline JointVolume build_joint_condition(const Tensor& c1, const Tensor& c2, const Tensor& c3,
                                         std::size_t L, std::size_t W) {
    if (c1.size() != L * W || !c1.same_shape(c2) || !c1.same_shape(c3))
        throw std::invalid_argument("build_joint_condition: phase image shape mismatch");
    JointVolume out(L, W, VolumeRole::lowdose);
    const Tensor* chans[3] = {&c1, &c2, &c3};
    for (std::size_t p = 0; p < 3; ++p)
        std::copy(chans[p]->data(), chans[p]->data() + L * W,
                  out.pixels.data() + p * L * W);
    return out;
}

/// Synthetic multiphase phantom recipe. The three phases share identical
/// anatomy (ellipse geometry and tissue texture) and differ only in vessel
/// intensity: phase II vessels brightest, phase III intermediate, phase I
/// baseline. Stand-in for real multiphase CT data.
struct PhantomSpec {
    std::size_t L = 64, W = 64;
    std::size_t ellipses_min = 3, ellipses_max = 6;
    std::size_t vessels_min = 4, vessels_max = 8;
    // contrast-enhancement amplitude per phase (I, II, III)
    double amplitude[3] = {0.10, 0.55, 0.30};
    double tissue_noise = 0.03;
    std::uint64_t seed = 0;

    void validate() const {
        if (L < 8 || W < 8) throw std::invalid_argument("PhantomSpec: L and W must be >= 8");
        if (ellipses_max < ellipses_min || vessels_max < vessels_min)
            throw std::invalid_argument("PhantomSpec: bad count range");
        if (amplitude[1] < amplitude[2] || amplitude[2] < amplitude[0])
            throw std::invalid_argument(
                "PhantomSpec: need phase II >= phase III >= phase I vessel amplitude");
        if (tissue_noise < 0) throw std::invalid_argument("PhantomSpec: negative tissue noise");
    }
};

struct PhantomSample {
    JointVolume volume;                 // routine-dose target
    std::vector<std::uint8_t> vessel_mask;  // L*W, 1 where a vessel was drawn
};

inline PhantomSample generate_phantom_detailed(const PhantomSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t L = spec.L, W = spec.W;

    // Shared anatomy channel: body outline plus soft-tissue ellipses.
    std::vector<double> anatomy(L * W, -0.9);
    auto add_ellipse = [&](double cy, double cx, double ry, double rx, double angle,
                           double value) {
        double ca = std::cos(angle), sa = std::sin(angle);
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                double y = (static_cast<double>(i) / L - cy);
                double x = (static_cast<double>(j) / W - cx);
                double u = (ca * x + sa * y) / rx;
                double v = (-sa * x + ca * y) / ry;
                if (u * u + v * v <= 1.0) anatomy[i * W + j] += value;
            }
        }
    };
    add_ellipse(0.5, 0.5, 0.42, 0.45, 0.0, 0.9);  // body

    std::size_t n_ell = spec.ellipses_min +
                        static_cast<std::size_t>(rng.uniform() *
                                                 (spec.ellipses_max - spec.ellipses_min + 1));
    for (std::size_t e = 0; e < n_ell; ++e) {
        add_ellipse(0.3 + 0.4 * rng.uniform(), 0.3 + 0.4 * rng.uniform(),
                    0.05 + 0.12 * rng.uniform(), 0.05 + 0.12 * rng.uniform(),
                    2.0 * M_PI * rng.uniform(), -0.25 + 0.5 * rng.uniform());
    }
    if (spec.tissue_noise > 0)
        for (auto& a : anatomy) a += spec.tissue_noise * rng.normal();

    // Vessels: small bright disks inside the body, phase-dependent brightness.
    PhantomSample out;
    out.volume = JointVolume(L, W, VolumeRole::routine);
    out.vessel_mask.assign(L * W, 0);

    std::size_t n_ves = spec.vessels_min +
                        static_cast<std::size_t>(rng.uniform() *
                                                 (spec.vessels_max - spec.vessels_min + 1));
    struct Vessel { double cy, cx, r; };
    std::vector<Vessel> vessels(n_ves);
    for (auto& v : vessels) {
        v.cy = 0.2 + 0.6 * rng.uniform();
        v.cx = 0.2 + 0.6 * rng.uniform();
        v.r = 0.015 + 0.035 * rng.uniform();
    }

    for (std::size_t p = 0; p < 3; ++p) {
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < W; ++j)
                out.volume.at(p, i, j) = anatomy[i * W + j];
        for (const auto& v : vessels) {
            for (std::size_t i = 0; i < L; ++i) {
                for (std::size_t j = 0; j < W; ++j) {
                    double dy = static_cast<double>(i) / L - v.cy;
                    double dx = static_cast<double>(j) / W - v.cx;
                    if (dy * dy + dx * dx <= v.r * v.r) {
                        out.volume.at(p, i, j) += spec.amplitude[p];
                        out.vessel_mask[i * W + j] = 1;
                    }
                }
            }
        }
    }
    for (std::size_t k = 0; k < out.volume.pixels.size(); ++k)
        out.volume.pixels[k] = std::clamp(out.volume.pixels[k], -1.0, 1.0);
    return out;
}

inline JointVolume generate_phantom(const PhantomSpec& spec) {
    return generate_phantom_detailed(spec).volume;
}

/// Image-domain low-dose degradation: c = y + eps with
/// eps ~ Normal(0, (base_sigma / sqrt(dose_fraction))^2) i.i.d. per pixel
/// and per phase. Preserves the dose -> noise-power relationship of a
/// projection-domain simulation without a CT forward model.
inline JointVolume simulate_low_dose(const JointVolume& y, double dose_fraction,
                                     double base_sigma, Rng& rng) {
    if (!(dose_fraction > 0.0) || dose_fraction > 1.0)
        throw std::invalid_argument("simulate_low_dose: dose_fraction must be in (0, 1]");
    if (!(base_sigma > 0.0))
        throw std::invalid_argument("simulate_low_dose: base_sigma must be > 0");
    const double noise_sigma = base_sigma / std::sqrt(dose_fraction);
    JointVolume c = y;
    c.role = VolumeRole::lowdose;
    for (std::size_t k = 0; k < c.pixels.size(); ++k)
        c.pixels[k] += noise_sigma * rng.normal();
    return c;
}

}  // namespace pfjm
