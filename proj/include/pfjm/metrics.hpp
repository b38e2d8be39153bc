#pragma once

#include <cmath>
#include <cstddef>
#include <iostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pfjm/phantom.hpp"
#include "pfjm/tensor.hpp"

namespace pfjm {

/// Mean absolute error in the tensor's native units.
inline double mae(const Tensor& reference, const Tensor& reconstruction) {
    if (!reference.same_shape(reconstruction))
        throw std::invalid_argument("mae: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i)
        s += std::abs(reference[i] - reconstruction[i]);
    return s / static_cast<double>(reference.size());
}

/// MAE reported in pseudo-HU ([-1,1] mapped to [-1024,1024]).
inline double mae_hu(const Tensor& reference, const Tensor& reconstruction) {
    return kPseudoHuScale * mae(reference, reconstruction);
}

/// Structural similarity computed globally over the image: one mean,
/// variance, and covariance per image, applied to the whole array.
/// C1, C2 default to (0.01*MAX)^2 and (0.03*MAX)^2.
inline double ssim_global(const Tensor& reference, const Tensor& reconstruction, double c1,
                          double c2) {
    if (!reference.same_shape(reconstruction))
        throw std::invalid_argument("ssim: shape mismatch");
    if (!(c1 > 0) || !(c2 > 0)) throw std::invalid_argument("ssim: C1, C2 must be > 0");
    const double n = static_cast<double>(reference.size());
    double mu_a = 0, mu_b = 0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        mu_a += reference[i];
        mu_b += reconstruction[i];
    }
    mu_a /= n;
    mu_b /= n;
    double var_a = 0, var_b = 0, cov = 0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        double da = reference[i] - mu_a;
        double db = reconstruction[i] - mu_b;
        var_a += da * da;
        var_b += db * db;
        cov += da * db;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    return (2 * mu_a * mu_b + c1) * (2 * cov + c2) /
           ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

inline double default_c1(double max_value) { return 0.01 * max_value * 0.01 * max_value; }
inline double default_c2(double max_value) { return 0.03 * max_value * 0.03 * max_value; }

/// Windowed SSIM variant: mean of per-window global SSIM over a sliding
/// square window (stride = window). Optional alternative to ssim_global.
inline double ssim_windowed(const Tensor& reference, const Tensor& reconstruction,
                            std::size_t height, std::size_t width, std::size_t window, double c1,
                            double c2) {
    if (!reference.same_shape(reconstruction))
        throw std::invalid_argument("ssim: shape mismatch");
    if (height * width != reference.size())
        throw std::invalid_argument("ssim_windowed: bad height/width");
    if (window < 2 || window > height || window > width)
        throw std::invalid_argument("ssim_windowed: bad window");
    double total = 0;
    std::size_t count = 0;
    for (std::size_t i0 = 0; i0 + window <= height; i0 += window) {
        for (std::size_t j0 = 0; j0 + window <= width; j0 += window) {
            Tensor a({window * window}), b({window * window});
            std::size_t k = 0;
            for (std::size_t i = i0; i < i0 + window; ++i)
                for (std::size_t j = j0; j < j0 + window; ++j, ++k) {
                    a[k] = reference[i * width + j];
                    b[k] = reconstruction[i * width + j];
                }
            total += ssim_global(a, b, c1, c2);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

struct IdenticalInputsError : std::runtime_error {
    IdenticalInputsError() : std::runtime_error("psnr: identical inputs (MSE = 0)") {}
};

/// 10 log10(MAX^2 / MSE), in dB. Identical inputs are an error, not a number.
inline double psnr(const Tensor& reference, const Tensor& reconstruction, double max_value) {
    if (!reference.same_shape(reconstruction))
        throw std::invalid_argument("psnr: shape mismatch");
    if (!(max_value > 0)) throw std::invalid_argument("psnr: MAX must be > 0");
    double mse = 0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        double d = reference[i] - reconstruction[i];
        mse += d * d;
    }
    mse /= static_cast<double>(reference.size());
    if (mse == 0.0) throw IdenticalInputsError();
    return 10.0 * std::log10(max_value * max_value / mse);
}

/// Frechet distance between Gaussian fits of two feature sets:
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with the matrix
/// square root evaluated through the symmetric product
/// S_a^(1/2) S_b S_a^(1/2) and eigen-decompositions. Negative eigenvalues
/// are clamped at zero; magnitudes above 1e-6 trigger a warning.
inline double frechet_distance(const std::vector<std::vector<double>>& features_a,
                               const std::vector<std::vector<double>>& features_b) {
    if (features_a.empty() || features_b.empty())
        throw std::invalid_argument("frechet_distance: empty feature set");
    const std::size_t k = features_a.front().size();
    if (k == 0 || k > 256) throw std::invalid_argument("frechet_distance: bad feature dim");
    if (features_b.front().size() != k)
        throw std::invalid_argument("frechet_distance: feature dim mismatch");
    if (features_a.size() <= k || features_b.size() <= k)
        throw std::invalid_argument(
            "frechet_distance: need more samples than feature dimensions");

    auto fit = [k](const std::vector<std::vector<double>>& feats, Eigen::VectorXd& mu,
                   Eigen::MatrixXd& cov) {
        const std::size_t m = feats.size();
        Eigen::MatrixXd X(m, k);
        for (std::size_t i = 0; i < m; ++i) {
            if (feats[i].size() != k)
                throw std::invalid_argument("frechet_distance: ragged feature set");
            for (std::size_t j = 0; j < k; ++j) X(static_cast<long>(i), static_cast<long>(j)) = feats[i][j];
        }
        mu = X.colwise().mean();
        Eigen::MatrixXd centered = X.rowwise() - mu.transpose();
        cov = centered.transpose() * centered / static_cast<double>(m - 1);
    };

    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    fit(features_a, mu_a, cov_a);
    fit(features_b, mu_b, cov_b);

    auto psd_sqrt = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        Eigen::VectorXd ev = es.eigenvalues();
        for (long i = 0; i < ev.size(); ++i) {
            if (ev(i) < 0) {
                if (ev(i) < -1e-6)
                    std::cerr << "frechet_distance: clamping eigenvalue " << ev(i) << " to 0\n";
                ev(i) = 0;
            }
        }
        return Eigen::MatrixXd(es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
                               es.eigenvectors().transpose());
    };

    Eigen::MatrixXd sqrt_a = psd_sqrt(cov_a);
    Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
    double trace_sqrt = 0;
    for (long i = 0; i < es.eigenvalues().size(); ++i) {
        double ev = es.eigenvalues()(i);
        if (ev < 0) {
            if (ev < -1e-6)
                std::cerr << "frechet_distance: clamping eigenvalue " << ev << " to 0\n";
            ev = 0;
        }
        trace_sqrt += std::sqrt(ev);
    }
    return (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
}

/// Default pluggable feature extractor for the Frechet protocol: the three
/// reconstructed phases are treated as the three channels of one image,
/// each channel average-pooled to pool x pool cells and flattened
/// (k = 3 * pool^2).
inline std::vector<double> pooled_features(const JointVolume& v, std::size_t pool) {
    if (pool < 1 || pool > v.height() || pool > v.width())
        throw std::invalid_argument("pooled_features: bad pool size");
    std::vector<double> out;
    out.reserve(3 * pool * pool);
    for (std::size_t p = 0; p < 3; ++p) {
        for (std::size_t bi = 0; bi < pool; ++bi) {
            for (std::size_t bj = 0; bj < pool; ++bj) {
                std::size_t i0 = bi * v.height() / pool, i1 = (bi + 1) * v.height() / pool;
                std::size_t j0 = bj * v.width() / pool, j1 = (bj + 1) * v.width() / pool;
                double s = 0;
                for (std::size_t i = i0; i < i1; ++i)
                    for (std::size_t j = j0; j < j1; ++j) s += v.at(p, i, j);
                out.push_back(s / static_cast<double>((i1 - i0) * (j1 - j0)));
            }
        }
    }
    return out;
}

}  // namespace pfjm
