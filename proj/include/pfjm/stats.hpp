#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pfjm/rng.hpp"

namespace pfjm {

/// One-dimensional 1-Wasserstein distance between two samples, via
/// quantile matching with linear interpolation at n_quantiles points.
inline double wasserstein1_1d(std::vector<double> a, std::vector<double> b,
                              std::size_t n_quantiles = 512) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1_1d: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    auto quantile = [](const std::vector<double>& s, double q) {
        double pos = q * static_cast<double>(s.size() - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, s.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return s[lo] * (1.0 - frac) + s[hi] * frac;
    };
    double total = 0.0;
    for (std::size_t i = 0; i < n_quantiles; ++i) {
        double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n_quantiles);
        total += std::abs(quantile(a, q) - quantile(b, q));
    }
    return total / static_cast<double>(n_quantiles);
}

/// Sliced 1-Wasserstein distance between two point sets in R^n: average of
/// the 1-D distance over random projection directions.
inline double sliced_wasserstein(const std::vector<std::vector<double>>& a,
                                 const std::vector<std::vector<double>>& b, Rng& rng,
                                 std::size_t n_directions = 64) {
    if (a.empty() || b.empty()) throw std::invalid_argument("sliced_wasserstein: empty set");
    const std::size_t n = a.front().size();
    double total = 0.0;
    for (std::size_t d = 0; d < n_directions; ++d) {
        std::vector<double> dir(n);
        double norm = 0.0;
        for (auto& v : dir) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : dir) v /= norm;
        auto project = [&](const std::vector<std::vector<double>>& pts) {
            std::vector<double> out(pts.size());
            for (std::size_t i = 0; i < pts.size(); ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < n; ++k) s += pts[i][k] * dir[k];
                out[i] = s;
            }
            return out;
        };
        total += wasserstein1_1d(project(a), project(b));
    }
    return total / static_cast<double>(n_directions);
}

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Kolmogorov-Smirnov distance between a sample and Normal(0, sigma^2).
inline double ks_distance_to_normal(std::vector<double> sample, double sigma) {
    if (sample.empty()) throw std::invalid_argument("ks_distance_to_normal: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        double cdf = normal_cdf(sample[i] / sigma);
        double lo = static_cast<double>(i) / n;
        double hi = static_cast<double>(i + 1) / n;
        d = std::max(d, std::max(std::abs(cdf - lo), std::abs(cdf - hi)));
    }
    return d;
}

/// Pearson correlation of two equal-length samples.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("pearson: bad input");
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double va = 0, vb = 0, cov = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        cov += (a[i] - ma) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

}  // namespace pfjm
