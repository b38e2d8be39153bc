#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "pfjm/phantom.hpp"

namespace pfjm {

namespace detail {
inline void put_be32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}
inline void put_chunk(std::string& out, const char type[4], const std::string& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    put_be32(out, crc);
}
}  // namespace detail

/// Minimal PNG encoder (filter 0 scanlines, zlib-compressed).
/// channels: 1 = grayscale, 3 = RGB. pixels is row-major, 8-bit.
inline void write_png(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::size_t width, std::size_t height, std::size_t channels) {
    if (channels != 1 && channels != 3) throw std::invalid_argument("write_png: channels");
    if (pixels.size() != width * height * channels)
        throw std::invalid_argument("write_png: pixel buffer size mismatch");

    std::string raw;
    raw.reserve(height * (1 + width * channels));
    for (std::size_t i = 0; i < height; ++i) {
        raw.push_back('\0');  // filter type 0
        raw.append(reinterpret_cast<const char*>(pixels.data() + i * width * channels),
                   width * channels);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<Bytef> compressed(bound);
    if (compress2(compressed.data(), &bound, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png: zlib compression failed");

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    detail::put_be32(ihdr, static_cast<std::uint32_t>(width));
    detail::put_be32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);                                   // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);               // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    detail::put_chunk(out, "IHDR", ihdr);
    detail::put_chunk(out, "IDAT",
                      std::string(reinterpret_cast<char*>(compressed.data()), bound));
    detail::put_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_png: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

/// Grid of per-phase slices: rows = volumes, columns = phases I..III,
/// values window-mapped from [lo, hi] to 8-bit grayscale.
inline void write_volume_grid_png(const std::string& path,
                                  const std::vector<JointVolume>& volumes, double lo = -1.0,
                                  double hi = 1.0) {
    if (volumes.empty()) throw std::invalid_argument("write_volume_grid_png: no volumes");
    const std::size_t h = volumes.front().height(), w = volumes.front().width();
    const std::size_t gap = 2;
    const std::size_t gw = 3 * (w + gap) - gap, gh = volumes.size() * (h + gap) - gap;
    std::vector<std::uint8_t> img(gw * gh, 255);
    for (std::size_t vi = 0; vi < volumes.size(); ++vi) {
        for (std::size_t p = 0; p < 3; ++p) {
            for (std::size_t i = 0; i < h; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    double v = (volumes[vi].at(p, i, j) - lo) / (hi - lo);
                    v = std::clamp(v, 0.0, 1.0);
                    img[(vi * (h + gap) + i) * gw + p * (w + gap) + j] =
                        static_cast<std::uint8_t>(std::lround(255.0 * v));
                }
            }
        }
    }
    write_png(path, img, gw, gh, 1);
}

struct ChartSeries {
    std::string label;
    std::vector<double> x, y;
    std::uint8_t rgb[3] = {0, 0, 0};
};

/// Small line chart on a white canvas, log-x optional. No text rendering;
/// the CSV next to the chart carries the numbers.
inline void write_line_chart_png(const std::string& path,
                                 const std::vector<ChartSeries>& series, bool log_x = false,
                                 std::size_t width = 480, std::size_t height = 320) {
    if (series.empty()) throw std::invalid_argument("write_line_chart_png: no series");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            double xv = log_x ? std::log10(s.x[i]) : s.x[i];
            xmin = std::min(xmin, xv);
            xmax = std::max(xmax, xv);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;

    std::vector<std::uint8_t> img(width * height * 3, 255);
    const std::size_t margin = 24;
    auto set_px = [&](long x, long y, const std::uint8_t rgb[3]) {
        if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height))
            return;
        for (int c = 0; c < 3; ++c) img[(y * width + x) * 3 + c] = rgb[c];
    };
    const std::uint8_t black[3] = {0, 0, 0};
    for (std::size_t x = margin; x < width - margin; ++x)
        set_px(static_cast<long>(x), static_cast<long>(height - margin), black);
    for (std::size_t y = margin; y < height - margin; ++y)
        set_px(static_cast<long>(margin), static_cast<long>(y), black);

    auto to_px = [&](double xv, double yv) {
        double px = margin + (xv - xmin) / (xmax - xmin) * (width - 2.0 * margin);
        double py = height - margin - (yv - ymin) / (ymax - ymin) * (height - 2.0 * margin);
        return std::pair<long, long>(std::lround(px), std::lround(py));
    };
    for (const auto& s : series) {
        for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
            auto [x0, y0] = to_px(log_x ? std::log10(s.x[i]) : s.x[i], s.y[i]);
            auto [x1, y1] = to_px(log_x ? std::log10(s.x[i + 1]) : s.x[i + 1], s.y[i + 1]);
            long steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
            for (long k = 0; k <= steps; ++k) {
                long x = x0 + (x1 - x0) * k / steps;
                long y = y0 + (y1 - y0) * k / steps;
                set_px(x, y, s.rgb);
                set_px(x, y + 1, s.rgb);
            }
        }
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            auto [x, y] = to_px(log_x ? std::log10(s.x[i]) : s.x[i], s.y[i]);
            for (long dx = -2; dx <= 2; ++dx)
                for (long dy = -2; dy <= 2; ++dy) set_px(x + dx, y + dy, s.rgb);
        }
    }
    write_png(path, img, width, height, 3);
}

}  // namespace pfjm
