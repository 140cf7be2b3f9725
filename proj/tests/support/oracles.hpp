#pragma once

// Reference computations written independently of the library code they check.

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

#include "sigan/core.hpp"
#include "sigan/scenegen.hpp"

namespace sigan::testing {

inline double ref_mse(const Image& a, const Image& b) {
    double acc = 0;
    std::size_t n = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                const double d = double(a.at(c, y, x)) - double(b.at(c, y, x));
                acc += d * d;
                ++n;
            }
    return acc / double(n);
}

inline double ref_rmse(const Image& a, const Image& b) { return std::sqrt(ref_mse(a, b)); }

inline double ref_psnr(const Image& a, const Image& b) {
    const double m = ref_mse(a, b);
    if (m == 0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(m);
}

/// Direct 2-D windowed SSIM with two-pass moments at every valid window.
inline double ref_ssim(const Image& a, const Image& b) {
    constexpr int win = 11;
    constexpr double sigma = 1.5;
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double wts[win][win];
    double wsum = 0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double di = i - 5.0;
            const double dj = j - 5.0;
            wts[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            wsum += wts[i][j];
        }
    for (auto& row : wts)
        for (double& v : row) v /= wsum;

    double total = 0;
    std::size_t windows = 0;
    for (int c = 0; c < 3; ++c)
        for (int oy = 0; oy + win <= a.height; ++oy)
            for (int ox = 0; ox + win <= a.width; ++ox) {
                double mx = 0, my = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        mx += wts[i][j] * a.at(c, oy + i, ox + j);
                        my += wts[i][j] * b.at(c, oy + i, ox + j);
                    }
                double vx = 0, vy = 0, cxy = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const double dx = a.at(c, oy + i, ox + j) - mx;
                        const double dy = b.at(c, oy + i, ox + j) - my;
                        vx += wts[i][j] * dx * dx;
                        vy += wts[i][j] * dy * dy;
                        cxy += wts[i][j] * dx * dy;
                    }
                total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++windows;
            }
    return total / double(windows);
}

inline Image random_image(int side, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(side, side);
    for (float& v : img.pixels) v = u(rng);
    return img;
}

/// Pixel centres inside the primitive's silhouette, counted from the spec's
/// geometry: a disc for spheres, the front face plus top band for boxes.
inline std::size_t silhouette_pixel_count(const scenegen::SceneSpec& s) {
    std::size_t n = 0;
    for (int y = 0; y < s.side; ++y)
        for (int x = 0; x < s.side; ++x) {
            const double px = x + 0.5;
            const double py = y + 0.5;
            bool inside = false;
            if (s.primitive == scenegen::Primitive::sphere) {
                const double r = 0.5 * s.object_scale * s.side;
                const double dx = px - s.object_center.x;
                const double dy = py - s.object_center.y;
                inside = dx * dx + dy * dy <= r * r;
            } else {
                const double w = s.object_scale * s.side;
                const double total_h = w * s.box_aspect + 0.25 * w;
                inside = std::abs(px - s.object_center.x) <= 0.5 * w &&
                         std::abs(py - s.object_center.y) <= 0.5 * total_h;
            }
            if (inside) ++n;
        }
    return n;
}

/// Six-tuple whose object is an axis-aligned k x k square, gt darker than the
/// composite on a strip of `shadow_rows` rows directly below it.
inline SixTuple square_tuple(int side, int k, int x0, int y0, int shadow_rows, float object_value = 0.8f) {
    SixTuple t;
    t.composite = Image(side, side, 0.5f);
    t.gt_harmonized = Image(side, side, 0.5f);
    t.object_mask = Mask(side, side, 0.0f);
    t.background_mask = Mask(side, side, 1.0f);
    for (int y = y0; y < y0 + k; ++y)
        for (int x = x0; x < x0 + k; ++x) {
            t.object_mask.at(y, x) = 1.0f;
            t.background_mask.at(y, x) = 0.0f;
            for (int c = 0; c < 3; ++c) {
                t.composite.at(c, y, x) = object_value;
                t.gt_harmonized.at(c, y, x) = 0.6f;
            }
        }
    for (int y = y0 + k; y < y0 + k + shadow_rows; ++y)
        for (int x = x0; x < x0 + k; ++x)
            for (int c = 0; c < 3; ++c) t.gt_harmonized.at(c, y, x) = 0.2f;
    t.object_illum = EnvMap(16, 32, 0.3f);
    t.background_illum = EnvMap(16, 32, 0.4f);
    t.sample_id = "square";
    return t;
}

}  // namespace sigan::testing
