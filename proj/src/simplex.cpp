// SPDX-License-Identifier: Apache-2.0
#include "maediff/simplex.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace maediff {

namespace {

// Skewing factors for 2D: F2 = (sqrt(3)-1)/2, G2 = (3-sqrt(3))/6.
constexpr double kF2 = 0.36602540378443864676372317075294;
constexpr double kG2 = 0.21132486540518711774542560974902;

constexpr double kGrad2[8][2] = {
    {-1.0, -1.0}, {1.0, 0.0}, {-1.0, 0.0}, {1.0, 1.0},
    {-1.0, 1.0},  {0.0, -1.0}, {0.0, 1.0}, {1.0, -1.0},
};

inline int fast_floor(double x) {
    int i = static_cast<int>(x);
    return (x < i) ? i - 1 : i;
}

inline double corner(double t, int hash, double x, double y) {
    if (t < 0.0) return 0.0;
    t *= t;
    const double* g = kGrad2[hash & 7];
    return t * t * (g[0] * x + g[1] * y);
}

} // namespace

SimplexNoise2D::SimplexNoise2D(uint64_t seed) {
    uint8_t p[256];
    std::iota(p, p + 256, 0);
    SplitMix64 rng(seed);
    for (int i = 255; i > 0; --i) {
        int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(p[i], p[j]);
    }
    for (int i = 0; i < 256; ++i) {
        perm_[i] = perm_[i + 256] = p[i];
    }
}

double SimplexNoise2D::sample(double x, double y) const {
    double s = (x + y) * kF2;
    int i = fast_floor(x + s);
    int j = fast_floor(y + s);
    double t = (i + j) * kG2;
    double x0 = x - (i - t);
    double y0 = y - (j - t);

    int i1 = (x0 > y0) ? 1 : 0;
    int j1 = 1 - i1;

    double x1 = x0 - i1 + kG2;
    double y1 = y0 - j1 + kG2;
    double x2 = x0 - 1.0 + 2.0 * kG2;
    double y2 = y0 - 1.0 + 2.0 * kG2;

    int ii = i & 255;
    int jj = j & 255;
    int g0 = perm_[ii + perm_[jj]];
    int g1 = perm_[ii + i1 + perm_[jj + j1]];
    int g2 = perm_[ii + 1 + perm_[jj + 1]];

    double n = corner(0.5 - x0 * x0 - y0 * y0, g0, x0, y0) +
               corner(0.5 - x1 * x1 - y1 * y1, g1, x1, y1) +
               corner(0.5 - x2 * x2 - y2 * y2, g2, x2, y2);
    // 40.0 keeps the 8-gradient variant inside [-1, 1] (empirical max ~0.90).
    return 40.0 * n;
}

double simplex2d(uint64_t seed, double x, double y) {
    return SimplexNoise2D(seed).sample(x, y);
}

Tensor fractal_field_raw(int64_t H, int64_t W, const SimplexParams& params) {
    if (H < 1 || W < 1) throw ConfigError("fractal field needs H, W >= 1");
    if (!(params.nu > 0.0)) throw ConfigError("simplex.nu must be > 0");
    if (params.octaves < 1) throw ConfigError("simplex.octaves must be >= 1");
    if (!(params.gamma > 0.0 && params.gamma < 1.0)) throw ConfigError("simplex.gamma must lie in (0, 1)");

    Tensor field({H, W});
    double amplitude = 1.0;
    double freq = params.nu;
    for (int k = 0; k < params.octaves; ++k) {
        SimplexNoise2D noise(params.seed + static_cast<uint64_t>(k));
        for (int64_t i = 0; i < H; ++i) {
            for (int64_t j = 0; j < W; ++j) {
                field.at(i, j) += static_cast<float>(amplitude * noise.sample(i * freq, j * freq));
            }
        }
        amplitude *= params.gamma;
        freq *= 2.0;
    }
    return field;
}

Tensor fractal_field(int64_t H, int64_t W, const SimplexParams& params) {
    Tensor field = fractal_field_raw(H, W, params);
    const int64_t n = field.numel();
    double mean = field.mean();
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = field[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    if (!(var > 1e-20)) {
        throw NumericError("fractal field is degenerate (zero variance) at " + std::to_string(H) + "x" +
                           std::to_string(W));
    }
    double inv_std = 1.0 / std::sqrt(var);
    for (int64_t i = 0; i < n; ++i) {
        field[i] = static_cast<float>((field[i] - mean) * inv_std);
    }
    return field;
}

} // namespace maediff
