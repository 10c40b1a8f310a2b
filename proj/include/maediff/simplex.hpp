// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "maediff/tensor.hpp"

namespace maediff {

struct SimplexParams {
    double nu = 0.015625; // base frequency, 2^-6
    int octaves = 6;
    double gamma = 0.8;   // per-octave amplitude decay
    uint64_t seed = 0;
};

// 2D simplex gradient noise. The gradient table is a Fisher-Yates shuffle of
// 0..255 driven by SplitMix64, so fields are bit-identical for a given seed
// on any platform with IEEE-754 doubles. Output lies in [-1, 1].
class SimplexNoise2D {
public:
    explicit SimplexNoise2D(uint64_t seed);
    double sample(double x, double y) const;

private:
    uint8_t perm_[512];
};

// One-shot evaluation; builds the table each call. Prefer SimplexNoise2D when
// sampling a whole field.
double simplex2d(uint64_t seed, double x, double y);

// raw(i,j) = sum_k gamma^k * simplex2d(seed+k, i*nu*2^k, j*nu*2^k), octave k
// seeded with seed+k. Not standardized.
Tensor fractal_field_raw(int64_t H, int64_t W, const SimplexParams& params);

// Standardized to zero mean and unit variance over the field (population
// variance, double accumulation). Throws NumericError when the raw field is
// degenerate (zero variance, e.g. 1x1).
Tensor fractal_field(int64_t H, int64_t W, const SimplexParams& params);

} // namespace maediff
