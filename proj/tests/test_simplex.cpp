// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maediff/simplex.hpp"

using namespace maediff;

namespace {

SimplexParams paper_params(uint64_t seed) {
    SimplexParams p;
    p.nu = 0.015625; // 2^-6
    p.octaves = 6;
    p.gamma = 0.8;
    p.seed = seed;
    return p;
}

double pearson(const Tensor& a, const Tensor& b) {
    const double ma = a.mean(), mb = b.mean();
    double num = 0.0, va = 0.0, vb = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(va * vb);
}

} // namespace

TEST_CASE("simplex2d is deterministic for a given seed") {
    SimplexNoise2D n(42);
    for (int i = 0; i < 100; ++i) {
        const double x = 0.37 * i, y = -1.91 * i;
        CHECK(n.sample(x, y) == simplex2d(42, x, y));
    }
}

TEST_CASE("simplex2d stays within [-1, 1] over a coordinate sweep") {
    SimplexNoise2D n(7);
    SplitMix64 rng(1);
    double max_abs = 0.0;
    for (int i = 0; i < 1000000; ++i) {
        const double x = (rng.uniform() - 0.5) * 2000.0;
        const double y = (rng.uniform() - 0.5) * 2000.0;
        max_abs = std::max(max_abs, std::fabs(n.sample(x, y)));
    }
    CHECK(max_abs <= 1.0);
    CHECK(max_abs > 0.5); // the scale constant is not degenerately small
}

TEST_CASE("fields from different seeds decorrelate") {
    const int64_t side = 64;
    Tensor a({side, side}), b({side, side});
    SimplexNoise2D na(1001), nb(2002);
    for (int64_t i = 0; i < side; ++i) {
        for (int64_t j = 0; j < side; ++j) {
            a.at(i, j) = static_cast<float>(na.sample(i * 0.1, j * 0.1));
            b.at(i, j) = static_cast<float>(nb.sample(i * 0.1, j * 0.1));
        }
    }
    CHECK(std::fabs(pearson(a, b)) < 0.2);
}

TEST_CASE("fractal field is deterministic and standardized") {
    SimplexParams p = paper_params(77);
    Tensor f1 = fractal_field(96, 96, p);
    Tensor f2 = fractal_field(96, 96, p);
    for (int64_t i = 0; i < f1.numel(); ++i) CHECK(f1[i] == f2[i]);

    double mean = f1.mean();
    double var = 0.0;
    for (int64_t i = 0; i < f1.numel(); ++i) var += (f1[i] - mean) * (f1[i] - mean);
    var /= static_cast<double>(f1.numel());
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(var - 1.0) < 1e-6);
}

TEST_CASE("single octave collapses the sum to one term") {
    SimplexParams p = paper_params(5);
    p.octaves = 1;
    Tensor raw = fractal_field_raw(32, 32, p);
    SimplexNoise2D base(p.seed);
    for (int64_t i = 0; i < 32; ++i) {
        for (int64_t j = 0; j < 32; ++j) {
            // the field stores float32; a single octave is one cast, exactly
            CHECK(raw.at(i, j) == static_cast<float>(base.sample(i * p.nu, j * p.nu)));
        }
    }
}

TEST_CASE("raw field equals the per-octave oracle and amplitudes decay like gamma^k") {
    SimplexParams p = paper_params(31);
    const int64_t side = 96;
    Tensor raw = fractal_field_raw(side, side, p);

    // oracle: rebuild each octave from the public point generator
    std::vector<Tensor> octaves;
    for (int k = 0; k < p.octaves; ++k) {
        Tensor o({side, side});
        SimplexNoise2D n(p.seed + static_cast<uint64_t>(k));
        const double freq = p.nu * std::pow(2.0, k);
        const double amp = std::pow(p.gamma, k);
        for (int64_t i = 0; i < side; ++i) {
            for (int64_t j = 0; j < side; ++j) {
                o.at(i, j) = static_cast<float>(amp * n.sample(i * freq, j * freq));
            }
        }
        octaves.push_back(std::move(o));
    }
    for (int64_t i = 0; i < raw.numel(); ++i) {
        double sum = 0.0;
        for (const Tensor& o : octaves) sum += o[i];
        CHECK(raw[i] == doctest::Approx(sum).epsilon(1e-5));
    }
    // RMS of octave k relative to octave 0 tracks gamma^k (loose: finite sample)
    auto rms = [](const Tensor& t) {
        double s = 0.0;
        for (int64_t i = 0; i < t.numel(); ++i) s += static_cast<double>(t[i]) * t[i];
        return std::sqrt(s / static_cast<double>(t.numel()));
    };
    const double rms0 = rms(octaves[0]);
    for (int k = 1; k < p.octaves; ++k) {
        const double ratio = rms(octaves[static_cast<size_t>(k)]) / rms0;
        const double expect = std::pow(p.gamma, k);
        CHECK(ratio == doctest::Approx(expect).epsilon(0.35));
    }
}

TEST_CASE("adjacent-pixel correlation exceeds white noise") {
    SimplexParams p = paper_params(123);
    Tensor f = fractal_field(96, 96, p);
    double num = 0.0, den = 0.0;
    for (int64_t i = 0; i < 96; ++i) {
        for (int64_t j = 0; j + 1 < 96; ++j) {
            num += f.at(i, j) * f.at(i, j + 1);
            den += f.at(i, j) * f.at(i, j);
        }
    }
    const double corr = num / den;
    CHECK(corr > 0.3);

    SplitMix64 rng(9);
    Tensor g = Tensor::randn({96, 96}, rng);
    double gnum = 0.0, gden = 0.0;
    for (int64_t i = 0; i < 96; ++i) {
        for (int64_t j = 0; j + 1 < 96; ++j) {
            gnum += g.at(i, j) * g.at(i, j + 1);
            gden += g.at(i, j) * g.at(i, j);
        }
    }
    CHECK(corr > gnum / gden);
}

TEST_CASE("degenerate fields and invalid params are rejected") {
    SimplexParams p = paper_params(1);
    CHECK_THROWS_AS(fractal_field(1, 1, p), NumericError);
    SimplexParams bad = p;
    bad.octaves = 0;
    CHECK_THROWS_AS(fractal_field(8, 8, bad), ConfigError);
    bad = p;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(fractal_field(8, 8, bad), ConfigError);
    bad = p;
    bad.nu = 0.0;
    CHECK_THROWS_AS(fractal_field(8, 8, bad), ConfigError);
}
