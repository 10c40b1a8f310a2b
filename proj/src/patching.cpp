// SPDX-License-Identifier: Apache-2.0
#include "maediff/patching.hpp"

#include <string>

namespace maediff {

namespace {

void check_patch_index(const PatchPlan& plan, int64_t k) {
    if (k < 0 || k >= plan.num_patches()) {
        throw ConfigError("patch index " + std::to_string(k) + " outside [0, " +
                          std::to_string(plan.num_patches()) + ")");
    }
}

} // namespace

PatchPlan enumerate_patches(int64_t H, int64_t W, int64_t p, int64_t s, int64_t r) {
    auto fail = [&](const std::string& what) {
        throw ConfigError("invalid patch geometry (H=" + std::to_string(H) + ", W=" + std::to_string(W) +
                          ", p=" + std::to_string(p) + ", s=" + std::to_string(s) + ", r=" + std::to_string(r) +
                          "): " + what);
    };
    if (H < 1 || W < 1 || p < 1 || s < 1 || r < 1) fail("all sizes must be positive");
    if (p > H || p > W) fail("patch side exceeds image");
    if (r >= p) fail("grid side r must be smaller than patch side p");
    if (s % r != 0) fail("stride s must be divisible by grid side r");
    if (p % r != 0) fail("patch side p must be divisible by grid side r");
    if (H % r != 0 || W % r != 0) fail("image sides must be divisible by grid side r");
    if ((H - p) % s != 0 || (W - p) % s != 0) fail("(H-p) and (W-p) must be divisible by stride s");
    if (s > p) fail("stride s must not exceed patch side p (coverage gaps)");

    PatchPlan plan;
    plan.H = H;
    plan.W = W;
    plan.p = p;
    plan.s = s;
    plan.r = r;
    plan.n_grids = (H * W) / (r * r);
    for (int64_t row = 0; row + p <= H; row += s) {
        for (int64_t col = 0; col + p <= W; col += s) {
            plan.origins.emplace_back(row, col);
        }
    }
    // K = (H-p+s)(W-p+s)/s^2 by construction; assert the closed form.
    int64_t k_formula = ((H - p + s) * (W - p + s)) / (s * s);
    if (k_formula != plan.num_patches()) fail("internal: enumeration disagrees with K formula");
    return plan;
}

PatchMask make_mask(const PatchPlan& plan, int64_t k) {
    check_patch_index(plan, k);
    PatchMask m;
    m.row0 = plan.origins[static_cast<size_t>(k)].first;
    m.col0 = plan.origins[static_cast<size_t>(k)].second;
    m.side = plan.p;
    m.mask = Tensor({plan.H, plan.W});
    for (int64_t i = m.row0; i < m.row0 + plan.p; ++i) {
        for (int64_t j = m.col0; j < m.col0 + plan.p; ++j) {
            m.mask.at(i, j) = 1.0f;
        }
    }
    return m;
}

Tensor compose_partial(const Tensor& x_t, const Tensor& x0, const PatchMask& m) {
    if (!x_t.same_shape(x0) || !x_t.same_shape(m.mask)) {
        throw ConfigError("compose_partial: shape mismatch");
    }
    Tensor r(x_t.shape());
    for (int64_t i = 0; i < r.numel(); ++i) {
        r[i] = m.mask[i] != 0.0f ? x_t[i] : x0[i];
    }
    return r;
}

Tensor visible_region(const Tensor& x0, const PatchMask& m) {
    if (!x0.same_shape(m.mask)) throw ConfigError("visible_region: shape mismatch");
    Tensor r(x0.shape());
    for (int64_t i = 0; i < r.numel(); ++i) {
        r[i] = m.mask[i] != 0.0f ? 0.0f : x0[i];
    }
    return r;
}

std::vector<int64_t> grids_for_patch(const PatchPlan& plan, int64_t k) {
    check_patch_index(plan, k);
    const auto [row0, col0] = plan.origins[static_cast<size_t>(k)];
    const int64_t g0 = row0 / plan.r, g1 = (row0 + plan.p) / plan.r;
    const int64_t h0 = col0 / plan.r, h1 = (col0 + plan.p) / plan.r;
    std::vector<int64_t> grids;
    grids.reserve(static_cast<size_t>((g1 - g0) * (h1 - h0)));
    for (int64_t g = g0; g < g1; ++g) {
        for (int64_t h = h0; h < h1; ++h) {
            grids.push_back(g * plan.grid_cols() + h);
        }
    }
    return grids;
}

} // namespace maediff
