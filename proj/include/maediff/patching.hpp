// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "maediff/tensor.hpp"

namespace maediff {

// Hierarchical partition: overlapping p x p upper-level patches on a stride-s
// lattice, non-overlapping r x r sub-level grids. Geometry that does not tile
// exactly is rejected rather than padded.
struct PatchPlan {
    int64_t H = 0, W = 0;
    int64_t p = 0, s = 0, r = 0;
    std::vector<std::pair<int64_t, int64_t>> origins; // (row, col), row-major
    int64_t n_grids = 0;                              // N = H*W / r^2

    int64_t num_patches() const { return static_cast<int64_t>(origins.size()); }
    int64_t grid_rows() const { return H / r; }
    int64_t grid_cols() const { return W / r; }
};

struct PatchMask {
    Tensor mask; // {H, W}, 1.0 inside the patch, 0.0 outside
    int64_t row0 = 0, col0 = 0, side = 0;
};

// Validates the whole geometry: r < p, p and s divisible by r, H and W
// divisible by r, (H-p) and (W-p) divisible by s, s <= p (full coverage).
PatchPlan enumerate_patches(int64_t H, int64_t W, int64_t p, int64_t s, int64_t r);

PatchMask make_mask(const PatchPlan& plan, int64_t k);

// x_tilde = x_t (.) M + x0 (.) (1 - M)
Tensor compose_partial(const Tensor& x_t, const Tensor& x0, const PatchMask& m);

// x0 with the selected patch zeroed: x0 (.) (1 - M)
Tensor visible_region(const Tensor& x0, const PatchMask& m);

// Row-major indices of the (p/r)^2 grids fully inside patch k. Because r
// divides both s and p, grids never straddle a patch boundary.
std::vector<int64_t> grids_for_patch(const PatchPlan& plan, int64_t k);

} // namespace maediff
