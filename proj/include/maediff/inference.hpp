// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "maediff/diffusion.hpp"
#include "maediff/patching.hpp"
#include "maediff/simplex.hpp"
#include "maediff/unet.hpp"

namespace maediff {

// Anything that can produce an x0 estimate for a partly-noised image; the
// trained model implements this, test oracles stub it.
struct Denoiser {
    virtual ~Denoiser() = default;
    virtual Tensor predict_x0(const Tensor& x_tilde, int64_t patch_index, int t) = 0;
};

struct ModelDenoiser final : Denoiser {
    explicit ModelDenoiser(const DenoiserModel& m) : model(&m) {}
    Tensor predict_x0(const Tensor& x_tilde, int64_t patch_index, int t) override {
        return model->predict_x0(x_tilde, patch_index, t);
    }
    const DenoiserModel* model;
};

struct ReconstructionResult {
    Tensor x0_rec;   // averaged patch-wise reconstruction
    Tensor coverage; // per-pixel patch count (integer-valued), >= 1 everywhere
    Tensor score;    // |x0 - x0_rec|
};

// Sequential patch-wise reconstruction: one simplex field per image, drawn
// before the patch loop; per-patch predictions are masked, summed in double
// precision and divided by the coverage counts, so the result is independent
// of patch order and bit-exact when every patch agrees.
ReconstructionResult reconstruct(const Tensor& x0, Denoiser& denoiser, const NoiseSchedule& sched,
                                 const PatchPlan& plan, int t_test, const SimplexParams& noise);

// Pixel-wise anomaly score |x0 - rec|.
Tensor anomaly_map(const Tensor& x0, const Tensor& rec);

} // namespace maediff
