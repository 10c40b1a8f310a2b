// SPDX-License-Identifier: Apache-2.0
#include "maediff/inference.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace maediff {

ReconstructionResult reconstruct(const Tensor& x0, Denoiser& denoiser, const NoiseSchedule& sched,
                                 const PatchPlan& plan, int t_test, const SimplexParams& noise) {
    if (x0.shape() != std::vector<int64_t>{plan.H, plan.W}) {
        throw ConfigError("reconstruct: image shape " + shape_str(x0.shape()) + " != plan geometry");
    }
    Tensor eps = fractal_field(plan.H, plan.W, noise);
    Tensor x_t = forward_diffuse(x0, eps, t_test, sched);

    const int64_t n = x0.numel();
    std::vector<double> accum(static_cast<size_t>(n), 0.0);
    std::vector<double> cover(static_cast<size_t>(n), 0.0);
    for (int64_t k = 0; k < plan.num_patches(); ++k) {
        PatchMask m = make_mask(plan, k);
        Tensor x_tilde = compose_partial(x_t, x0, m);
        Tensor pred = denoiser.predict_x0(x_tilde, k, t_test);
        if (!pred.same_shape(x0)) throw ConfigError("reconstruct: denoiser output shape mismatch");
        if (!pred.all_finite()) {
            throw NumericError("reconstruct: non-finite denoiser output at patch " + std::to_string(k));
        }
        for (int64_t i = 0; i < n; ++i) {
            if (m.mask[i] != 0.0f) {
                accum[static_cast<size_t>(i)] += static_cast<double>(pred[i]);
                cover[static_cast<size_t>(i)] += 1.0;
            }
        }
    }

    ReconstructionResult r;
    r.x0_rec = Tensor(x0.shape());
    r.coverage = Tensor(x0.shape());
    for (int64_t i = 0; i < n; ++i) {
        if (!(cover[static_cast<size_t>(i)] >= 1.0)) {
            throw NumericError("reconstruct: pixel without patch coverage (plan invariant violated)");
        }
        r.x0_rec[i] = static_cast<float>(accum[static_cast<size_t>(i)] / cover[static_cast<size_t>(i)]);
        r.coverage[i] = static_cast<float>(cover[static_cast<size_t>(i)]);
    }
    r.score = anomaly_map(x0, r.x0_rec);
    return r;
}

Tensor anomaly_map(const Tensor& x0, const Tensor& rec) { return abs_diff(x0, rec); }

} // namespace maediff
