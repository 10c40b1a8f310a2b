// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "maediff/config.hpp"
#include "maediff/inference.hpp"
#include "maediff/phantom.hpp"
#include "maediff/postprocess.hpp"

namespace maediff {

struct EvalImageRecord {
    std::string id;
    double dice = -1.0; // unhealthy test images
    double l1 = -1.0;   // healthy test images
};

struct EvalReport {
    double threshold = 0.0;
    double dice_mean = 0.0;
    double dice_std = 0.0;
    double auprc = 0.0;
    double l1_mean = 0.0;
    std::vector<EvalImageRecord> per_image;

    std::string to_json_string(int indent = 2) const;
};

// Median filter + brain-mask erosion; scores outside the eroded mask are
// zeroed. This is the preprocessing applied before thresholding and AUPRC.
Tensor preprocess_score(const Tensor& score, const Tensor& brain_mask, const PostprocessConfig& ppc);

// Full protocol: fit the binarization threshold on val-unhealthy by greedy
// Dice search, then evaluate DICE on test-unhealthy, pooled AUPRC over
// eroded-mask pixels, and l1 on test-healthy. When out_dir is nonempty the
// report, reconstruction tensors and optional panels are written there.
EvalReport evaluate_model(Denoiser& denoiser, const DatasetManifest& manifest, const RunConfig& cfg,
                          const std::string& out_dir, bool write_panels);

} // namespace maediff
