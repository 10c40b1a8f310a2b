// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "maediff/tensor.hpp"

namespace maediff {

struct PostprocessConfig {
    int median_kernel = 5;
    int erosion_cycles = 3;
    int min_component_size = 7;
    int connectivity = 8; // 4 or 8
    int threshold_candidates = 200;
    bool auprc_per_image = false; // default: pool pixels across the split
};

// k x k median with edge replication at the borders. k must be odd.
Tensor median_filter(const Tensor& map, int k);

// Repeated morphological erosion with a 3x3 cross structuring element; pixels
// outside the image count as background.
Tensor erode_mask(const Tensor& mask, int cycles);

// Zeroes connected components (by `connectivity`) with fewer than min_size
// pixels. Input is binary (values > 0.5 are foreground).
Tensor remove_small_components(const Tensor& binary, int min_size, int connectivity);

// 2|pred AND gt| / (|pred| + |gt|); both-empty convention returns 1.
double dice(const Tensor& pred, const Tensor& gt);

// Average precision by descending-score sweep with stable tie-breaking by
// pixel index: sum of precision at each positive, divided by positive count.
double auprc(const std::vector<float>& scores, const std::vector<uint8_t>& labels);

// Mean |x0 - rec| over brain-mask pixels.
double l1_error(const Tensor& x0, const Tensor& rec, const Tensor& mask);

// Greedy binarization-threshold search on the unhealthy validation split:
// candidates are threshold_candidates evenly spaced quantiles of the pooled
// score distribution; each candidate is scored by mean per-image Dice after
// small-component removal; returns the argmax (lowest such threshold on
// ties). Scores must already be median-filtered and mask-eroded.
double greedy_threshold(const std::vector<Tensor>& val_scores, const std::vector<Tensor>& val_labels,
                        const PostprocessConfig& ppc);

} // namespace maediff
