// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maediff/tensor.hpp"

namespace maediff {

// Minimal 8-bit grayscale PNG writer (zlib-backed, deterministic output).
void write_png_gray8(const std::string& path, const std::vector<uint8_t>& pixels, int64_t width, int64_t height);

enum class PanelNorm {
    Clamp01,  // inputs and reconstructions
    MaxScale, // anomaly scores (divided by the per-image max)
    Binary,   // masks
};

// Side-by-side panel, columns separated by a 2-px light strip; the standard
// layout is input | reconstruction | anomaly score | ground truth.
void write_panel_png(const std::string& path, const std::vector<Tensor>& columns,
                     const std::vector<PanelNorm>& norms);

} // namespace maediff
