// SPDX-License-Identifier: Apache-2.0
#include "maediff/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace maediff {

namespace {

void check_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) throw ConfigError(std::string(op) + ": expected a 2D tensor");
}

inline bool fg(float v) { return v > 0.5f; }

} // namespace

Tensor median_filter(const Tensor& map, int k) {
    check_2d(map, "median_filter");
    if (k < 1 || k % 2 == 0) throw ConfigError("median_filter: kernel size must be odd, got " + std::to_string(k));
    const int64_t H = map.dim(0), W = map.dim(1);
    const int r = k / 2;
    Tensor out({H, W});
    std::vector<float> window(static_cast<size_t>(k) * k);
    for (int64_t i = 0; i < H; ++i) {
        for (int64_t j = 0; j < W; ++j) {
            size_t n = 0;
            for (int di = -r; di <= r; ++di) {
                // edge replication
                const int64_t ii = std::clamp<int64_t>(i + di, 0, H - 1);
                for (int dj = -r; dj <= r; ++dj) {
                    const int64_t jj = std::clamp<int64_t>(j + dj, 0, W - 1);
                    window[n++] = map.at(ii, jj);
                }
            }
            auto mid = window.begin() + static_cast<int64_t>(n) / 2;
            std::nth_element(window.begin(), mid, window.begin() + static_cast<int64_t>(n));
            out.at(i, j) = *mid;
        }
    }
    return out;
}

Tensor erode_mask(const Tensor& mask, int cycles) {
    check_2d(mask, "erode_mask");
    if (cycles < 0) throw ConfigError("erode_mask: cycles must be >= 0");
    const int64_t H = mask.dim(0), W = mask.dim(1);
    Tensor cur = mask;
    for (int c = 0; c < cycles; ++c) {
        Tensor next({H, W});
        for (int64_t i = 0; i < H; ++i) {
            for (int64_t j = 0; j < W; ++j) {
                const bool keep = fg(cur.at(i, j)) && (i > 0 && fg(cur.at(i - 1, j))) &&
                                  (i + 1 < H && fg(cur.at(i + 1, j))) && (j > 0 && fg(cur.at(i, j - 1))) &&
                                  (j + 1 < W && fg(cur.at(i, j + 1)));
                next.at(i, j) = keep ? 1.0f : 0.0f;
            }
        }
        cur = std::move(next);
    }
    return cur;
}

Tensor remove_small_components(const Tensor& binary, int min_size, int connectivity) {
    check_2d(binary, "remove_small_components");
    if (connectivity != 4 && connectivity != 8) {
        throw ConfigError("remove_small_components: connectivity must be 4 or 8");
    }
    if (min_size < 1) throw ConfigError("remove_small_components: min_size must be >= 1");
    const int64_t H = binary.dim(0), W = binary.dim(1);
    Tensor out({H, W});
    std::vector<int32_t> label(static_cast<size_t>(H * W), 0);
    std::vector<int64_t> stack;
    int32_t next_label = 0;

    const int n_nb = connectivity == 8 ? 8 : 4;
    const int64_t nbi[8] = {-1, 1, 0, 0, -1, -1, 1, 1};
    const int64_t nbj[8] = {0, 0, -1, 1, -1, 1, -1, 1};

    std::vector<std::vector<int64_t>> components;
    for (int64_t i = 0; i < H; ++i) {
        for (int64_t j = 0; j < W; ++j) {
            const int64_t idx = i * W + j;
            if (!fg(binary[idx]) || label[static_cast<size_t>(idx)] != 0) continue;
            ++next_label;
            components.emplace_back();
            stack.clear();
            stack.push_back(idx);
            label[static_cast<size_t>(idx)] = next_label;
            while (!stack.empty()) {
                const int64_t cur = stack.back();
                stack.pop_back();
                components.back().push_back(cur);
                const int64_t ci = cur / W, cj = cur % W;
                for (int nmb = 0; nmb < n_nb; ++nmb) {
                    const int64_t ni = ci + nbi[nmb], nj = cj + nbj[nmb];
                    if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
                    const int64_t nidx = ni * W + nj;
                    if (fg(binary[nidx]) && label[static_cast<size_t>(nidx)] == 0) {
                        label[static_cast<size_t>(nidx)] = next_label;
                        stack.push_back(nidx);
                    }
                }
            }
        }
    }
    for (const auto& comp : components) {
        if (static_cast<int>(comp.size()) >= min_size) {
            for (int64_t idx : comp) out[idx] = 1.0f;
        }
    }
    return out;
}

double dice(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt)) throw ConfigError("dice: shape mismatch");
    int64_t np = 0, ng = 0, ni = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = fg(pred[i]), g = fg(gt[i]);
        np += p;
        ng += g;
        ni += p && g;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(ni) / static_cast<double>(np + ng);
}

double auprc(const std::vector<float>& scores, const std::vector<uint8_t>& labels) {
    if (scores.size() != labels.size()) throw ConfigError("auprc: scores/labels length mismatch");
    int64_t total_pos = 0;
    for (uint8_t l : labels) total_pos += l ? 1 : 0;
    if (total_pos == 0) throw ConfigError("auprc: no positive labels");

    std::vector<int64_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });

    double ap = 0.0;
    int64_t tp = 0;
    for (size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[static_cast<size_t>(order[rank])]) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(rank + 1);
        }
    }
    return ap / static_cast<double>(total_pos);
}

double l1_error(const Tensor& x0, const Tensor& rec, const Tensor& mask) {
    if (!x0.same_shape(rec) || !x0.same_shape(mask)) throw ConfigError("l1_error: shape mismatch");
    double acc = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < x0.numel(); ++i) {
        if (fg(mask[i])) {
            acc += std::fabs(static_cast<double>(x0[i]) - rec[i]);
            ++count;
        }
    }
    if (count == 0) throw ConfigError("l1_error: empty mask");
    return acc / static_cast<double>(count);
}

double greedy_threshold(const std::vector<Tensor>& val_scores, const std::vector<Tensor>& val_labels,
                        const PostprocessConfig& ppc) {
    if (val_scores.empty() || val_scores.size() != val_labels.size()) {
        throw ConfigError("greedy_threshold: empty or mismatched validation lists");
    }
    bool any_pos = false;
    for (const Tensor& l : val_labels) {
        for (int64_t i = 0; i < l.numel() && !any_pos; ++i) any_pos = fg(l[i]);
        if (any_pos) break;
    }
    if (!any_pos) throw ConfigError("greedy_threshold: validation labels contain no positives (Dice undefined)");
    if (ppc.threshold_candidates < 1) throw ConfigError("greedy_threshold: need at least one candidate");

    // Candidate thresholds: evenly spaced quantiles (i+1)/(C+1) of the pooled
    // validation score distribution.
    std::vector<float> pooled;
    for (const Tensor& s : val_scores) pooled.insert(pooled.end(), s.data(), s.data() + s.numel());
    std::sort(pooled.begin(), pooled.end());
    const int64_t n = static_cast<int64_t>(pooled.size());
    std::vector<double> candidates;
    candidates.reserve(static_cast<size_t>(ppc.threshold_candidates));
    for (int c = 0; c < ppc.threshold_candidates; ++c) {
        const double q = static_cast<double>(c + 1) / static_cast<double>(ppc.threshold_candidates + 1);
        int64_t idx = static_cast<int64_t>(q * static_cast<double>(n - 1));
        idx = std::clamp<int64_t>(idx, 0, n - 1);
        candidates.push_back(pooled[static_cast<size_t>(idx)]);
    }

    double best_thr = candidates.front();
    double best_dice = -1.0;
    for (double thr : candidates) {
        double acc = 0.0;
        for (size_t v = 0; v < val_scores.size(); ++v) {
            const Tensor& s = val_scores[v];
            Tensor bin(s.shape());
            for (int64_t i = 0; i < s.numel(); ++i) bin[i] = s[i] > thr ? 1.0f : 0.0f;
            bin = remove_small_components(bin, ppc.min_component_size, ppc.connectivity);
            acc += dice(bin, val_labels[v]);
        }
        const double mean_dice = acc / static_cast<double>(val_scores.size());
        if (mean_dice > best_dice) {
            best_dice = mean_dice;
            best_thr = thr;
        }
    }
    return best_thr;
}

} // namespace maediff
