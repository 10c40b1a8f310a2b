// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "maediff/nn.hpp"

namespace maediff {

struct MAEConfig {
    int d1 = 384;       // encoder hidden size
    int enc_blocks = 12;
    int enc_heads = 6;
    int d2 = 512;       // decoder hidden size
    int dec_blocks = 8;
    int dec_heads = 16;
    bool use_timestep = false; // timestep tokens are off per the reference setup
};

// Decoder block j (1-based) attends to encoder block e(j) = enc - floor((j-1)*enc/dec):
// a reversed, uniformly spaced (U-shaped) assignment. (8,12) -> [12,11,9,8,6,5,3,2].
std::vector<int> block_mapping(int dec_blocks, int enc_blocks);

// Masked-autoencoder mechanism on the U-Net's C x H/4 x W/4 feature map.
// Grid tokens are (r/4)x(r/4) feature cells; the encoder sees only visible
// grids, the decoder processes all N tokens and cross-attends to the encoder
// latents block-by-block, and the result is reshaped and deconvolved back to
// the feature-map geometry.
class MaeModule {
public:
    MaeModule() = default;
    MaeModule(const MAEConfig& cfg, int64_t feat_channels, int64_t feat_h, int64_t feat_w, int64_t grid_r,
              SplitMix64& rng);

    void collect(nn::ParamRegistry& reg, const std::string& prefix);

    // Linear projection of grid cells plus fixed sinusoidal position
    // embeddings. `for_decoder` selects between the two distinct projections.
    nn::Var tokenize(nn::ParamBinder& pb, nn::Var feature_map, bool for_decoder) const;

    // Runs the encoder blocks on the visible tokens only; returns every
    // block's output for the U-shaped conditioning. Throws ConfigError when
    // visible_idx is empty (the caller handles the whole-image-patch case by
    // bypassing the MAE).
    std::vector<nn::Var> encode_visible(nn::ParamBinder& pb, nn::Var tokens,
                                        const std::vector<int64_t>& visible_idx) const;

    // Cross-attention decoder over all N tokens. `t` < 0 disables the
    // optional timestep token offset (also disabled unless cfg.use_timestep).
    nn::Var decode_with_condition(nn::ParamBinder& pb, nn::Var all_tokens,
                                  const std::vector<nn::Var>& enc_latents, int t) const;

    // {N,d2} -> {d2, H/r, W/r} -> deconvolution ladder -> {C, H/4, W/4}.
    nn::Var detokenize_upsample(nn::ParamBinder& pb, nn::Var z) const;

    // Full branch: tokenize (enc+dec), encode visible, decode, detokenize.
    nn::Var forward(nn::ParamBinder& pb, nn::Var feature_map, const std::vector<int64_t>& visible_idx, int t) const;

    int64_t num_tokens() const { return n_tokens_; }
    int64_t cell() const { return cell_; }
    const std::vector<int>& mapping() const { return mapping_; }
    const MAEConfig& config() const { return cfg_; }

private:
    MAEConfig cfg_;
    int64_t feat_c_ = 0, feat_h_ = 0, feat_w_ = 0;
    int64_t cell_ = 0, grid_h_ = 0, grid_w_ = 0, n_tokens_ = 0;
    Tensor pos_enc_, pos_dec_; // fixed sinusoidal embeddings of the grid index
    nn::Linear enc_proj_, dec_proj_;
    std::vector<nn::ViTBlock> enc_blocks_;
    std::vector<nn::CrossViTBlock> dec_blocks_;
    std::vector<int> mapping_;
    nn::TimestepEmbed time_embed_;
    std::vector<nn::ConvTranspose2d> deconvs_;
    nn::Conv2d cell1_proj_; // used instead of deconvs when cell == 1
};

} // namespace maediff
