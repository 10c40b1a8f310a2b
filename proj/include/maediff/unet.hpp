// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "maediff/mae.hpp"
#include "maediff/nn.hpp"
#include "maediff/patching.hpp"

namespace maediff {

struct UNetConfig {
    int in_channels = 1;
    int base_channels = 64;
    std::vector<int> channel_mults = {1, 2}; // exactly two downsamplings before the fusion point
    int res_blocks_per_level = 2;
    std::vector<int> attention_resolutions;  // spatial sides; empty -> {H/2, H/4}
    int time_embed_dim = 0;                  // 0 -> 4 * base_channels
    int num_heads = 4;
    bool use_global_attention = true;
    bool use_mae = true;
};

// Diffusion U-Net with the MAE fusion point at the C x H/4 x W/4 feature map.
// The network predicts the denoised image directly.
class UNet {
public:
    struct Encoded {
        nn::Var f;                 // {C, H/4, W/4}
        std::vector<nn::Var> skips;
    };

    UNet(const UNetConfig& ucfg, const MAEConfig& mcfg, int64_t H, int64_t W, int64_t grid_r, SplitMix64& rng);

    void collect(nn::ParamRegistry& reg, const std::string& prefix);

    nn::Var embed_timestep(nn::ParamBinder& pb, int t) const { return temb_.forward(pb, t); }

    Encoded encode(nn::ParamBinder& pb, nn::Var x, nn::Var temb) const;

    // Full pass. visible_grids lists the grid tokens outside the noised
    // patch; when empty (whole-image patch) or use_mae is off, the MAE branch
    // is bypassed and the fusion is the identity.
    nn::Var forward(nn::ParamBinder& pb, nn::Var x, int t, const std::vector<int64_t>& visible_grids) const;

    const MaeModule* mae() const { return mae_.get(); }
    int64_t fusion_channels() const { return c1_; }
    int64_t input_h() const { return H_; }
    int64_t input_w() const { return W_; }
    const UNetConfig& config() const { return ucfg_; }

private:
    bool attn_at(int64_t side) const;

    UNetConfig ucfg_;
    int64_t H_ = 0, W_ = 0;
    int64_t c0_ = 0, c1_ = 0, temb_dim_ = 0;

    nn::TimestepEmbed temb_;
    nn::Conv2d stem_;
    std::vector<nn::ResBlock> enc0_, enc1_;
    std::vector<std::unique_ptr<nn::SpatialAttention>> enc0_attn_, enc1_attn_; // nullptr when absent
    nn::Downsample down0_, down1_;
    std::unique_ptr<MaeModule> mae_;
    nn::ResBlock mid1_, mid2_;
    std::unique_ptr<nn::SpatialAttention> mid_attn_;
    nn::Upsample up1_, up0_;
    std::vector<nn::ResBlock> dec1_, dec0_;
    std::vector<std::unique_ptr<nn::SpatialAttention>> dec1_attn_, dec0_attn_;
    nn::GroupNorm out_norm_;
    nn::Conv2d out_conv_;
};

// fuse_mae: element-wise sum of the U-Net feature map and the MAE output.
inline nn::Var fuse_mae(nn::Var f, nn::Var mae_out) { return ag::add(f, mae_out); }

// The trained denoiser x0_rec = p_theta(x_tilde_t, x_hat_0, t). x_hat_0 is
// implicit: it is embedded in x_tilde via the mask composition and reaches
// the MAE through the visible grid tokens.
class DenoiserModel {
public:
    DenoiserModel(const UNetConfig& ucfg, const MAEConfig& mcfg, const PatchPlan& plan, uint64_t init_seed);

    // Training-path forward on one sample; caller owns the graph.
    nn::Var forward(nn::ParamBinder& pb, const Tensor& x_tilde, int t, int64_t patch_index) const;

    // Inference: no-grad forward returning a plain {H,W} tensor.
    Tensor predict_x0(const Tensor& x_tilde, int64_t patch_index, int t) const;

    nn::ParamRegistry& registry() { return registry_; }
    const nn::ParamRegistry& registry() const { return registry_; }
    const PatchPlan& plan() const { return plan_; }
    const UNet& net() const { return *net_; }

    int64_t param_count() const { return registry_.total_params(); }
    int64_t mae_param_count() const;

    // Reinitializes every parameter (including normally zero-initialized
    // output projections) from N(0, stddev); used by sensitivity tests.
    void randomize_all(uint64_t seed, double stddev = 0.05);

    std::vector<int64_t> visible_grids_for_patch(int64_t k) const;

private:
    UNetConfig ucfg_;
    MAEConfig mcfg_;
    PatchPlan plan_;
    std::unique_ptr<UNet> net_;
    nn::ParamRegistry registry_;
};

} // namespace maediff
