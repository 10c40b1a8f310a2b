// SPDX-License-Identifier: Apache-2.0
#include "maediff/unet.hpp"

#include <algorithm>
#include <string>

namespace maediff {

bool UNet::attn_at(int64_t side) const {
    if (!ucfg_.use_global_attention) return false;
    return std::find(ucfg_.attention_resolutions.begin(), ucfg_.attention_resolutions.end(), static_cast<int>(side)) !=
           ucfg_.attention_resolutions.end();
}

UNet::UNet(const UNetConfig& ucfg, const MAEConfig& mcfg, int64_t H, int64_t W, int64_t grid_r, SplitMix64& rng)
    : ucfg_(ucfg), H_(H), W_(W) {
    if (ucfg.channel_mults.size() != 2) {
        throw ConfigError("unet: exactly two downsampling levels are required (fusion at H/4)");
    }
    if (H % 4 != 0 || W % 4 != 0) throw ConfigError("unet: input sides must be divisible by 4");
    if (ucfg.base_channels < 1 || ucfg.res_blocks_per_level < 1) {
        throw ConfigError("unet: base_channels and res_blocks_per_level must be positive");
    }
    c0_ = static_cast<int64_t>(ucfg.base_channels) * ucfg.channel_mults[0];
    c1_ = static_cast<int64_t>(ucfg.base_channels) * ucfg.channel_mults[1];
    temb_dim_ = ucfg.time_embed_dim > 0 ? ucfg.time_embed_dim : 4 * ucfg.base_channels;
    if (ucfg.use_global_attention) {
        if (c0_ % ucfg.num_heads != 0 || c1_ % ucfg.num_heads != 0) {
            throw ConfigError("unet: channel widths must be divisible by num_heads for global attention");
        }
        if (ucfg_.attention_resolutions.empty()) {
            ucfg_.attention_resolutions = {static_cast<int>(H / 2), static_cast<int>(H / 4)};
        }
    }

    const int n = ucfg.res_blocks_per_level;
    temb_ = nn::TimestepEmbed(ucfg.base_channels, temb_dim_, rng);
    stem_ = nn::Conv2d(ucfg.in_channels, c0_, 3, 1, 1, rng);

    auto maybe_attn = [&](std::vector<std::unique_ptr<nn::SpatialAttention>>& slot, int64_t side, int64_t ch) {
        slot.push_back(attn_at(side) ? std::make_unique<nn::SpatialAttention>(ch, ucfg.num_heads, rng) : nullptr);
    };

    for (int i = 0; i < n; ++i) {
        enc0_.emplace_back(c0_, c0_, temb_dim_, rng);
        maybe_attn(enc0_attn_, H, c0_);
    }
    down0_ = nn::Downsample(c0_, rng);
    for (int i = 0; i < n; ++i) {
        enc1_.emplace_back(i == 0 ? c0_ : c1_, c1_, temb_dim_, rng);
        maybe_attn(enc1_attn_, H / 2, c1_);
    }
    down1_ = nn::Downsample(c1_, rng);

    if (ucfg.use_mae) {
        mae_ = std::make_unique<MaeModule>(mcfg, c1_, H / 4, W / 4, grid_r, rng);
    }

    mid1_ = nn::ResBlock(c1_, c1_, temb_dim_, rng);
    if (attn_at(H / 4)) mid_attn_ = std::make_unique<nn::SpatialAttention>(c1_, ucfg.num_heads, rng);
    mid2_ = nn::ResBlock(c1_, c1_, temb_dim_, rng);

    up1_ = nn::Upsample(c1_, rng);
    for (int i = 0; i < n + 1; ++i) {
        // the first n blocks consume the level-1 res skips (c1), the last one
        // consumes the down0 transition skip (c0)
        const int64_t skip_ch = i < n ? c1_ : c0_;
        dec1_.emplace_back(c1_ + skip_ch, c1_, temb_dim_, rng);
        maybe_attn(dec1_attn_, H / 2, c1_);
    }
    up0_ = nn::Upsample(c1_, rng);
    for (int i = 0; i < n + 1; ++i) {
        const int64_t in_ch = (i == 0 ? c1_ : c0_) + c0_;
        dec0_.emplace_back(in_ch, c0_, temb_dim_, rng);
        maybe_attn(dec0_attn_, H, c0_);
    }
    out_norm_ = nn::GroupNorm(c0_);
    out_conv_ = nn::Conv2d(c0_, ucfg.in_channels, 3, 1, 1, rng, /*init_scale=*/0.2);
}

void UNet::collect(nn::ParamRegistry& reg, const std::string& prefix) {
    temb_.collect(reg, prefix + ".temb");
    stem_.collect(reg, prefix + ".stem");
    for (size_t i = 0; i < enc0_.size(); ++i) {
        enc0_[i].collect(reg, prefix + ".enc0." + std::to_string(i));
        if (enc0_attn_[i]) enc0_attn_[i]->collect(reg, prefix + ".enc0." + std::to_string(i) + ".att");
    }
    down0_.collect(reg, prefix + ".down0");
    for (size_t i = 0; i < enc1_.size(); ++i) {
        enc1_[i].collect(reg, prefix + ".enc1." + std::to_string(i));
        if (enc1_attn_[i]) enc1_attn_[i]->collect(reg, prefix + ".enc1." + std::to_string(i) + ".att");
    }
    down1_.collect(reg, prefix + ".down1");
    if (mae_) mae_->collect(reg, "mae");
    mid1_.collect(reg, prefix + ".mid1");
    if (mid_attn_) mid_attn_->collect(reg, prefix + ".mid.att");
    mid2_.collect(reg, prefix + ".mid2");
    up1_.collect(reg, prefix + ".up1");
    for (size_t i = 0; i < dec1_.size(); ++i) {
        dec1_[i].collect(reg, prefix + ".dec1." + std::to_string(i));
        if (dec1_attn_[i]) dec1_attn_[i]->collect(reg, prefix + ".dec1." + std::to_string(i) + ".att");
    }
    up0_.collect(reg, prefix + ".up0");
    for (size_t i = 0; i < dec0_.size(); ++i) {
        dec0_[i].collect(reg, prefix + ".dec0." + std::to_string(i));
        if (dec0_attn_[i]) dec0_attn_[i]->collect(reg, prefix + ".dec0." + std::to_string(i) + ".att");
    }
    out_norm_.collect(reg, prefix + ".out_norm");
    out_conv_.collect(reg, prefix + ".out_conv");
}

UNet::Encoded UNet::encode(nn::ParamBinder& pb, nn::Var x, nn::Var temb) const {
    if (x.shape() != std::vector<int64_t>{ucfg_.in_channels, H_, W_}) {
        throw ConfigError("unet: input shape " + shape_str(x.shape()) + " != configured geometry");
    }
    Encoded enc;
    nn::Var h = stem_.forward(pb, x);
    enc.skips.push_back(h);
    for (size_t i = 0; i < enc0_.size(); ++i) {
        h = enc0_[i].forward(pb, h, temb);
        if (enc0_attn_[i]) h = enc0_attn_[i]->forward(pb, h);
        enc.skips.push_back(h);
    }
    h = down0_.forward(pb, h);
    enc.skips.push_back(h);
    for (size_t i = 0; i < enc1_.size(); ++i) {
        h = enc1_[i].forward(pb, h, temb);
        if (enc1_attn_[i]) h = enc1_attn_[i]->forward(pb, h);
        enc.skips.push_back(h);
    }
    enc.f = down1_.forward(pb, h);
    return enc;
}

nn::Var UNet::forward(nn::ParamBinder& pb, nn::Var x, int t, const std::vector<int64_t>& visible_grids) const {
    nn::Var temb = temb_.forward(pb, t);
    Encoded enc = encode(pb, x, temb);
    nn::Var h = enc.f;
    if (mae_ && !visible_grids.empty()) {
        h = fuse_mae(h, mae_->forward(pb, h, visible_grids, t));
    }
    h = mid1_.forward(pb, h, temb);
    if (mid_attn_) h = mid_attn_->forward(pb, h);
    h = mid2_.forward(pb, h, temb);

    std::vector<nn::Var>& skips = enc.skips;
    h = up1_.forward(pb, h);
    for (size_t i = 0; i < dec1_.size(); ++i) {
        h = dec1_[i].forward(pb, ag::concat_channels(h, skips.back()), temb);
        skips.pop_back();
        if (dec1_attn_[i]) h = dec1_attn_[i]->forward(pb, h);
    }
    h = up0_.forward(pb, h);
    for (size_t i = 0; i < dec0_.size(); ++i) {
        h = dec0_[i].forward(pb, ag::concat_channels(h, skips.back()), temb);
        skips.pop_back();
        if (dec0_attn_[i]) h = dec0_attn_[i]->forward(pb, h);
    }
    return out_conv_.forward(pb, ag::silu(out_norm_.forward(pb, h)));
}

// ---- DenoiserModel ----

DenoiserModel::DenoiserModel(const UNetConfig& ucfg, const MAEConfig& mcfg, const PatchPlan& plan, uint64_t init_seed)
    : ucfg_(ucfg), mcfg_(mcfg), plan_(plan) {
    SplitMix64 rng(derive_seed(init_seed, /*tag=*/0x1A17u));
    net_ = std::make_unique<UNet>(ucfg, mcfg, plan.H, plan.W, plan.r, rng);
    net_->collect(registry_, "unet");
}

std::vector<int64_t> DenoiserModel::visible_grids_for_patch(int64_t k) const {
    std::vector<int64_t> masked = grids_for_patch(plan_, k);
    std::vector<bool> is_masked(static_cast<size_t>(plan_.n_grids), false);
    for (int64_t g : masked) is_masked[static_cast<size_t>(g)] = true;
    std::vector<int64_t> visible;
    visible.reserve(static_cast<size_t>(plan_.n_grids - static_cast<int64_t>(masked.size())));
    for (int64_t g = 0; g < plan_.n_grids; ++g) {
        if (!is_masked[static_cast<size_t>(g)]) visible.push_back(g);
    }
    return visible;
}

nn::Var DenoiserModel::forward(nn::ParamBinder& pb, const Tensor& x_tilde, int t, int64_t patch_index) const {
    if (x_tilde.shape() != std::vector<int64_t>{plan_.H, plan_.W}) {
        throw ConfigError("denoiser: input shape " + shape_str(x_tilde.shape()) + " != plan geometry");
    }
    nn::Var x = pb.graph().input(x_tilde.reshaped({ucfg_.in_channels, plan_.H, plan_.W}), false);
    return net_->forward(pb, x, t, visible_grids_for_patch(patch_index));
}

Tensor DenoiserModel::predict_x0(const Tensor& x_tilde, int64_t patch_index, int t) const {
    ag::Graph g(/*grad_enabled=*/false);
    nn::ParamBinder pb(g);
    nn::Var out = forward(pb, x_tilde, t, patch_index);
    return out.val().reshaped({plan_.H, plan_.W});
}

int64_t DenoiserModel::mae_param_count() const {
    int64_t n = 0;
    for (const nn::Parameter* p : registry_.params()) {
        if (p->name.rfind("mae.", 0) == 0) n += p->value.numel();
    }
    return n;
}

void DenoiserModel::randomize_all(uint64_t seed, double stddev) {
    SplitMix64 rng(derive_seed(seed, /*tag=*/0x5EEDu));
    for (nn::Parameter* p : registry_.params()) {
        // keep norm gains near 1 so signal is not annihilated
        const bool is_gain = p->name.size() >= 6 && p->name.compare(p->name.size() - 6, 6, ".gamma") == 0;
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            p->value[i] = static_cast<float>((is_gain ? 1.0 : 0.0) + rng.gaussian() * stddev);
        }
    }
}

} // namespace maediff
