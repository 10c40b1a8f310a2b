// SPDX-License-Identifier: Apache-2.0
#include "maediff/mae.hpp"

#include <algorithm>
#include <string>

namespace maediff {

std::vector<int> block_mapping(int dec_blocks, int enc_blocks) {
    if (dec_blocks < 1 || enc_blocks < 1 || dec_blocks > enc_blocks) {
        throw ConfigError("block_mapping requires 1 <= dec_blocks <= enc_blocks");
    }
    std::vector<int> map(static_cast<size_t>(dec_blocks));
    for (int j = 1; j <= dec_blocks; ++j) {
        map[static_cast<size_t>(j - 1)] = enc_blocks - ((j - 1) * enc_blocks) / dec_blocks;
    }
    return map;
}

namespace {

Tensor grid_position_embeddings(int64_t n_tokens, int64_t dim) {
    Tensor pos({n_tokens, dim});
    for (int64_t n = 0; n < n_tokens; ++n) {
        Tensor e = nn::sinusoidal_embedding(static_cast<double>(n), dim);
        std::copy(e.data(), e.data() + dim, pos.data() + n * dim);
    }
    return pos;
}

} // namespace

MaeModule::MaeModule(const MAEConfig& cfg, int64_t feat_channels, int64_t feat_h, int64_t feat_w, int64_t grid_r,
                     SplitMix64& rng)
    : cfg_(cfg), feat_c_(feat_channels), feat_h_(feat_h), feat_w_(feat_w) {
    if (cfg.d1 < 1 || cfg.d2 < 1) throw ConfigError("mae: hidden sizes must be positive");
    if (cfg.d1 % cfg.enc_heads != 0) throw ConfigError("mae: d1 must be divisible by enc_heads");
    if (cfg.d2 % cfg.dec_heads != 0) throw ConfigError("mae: d2 must be divisible by dec_heads");
    if (cfg.dec_blocks < 1 || cfg.dec_blocks > cfg.enc_blocks) {
        throw ConfigError("mae: need 1 <= dec_blocks <= enc_blocks");
    }
    if (grid_r % 4 != 0) throw ConfigError("mae: grid side r must be divisible by 4");
    cell_ = grid_r / 4;
    if ((cell_ & (cell_ - 1)) != 0) throw ConfigError("mae: r/4 must be a power of two");
    if (feat_h_ % cell_ != 0 || feat_w_ % cell_ != 0) {
        throw ConfigError("mae: feature map not divisible by grid cell");
    }
    grid_h_ = feat_h_ / cell_;
    grid_w_ = feat_w_ / cell_;
    n_tokens_ = grid_h_ * grid_w_;

    const int64_t cell_dim = feat_c_ * cell_ * cell_;
    enc_proj_ = nn::Linear(cell_dim, cfg.d1, rng);
    dec_proj_ = nn::Linear(cell_dim, cfg.d2, rng);
    pos_enc_ = grid_position_embeddings(n_tokens_, cfg.d1);
    pos_dec_ = grid_position_embeddings(n_tokens_, cfg.d2);

    enc_blocks_.reserve(static_cast<size_t>(cfg.enc_blocks));
    for (int i = 0; i < cfg.enc_blocks; ++i) enc_blocks_.emplace_back(cfg.d1, cfg.enc_heads, rng);
    dec_blocks_.reserve(static_cast<size_t>(cfg.dec_blocks));
    for (int i = 0; i < cfg.dec_blocks; ++i) dec_blocks_.emplace_back(cfg.d2, cfg.d1, cfg.dec_heads, rng);
    mapping_ = block_mapping(cfg.dec_blocks, cfg.enc_blocks);

    if (cfg.use_timestep) time_embed_ = nn::TimestepEmbed(cfg.d2, cfg.d2, rng);

    // x2 per transposed conv from H/r up to H/4; the last stage lands on the
    // U-Net channel count and is zero-initialized so an untrained MAE branch
    // starts as an identity fusion.
    if (cell_ == 1) {
        cell1_proj_ = nn::Conv2d(cfg.d2, feat_c_, 1, 1, 0, rng, /*init_scale=*/0.0);
    } else {
        int64_t ch = cfg.d2;
        int64_t steps = 0;
        for (int64_t c = cell_; c > 1; c /= 2) ++steps;
        for (int64_t i = 0; i < steps; ++i) {
            const bool last = (i == steps - 1);
            const int64_t out = last ? feat_c_ : std::max<int64_t>(feat_c_, ch / 2);
            deconvs_.emplace_back(ch, out, 4, 2, 1, rng, /*init_scale=*/last ? 0.0 : 1.0);
            ch = out;
        }
    }
}

void MaeModule::collect(nn::ParamRegistry& reg, const std::string& prefix) {
    enc_proj_.collect(reg, prefix + ".enc_proj");
    dec_proj_.collect(reg, prefix + ".dec_proj");
    for (size_t i = 0; i < enc_blocks_.size(); ++i) {
        enc_blocks_[i].collect(reg, prefix + ".enc" + std::to_string(i));
    }
    for (size_t i = 0; i < dec_blocks_.size(); ++i) {
        dec_blocks_[i].collect(reg, prefix + ".dec" + std::to_string(i));
    }
    if (cfg_.use_timestep) time_embed_.collect(reg, prefix + ".time");
    if (cell_ == 1) {
        cell1_proj_.collect(reg, prefix + ".up0");
    } else {
        for (size_t i = 0; i < deconvs_.size(); ++i) {
            deconvs_[i].collect(reg, prefix + ".up" + std::to_string(i));
        }
    }
}

nn::Var MaeModule::tokenize(nn::ParamBinder& pb, nn::Var feature_map, bool for_decoder) const {
    if (feature_map.shape() != std::vector<int64_t>{feat_c_, feat_h_, feat_w_}) {
        throw ConfigError("mae tokenize: feature map shape " + shape_str(feature_map.shape()) + " != expected {" +
                          std::to_string(feat_c_) + "," + std::to_string(feat_h_) + "," + std::to_string(feat_w_) + "}");
    }
    nn::Var cells = ag::extract_grid_cells(feature_map, cell_);
    nn::Var tokens = for_decoder ? dec_proj_.forward(pb, cells) : enc_proj_.forward(pb, cells);
    return ag::add_const(tokens, for_decoder ? pos_dec_ : pos_enc_);
}

std::vector<nn::Var> MaeModule::encode_visible(nn::ParamBinder& pb, nn::Var tokens,
                                               const std::vector<int64_t>& visible_idx) const {
    if (visible_idx.empty()) {
        throw ConfigError("mae: empty visible set (whole-image patch must bypass the MAE)");
    }
    nn::Var x = ag::gather_rows(tokens, visible_idx);
    std::vector<nn::Var> latents;
    latents.reserve(enc_blocks_.size());
    for (const nn::ViTBlock& blk : enc_blocks_) {
        x = blk.forward(pb, x);
        latents.push_back(x);
    }
    return latents;
}

nn::Var MaeModule::decode_with_condition(nn::ParamBinder& pb, nn::Var all_tokens,
                                         const std::vector<nn::Var>& enc_latents, int t) const {
    if (enc_latents.size() != enc_blocks_.size()) {
        throw ConfigError("mae decode: latent count does not match encoder depth");
    }
    nn::Var x = all_tokens;
    if (cfg_.use_timestep && t >= 0) {
        nn::Var e = time_embed_.forward(pb, t); // {1, d2}
        x = ag::add_bias_rows(x, ag::reshape(e, {e.numel()}));
    }
    for (size_t j = 0; j < dec_blocks_.size(); ++j) {
        const nn::Var& latent = enc_latents[static_cast<size_t>(mapping_[j] - 1)];
        x = dec_blocks_[j].forward(pb, x, latent);
    }
    return x;
}

nn::Var MaeModule::detokenize_upsample(nn::ParamBinder& pb, nn::Var z) const {
    if (z.shape() != std::vector<int64_t>{n_tokens_, cfg_.d2}) {
        throw ConfigError("mae detokenize: token matrix shape mismatch");
    }
    nn::Var x = ag::tokens_to_chw(z, grid_h_, grid_w_);
    if (cell_ == 1) return cell1_proj_.forward(pb, x);
    for (size_t i = 0; i < deconvs_.size(); ++i) {
        if (i > 0) x = ag::silu(x);
        x = deconvs_[i].forward(pb, x);
    }
    return x;
}

nn::Var MaeModule::forward(nn::ParamBinder& pb, nn::Var feature_map, const std::vector<int64_t>& visible_idx,
                           int t) const {
    nn::Var enc_tokens = tokenize(pb, feature_map, /*for_decoder=*/false);
    std::vector<nn::Var> latents = encode_visible(pb, enc_tokens, visible_idx);
    nn::Var dec_tokens = tokenize(pb, feature_map, /*for_decoder=*/true);
    nn::Var z = decode_with_condition(pb, dec_tokens, latents, t);
    return detokenize_upsample(pb, z);
}

} // namespace maediff
