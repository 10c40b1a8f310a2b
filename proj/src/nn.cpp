// SPDX-License-Identifier: Apache-2.0
#include "maediff/nn.hpp"

#include <cmath>

namespace maediff::nn {

namespace {

Tensor normal_init(std::vector<int64_t> shape, int64_t fan_in, SplitMix64& rng, double scale) {
    if (scale == 0.0) return Tensor(std::move(shape));
    return Tensor::randn(std::move(shape), rng, scale * std::sqrt(1.0 / static_cast<double>(fan_in)));
}

} // namespace

Tensor sinusoidal_embedding(double position, int64_t dim) {
    const int64_t half = dim / 2;
    Tensor e({dim});
    for (int64_t i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        e[i] = static_cast<float>(std::cos(position * freq));
        e[half + i] = static_cast<float>(std::sin(position * freq));
    }
    if (dim % 2 == 1) e[dim - 1] = 0.0f;
    return e;
}

// ---- Linear ----

Linear::Linear(int64_t in, int64_t out, SplitMix64& rng, double init_scale) {
    w.value = normal_init({out, in}, in, rng, init_scale);
    b.value = Tensor({out});
}

void Linear::collect(ParamRegistry& reg, const std::string& prefix) {
    w.name = prefix + ".w";
    b.name = prefix + ".b";
    reg.add(&w);
    reg.add(&b);
}

Var Linear::forward(ParamBinder& pb, Var x) const {
    return ag::linear(x, pb.bind(const_cast<Parameter&>(w)), pb.bind(const_cast<Parameter&>(b)));
}

// ---- Conv2d ----

Conv2d::Conv2d(int64_t cin, int64_t cout, int64_t k, int64_t stride_, int64_t pad_, SplitMix64& rng,
               double init_scale)
    : stride(stride_), pad(pad_) {
    w.value = normal_init({cout, cin, k, k}, cin * k * k, rng, init_scale);
    b.value = Tensor({cout});
}

void Conv2d::collect(ParamRegistry& reg, const std::string& prefix) {
    w.name = prefix + ".w";
    b.name = prefix + ".b";
    reg.add(&w);
    reg.add(&b);
}

Var Conv2d::forward(ParamBinder& pb, Var x) const {
    return ag::conv2d(x, pb.bind(const_cast<Parameter&>(w)), pb.bind(const_cast<Parameter&>(b)), stride, pad);
}

// ---- ConvTranspose2d ----

ConvTranspose2d::ConvTranspose2d(int64_t cin, int64_t cout, int64_t k, int64_t stride_, int64_t pad_, SplitMix64& rng,
                                 double init_scale)
    : stride(stride_), pad(pad_) {
    w.value = normal_init({cin, cout, k, k}, cin * k * k, rng, init_scale);
    b.value = Tensor({cout});
}

void ConvTranspose2d::collect(ParamRegistry& reg, const std::string& prefix) {
    w.name = prefix + ".w";
    b.name = prefix + ".b";
    reg.add(&w);
    reg.add(&b);
}

Var ConvTranspose2d::forward(ParamBinder& pb, Var x) const {
    return ag::conv_transpose2d(x, pb.bind(const_cast<Parameter&>(w)), pb.bind(const_cast<Parameter&>(b)), stride,
                                pad);
}

// ---- norms ----

LayerNorm::LayerNorm(int64_t dim) {
    gamma.value = Tensor({dim}, 1.0f);
    beta.value = Tensor({dim});
}

void LayerNorm::collect(ParamRegistry& reg, const std::string& prefix) {
    gamma.name = prefix + ".gamma";
    beta.name = prefix + ".beta";
    reg.add(&gamma);
    reg.add(&beta);
}

Var LayerNorm::forward(ParamBinder& pb, Var x) const {
    return ag::layernorm(x, pb.bind(const_cast<Parameter&>(gamma)), pb.bind(const_cast<Parameter&>(beta)));
}

GroupNorm::GroupNorm(int64_t channels, int64_t max_groups) {
    groups = std::min<int64_t>(max_groups, channels);
    while (channels % groups != 0) --groups;
    gamma.value = Tensor({channels}, 1.0f);
    beta.value = Tensor({channels});
}

void GroupNorm::collect(ParamRegistry& reg, const std::string& prefix) {
    gamma.name = prefix + ".gamma";
    beta.name = prefix + ".beta";
    reg.add(&gamma);
    reg.add(&beta);
}

Var GroupNorm::forward(ParamBinder& pb, Var x) const {
    return ag::groupnorm(x, groups, pb.bind(const_cast<Parameter&>(gamma)), pb.bind(const_cast<Parameter&>(beta)));
}

// ---- attention ----

MultiheadAttention::MultiheadAttention(int64_t d_model, int64_t d_kv_in, int64_t heads_, SplitMix64& rng)
    : q(d_model, d_model, rng),
      k(d_kv_in, d_model, rng),
      v(d_kv_in, d_model, rng),
      proj(d_model, d_model, rng, /*init_scale=*/0.0),
      heads(heads_) {
    if (d_model % heads_ != 0) throw ConfigError("attention width not divisible by head count");
}

void MultiheadAttention::collect(ParamRegistry& reg, const std::string& prefix) {
    q.collect(reg, prefix + ".q");
    k.collect(reg, prefix + ".k");
    v.collect(reg, prefix + ".v");
    proj.collect(reg, prefix + ".proj");
}

Var MultiheadAttention::forward(ParamBinder& pb, Var x_q, Var x_kv) const {
    const int64_t d_model = q.out();
    const int64_t dh = d_model / heads;
    Var Q = q.forward(pb, x_q);
    Var K = k.forward(pb, x_kv);
    Var V = v.forward(pb, x_kv);
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int64_t h = 0; h < heads; ++h) {
        Var Qh = ag::split_cols(Q, h * dh, dh);
        Var Kh = ag::split_cols(K, h * dh, dh);
        Var Vh = ag::split_cols(V, h * dh, dh);
        Var scores = ag::scale(ag::matmul(Qh, Kh, false, true), att_scale);
        Var attnw = ag::softmax_rows(scores);
        outs.push_back(ag::matmul(attnw, Vh));
    }
    return proj.forward(pb, ag::concat_cols(outs));
}

// ---- MLP / blocks ----

Mlp::Mlp(int64_t dim, int64_t hidden, SplitMix64& rng) : fc1(dim, hidden, rng), fc2(hidden, dim, rng) {}

void Mlp::collect(ParamRegistry& reg, const std::string& prefix) {
    fc1.collect(reg, prefix + ".fc1");
    fc2.collect(reg, prefix + ".fc2");
}

Var Mlp::forward(ParamBinder& pb, Var x) const { return fc2.forward(pb, ag::gelu(fc1.forward(pb, x))); }

ViTBlock::ViTBlock(int64_t dim, int64_t heads, SplitMix64& rng)
    : ln1(dim), ln2(dim), attn(dim, dim, heads, rng), mlp(dim, 4 * dim, rng) {}

void ViTBlock::collect(ParamRegistry& reg, const std::string& prefix) {
    ln1.collect(reg, prefix + ".ln1");
    attn.collect(reg, prefix + ".attn");
    ln2.collect(reg, prefix + ".ln2");
    mlp.collect(reg, prefix + ".mlp");
}

Var ViTBlock::forward(ParamBinder& pb, Var x) const {
    Var h = ln1.forward(pb, x);
    x = ag::add(x, attn.forward(pb, h, h));
    x = ag::add(x, mlp.forward(pb, ln2.forward(pb, x)));
    return x;
}

CrossViTBlock::CrossViTBlock(int64_t dim, int64_t d_latent, int64_t heads, SplitMix64& rng)
    : ln_cross(dim),
      ln1(dim),
      ln2(dim),
      cross(dim, d_latent, heads, rng),
      self(dim, dim, heads, rng),
      mlp(dim, 4 * dim, rng) {}

void CrossViTBlock::collect(ParamRegistry& reg, const std::string& prefix) {
    ln_cross.collect(reg, prefix + ".ln_cross");
    cross.collect(reg, prefix + ".cross");
    ln1.collect(reg, prefix + ".ln1");
    self.collect(reg, prefix + ".self");
    ln2.collect(reg, prefix + ".ln2");
    mlp.collect(reg, prefix + ".mlp");
}

Var CrossViTBlock::forward(ParamBinder& pb, Var x, Var latent) const {
    x = ag::add(x, cross.forward(pb, ln_cross.forward(pb, x), latent));
    Var h = ln1.forward(pb, x);
    x = ag::add(x, self.forward(pb, h, h));
    x = ag::add(x, mlp.forward(pb, ln2.forward(pb, x)));
    return x;
}

// ---- U-Net pieces ----

ResBlock::ResBlock(int64_t cin, int64_t cout, int64_t temb_dim, SplitMix64& rng)
    : gn1(cin),
      gn2(cout),
      conv1(cin, cout, 3, 1, 1, rng),
      conv2(cout, cout, 3, 1, 1, rng, /*init_scale=*/0.2),
      emb_proj(temb_dim, cout, rng) {
    if (cin != cout) {
        skip = Conv2d(cin, cout, 1, 1, 0, rng);
        has_skip = true;
    }
}

void ResBlock::collect(ParamRegistry& reg, const std::string& prefix) {
    gn1.collect(reg, prefix + ".gn1");
    conv1.collect(reg, prefix + ".conv1");
    emb_proj.collect(reg, prefix + ".emb");
    gn2.collect(reg, prefix + ".gn2");
    conv2.collect(reg, prefix + ".conv2");
    if (has_skip) skip.collect(reg, prefix + ".skip");
}

Var ResBlock::forward(ParamBinder& pb, Var x, Var temb) const {
    Var h = conv1.forward(pb, ag::silu(gn1.forward(pb, x)));
    // temb: {1, temb_dim} -> {cout} channel offsets
    Var e = emb_proj.forward(pb, ag::silu(temb));
    h = ag::add_bias_chw(h, ag::reshape(e, {e.numel()}));
    h = conv2.forward(pb, ag::silu(gn2.forward(pb, h)));
    Var s = has_skip ? skip.forward(pb, x) : x;
    return ag::add(h, s);
}

SpatialAttention::SpatialAttention(int64_t channels, int64_t heads, SplitMix64& rng)
    : gn(channels), attn(channels, channels, heads, rng) {}

void SpatialAttention::collect(ParamRegistry& reg, const std::string& prefix) {
    gn.collect(reg, prefix + ".gn");
    attn.collect(reg, prefix + ".attn");
}

Var SpatialAttention::forward(ParamBinder& pb, Var x) const {
    const int64_t h = x.shape()[1], w = x.shape()[2];
    Var tokens = ag::chw_to_tokens(gn.forward(pb, x));
    Var out = attn.forward(pb, tokens, tokens);
    return ag::add(x, ag::tokens_to_chw(out, h, w));
}

Downsample::Downsample(int64_t channels, SplitMix64& rng) : conv(channels, channels, 3, 2, 1, rng) {}

void Downsample::collect(ParamRegistry& reg, const std::string& prefix) { conv.collect(reg, prefix + ".conv"); }

Var Downsample::forward(ParamBinder& pb, Var x) const { return conv.forward(pb, x); }

Upsample::Upsample(int64_t channels, SplitMix64& rng) : conv(channels, channels, 3, 1, 1, rng) {}

void Upsample::collect(ParamRegistry& reg, const std::string& prefix) { conv.collect(reg, prefix + ".conv"); }

Var Upsample::forward(ParamBinder& pb, Var x) const { return conv.forward(pb, ag::upsample_nearest2x(x)); }

TimestepEmbed::TimestepEmbed(int64_t base_dim_, int64_t embed_dim, SplitMix64& rng)
    : fc1(base_dim_, embed_dim, rng), fc2(embed_dim, embed_dim, rng), base_dim(base_dim_) {}

void TimestepEmbed::collect(ParamRegistry& reg, const std::string& prefix) {
    fc1.collect(reg, prefix + ".fc1");
    fc2.collect(reg, prefix + ".fc2");
}

Var TimestepEmbed::forward(ParamBinder& pb, int t) const {
    Tensor base = sinusoidal_embedding(static_cast<double>(t), base_dim).reshaped({1, base_dim});
    Var b = pb.graph().input(std::move(base), false);
    return fc2.forward(pb, ag::silu(fc1.forward(pb, b)));
}

} // namespace maediff::nn
