// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "maediff/autograd.hpp"
#include "maediff/rng.hpp"
#include "maediff/tensor.hpp"

namespace maediff::nn {

using ag::Graph;
using ag::Var;

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    void ensure_grad() {
        if (!grad.same_shape(value)) grad = Tensor(value.shape());
    }
};

// Flat list of parameter pointers in registration order. Registration order
// is the canonical checkpoint and optimizer order, so it must be stable
// across runs (it is: module construction is deterministic).
class ParamRegistry {
public:
    void add(Parameter* p) {
        p->ensure_grad();
        params_.push_back(p);
    }
    const std::vector<Parameter*>& params() const { return params_; }
    int64_t total_params() const {
        int64_t n = 0;
        for (const Parameter* p : params_) n += p->value.numel();
        return n;
    }
    void zero_grads() {
        for (Parameter* p : params_) p->grad.fill(0.0f);
    }
    Parameter* find(const std::string& name) const {
        for (Parameter* p : params_) {
            if (p->name == name) return p;
        }
        return nullptr;
    }

private:
    std::vector<Parameter*> params_;
};

// Leaf var bound to a parameter: records the node so the caller can harvest
// d(loss)/d(param) from the graph after backward.
struct BoundParam {
    Parameter* param;
    Var var;
};

// Per-forward bookkeeping of parameter leaves, for deterministic gradient
// merging across worker graphs.
class ParamBinder {
public:
    explicit ParamBinder(Graph& g) : graph_(&g) {}
    Var bind(Parameter& p) {
        Var v = graph_->input(p.value, true);
        bound_.push_back({&p, v});
        return v;
    }
    // grad scale applied while merging; call in a fixed order across graphs.
    void accumulate_grads(double scale) const {
        for (const BoundParam& bp : bound_) {
            Tensor g = graph_->leaf_grad(bp.var);
            bp.param->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) {
                bp.param->grad[i] += static_cast<float>(scale * g[i]);
            }
        }
    }
    Graph& graph() { return *graph_; }

private:
    Graph* graph_;
    std::vector<BoundParam> bound_;
};

// Sinusoidal embedding of a scalar position (timestep or grid index):
// first half cos(p * f_i), second half sin(p * f_i), f_i = 10000^(-i/half).
Tensor sinusoidal_embedding(double position, int64_t dim);

// ---- layers ----

// init_scale multiplies the N(0, sqrt(1/fan_in)) draw; 0 gives exact zeros
// (used for attention output projections and the MAE fusion gate).

struct Linear {
    Parameter w, b;
    Linear() = default;
    Linear(int64_t in, int64_t out, SplitMix64& rng, double init_scale = 1.0);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x) const;
    int64_t in() const { return w.value.dim(1); }
    int64_t out() const { return w.value.dim(0); }
};

struct Conv2d {
    Parameter w, b;
    int64_t stride = 1, pad = 1;
    Conv2d() = default;
    Conv2d(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad, SplitMix64& rng,
           double init_scale = 1.0);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x) const;
};

struct ConvTranspose2d {
    Parameter w, b; // w: {Cin, Cout, k, k}
    int64_t stride = 2, pad = 1;
    ConvTranspose2d() = default;
    ConvTranspose2d(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad, SplitMix64& rng,
                    double init_scale = 1.0);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x) const;
};

struct LayerNorm {
    Parameter gamma, beta;
    LayerNorm() = default;
    explicit LayerNorm(int64_t dim);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x) const;
};

struct GroupNorm {
    Parameter gamma, beta;
    int64_t groups = 1;
    GroupNorm() = default;
    GroupNorm(int64_t channels, int64_t max_groups = 32);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x) const;
};

// Multi-head attention over token matrices. Self-attention when kv input is
// the query input; cross-attention otherwise (kv features may have a
// different width, covering the d1 -> d2 projection of encoder latents).
struct MultiheadAttention {
    Linear q, k, v, proj;
    int64_t heads = 1;
    MultiheadAttention() = default;
    MultiheadAttention(int64_t d_model, int64_t d_kv_in, int64_t heads, SplitMix64& rng);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x_q, Var x_kv) const;
};

struct Mlp {
    Linear fc1, fc2;
    Mlp() = default;
    Mlp(int64_t dim, int64_t hidden, SplitMix64& rng);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x) const;
};

// Pre-norm ViT block: x += attn(ln1(x)); x += mlp(ln2(x)).
struct ViTBlock {
    LayerNorm ln1, ln2;
    MultiheadAttention attn;
    Mlp mlp;
    ViTBlock() = default;
    ViTBlock(int64_t dim, int64_t heads, SplitMix64& rng);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x) const;
};

// Decoder block with a cross-attention layer ahead of the usual ViT pair:
// x += cross(ln_c(x), latent); x += self(ln1(x)); x += mlp(ln2(x)).
struct CrossViTBlock {
    LayerNorm ln_cross, ln1, ln2;
    MultiheadAttention cross, self;
    Mlp mlp;
    CrossViTBlock() = default;
    CrossViTBlock(int64_t dim, int64_t d_latent, int64_t heads, SplitMix64& rng);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x, Var latent) const;
};

// Guided-diffusion style residual block with additive timestep conditioning:
// h = conv1(silu(gn1(x))); h += emb_proj(silu(temb)); h = conv2(silu(gn2(h)));
// out = h + skip(x). conv2 starts at a damped scale so short training runs
// open the residual branch quickly.
struct ResBlock {
    GroupNorm gn1, gn2;
    Conv2d conv1, conv2;
    Linear emb_proj;
    Conv2d skip; // 1x1, only when cin != cout
    bool has_skip = false;
    ResBlock() = default;
    ResBlock(int64_t cin, int64_t cout, int64_t temb_dim, SplitMix64& rng);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x, Var temb) const;
};

// Global self-attention over all spatial positions at one resolution:
// out = x + proj(attn(tokens(gn(x)))). proj is zero-initialized.
struct SpatialAttention {
    GroupNorm gn;
    MultiheadAttention attn;
    SpatialAttention() = default;
    SpatialAttention(int64_t channels, int64_t heads, SplitMix64& rng);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x) const;
};

struct Downsample {
    Conv2d conv; // k3 s2 p1
    Downsample() = default;
    Downsample(int64_t channels, SplitMix64& rng);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x) const;
};

struct Upsample {
    Conv2d conv; // nearest 2x then k3 s1 p1
    Upsample() = default;
    Upsample(int64_t channels, SplitMix64& rng);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, Var x) const;
};

// Sinusoidal base of width `base_dim`, then Linear -> SiLU -> Linear.
struct TimestepEmbed {
    Linear fc1, fc2;
    int64_t base_dim = 0;
    TimestepEmbed() = default;
    TimestepEmbed(int64_t base_dim, int64_t embed_dim, SplitMix64& rng);
    void collect(ParamRegistry& reg, const std::string& prefix);
    Var forward(ParamBinder& pb, int t) const;
};

} // namespace maediff::nn
