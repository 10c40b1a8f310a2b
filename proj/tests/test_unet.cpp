// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "maediff/unet.hpp"

using namespace maediff;

namespace {

UNetConfig small_unet(bool att, bool mae) {
    UNetConfig u;
    u.base_channels = 8;
    u.channel_mults = {1, 2};
    u.res_blocks_per_level = 1;
    u.num_heads = 4;
    u.use_global_attention = att;
    u.use_mae = mae;
    return u;
}

MAEConfig small_mae() {
    MAEConfig m;
    m.d1 = 32;
    m.enc_blocks = 2;
    m.enc_heads = 4;
    m.d2 = 32;
    m.dec_blocks = 2;
    m.dec_heads = 4;
    return m;
}

PatchPlan plan32() { return enumerate_patches(32, 32, 16, 8, 8); }

} // namespace

TEST_CASE("sinusoidal base embedding: cos components 1 and sin components 0 at t=0") {
    Tensor e = nn::sinusoidal_embedding(0.0, 16);
    for (int64_t i = 0; i < 8; ++i) {
        CHECK(e[i] == 1.0f);     // cos half
        CHECK(e[8 + i] == 0.0f); // sin half
    }
}

TEST_CASE("distinct timesteps give distinct base embeddings over 1..1000") {
    const int64_t dim = 32;
    std::vector<Tensor> embs;
    for (int t = 1; t <= 1000; ++t) embs.push_back(nn::sinusoidal_embedding(t, dim));
    for (size_t a = 0; a < embs.size(); ++a) {
        for (size_t b = a + 1; b < embs.size(); ++b) {
            bool same = true;
            for (int64_t i = 0; i < dim && same; ++i) same = embs[a][i] == embs[b][i];
            if (same) {
                FAIL("embeddings for t=", a + 1, " and t=", b + 1, " collide");
            }
        }
    }
}

TEST_CASE("embed_timestep projects to time_embed_dim") {
    DenoiserModel model(small_unet(false, false), small_mae(), plan32(), 1);
    ag::Graph g(false);
    nn::ParamBinder pb(g);
    nn::Var e = model.net().embed_timestep(pb, 17);
    CHECK(e.shape() == std::vector<int64_t>{1, 32}); // 4 * base_channels
}

TEST_CASE("encoder reaches H/4 with the configured fusion width, 96x96") {
    PatchPlan plan = enumerate_patches(96, 96, 48, 16, 16);
    DenoiserModel model(small_unet(false, false), small_mae(), plan, 2);
    ag::Graph g(false);
    nn::ParamBinder pb(g);
    nn::Var temb = model.net().embed_timestep(pb, 3);
    nn::Var x = g.input(Tensor({1, 96, 96}));
    UNet::Encoded enc = model.net().encode(pb, x, temb);
    CHECK(enc.f.shape() == std::vector<int64_t>{16, 24, 24}); // base 8 * mult 2, side H/4
    // skips: stem + levels * res_blocks + one internal downsample
    CHECK(enc.skips.size() == 2 * 1 + 2);
}

TEST_CASE("skip count follows levels * res_blocks_per_level + transitions") {
    UNetConfig u = small_unet(false, false);
    u.res_blocks_per_level = 3;
    DenoiserModel model(u, small_mae(), plan32(), 3);
    ag::Graph g(false);
    nn::ParamBinder pb(g);
    nn::Var temb = model.net().embed_timestep(pb, 1);
    UNet::Encoded enc = model.net().encode(pb, g.input(Tensor({1, 32, 32})), temb);
    CHECK(enc.skips.size() == 2 * 3 + 2);
}

TEST_CASE("indivisible input sizes are rejected") {
    CHECK_THROWS_AS(enumerate_patches(30, 30, 16, 8, 8), ConfigError);
    UNetConfig three_levels = small_unet(false, false);
    three_levels.channel_mults = {1, 2, 4};
    CHECK_THROWS_AS(DenoiserModel(three_levels, small_mae(), plan32(), 4), ConfigError);
}

TEST_CASE("fuse_mae is an exact elementwise sum with symmetric gradients") {
    SplitMix64 rng(5);
    Tensor fv = Tensor::randn({3, 4, 4}, rng);
    Tensor mv = Tensor::randn({3, 4, 4}, rng);

    ag::Graph g;
    nn::Var f = g.input(fv, true);
    nn::Var m = g.input(mv, true);
    nn::Var fused = fuse_mae(f, m);
    // mae_out = 0 leaves f unchanged
    nn::Var fused0 = fuse_mae(f, g.input(Tensor({3, 4, 4})));
    for (int64_t i = 0; i < fv.numel(); ++i) {
        CHECK(fused.val()[i] == fv[i] + mv[i]);
        CHECK(fused0.val()[i] == fv[i]);
        // fuse(f,m) - fuse(f,0) = m, up to the rounding of the single add
        CHECK(fused.val()[i] - fused0.val()[i] == doctest::Approx(mv[i]).epsilon(1e-6));
    }
    SplitMix64 wrng(6);
    Tensor w = Tensor::randn({3, 4, 4}, wrng);
    nn::Var loss = ag::mean_all(ag::mul_const(fused, w));
    g.backward(loss);
    Tensor gf = g.leaf_grad(f), gm = g.leaf_grad(m);
    for (int64_t i = 0; i < gf.numel(); ++i) CHECK(gf[i] == gm[i]); // equal local Jacobians
}

TEST_CASE("predict_x0 preserves shape and is deterministic") {
    DenoiserModel model(small_unet(true, true), small_mae(), plan32(), 7);
    SplitMix64 rng(8);
    Tensor x = Tensor::rand_uniform({32, 32}, rng);
    Tensor a = model.predict_x0(x, 0, 100);
    Tensor b = model.predict_x0(x, 0, 100);
    CHECK(a.shape() == x.shape());
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

    DenoiserModel model2(small_unet(true, true), small_mae(), plan32(), 7);
    Tensor c = model2.predict_x0(x, 0, 100);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == c[i]); // same init seed, same output
}

TEST_CASE("whole-image patch bypasses the MAE branch") {
    PatchPlan whole = enumerate_patches(32, 32, 32, 8, 8);
    DenoiserModel model(small_unet(false, true), small_mae(), whole, 9);
    CHECK(model.visible_grids_for_patch(0).empty());
    SplitMix64 rng(10);
    Tensor x = Tensor::rand_uniform({32, 32}, rng);
    Tensor out = model.predict_x0(x, 0, 50); // must not throw despite empty visible set
    CHECK(out.shape() == x.shape());
    CHECK(out.all_finite());
}

TEST_CASE("the four ablation rows have distinct parameter counts and off/off has no MAE") {
    std::set<int64_t> counts;
    for (bool att : {false, true}) {
        for (bool mae : {false, true}) {
            DenoiserModel model(small_unet(att, mae), small_mae(), plan32(), 11);
            counts.insert(model.param_count());
            if (!mae) CHECK(model.mae_param_count() == 0);
            if (mae) CHECK(model.mae_param_count() > 0);
        }
    }
    CHECK(counts.size() == 4);
}

TEST_CASE("loss gradient w.r.t. visible-region input pixels is nonzero") {
    PatchPlan plan = plan32();
    DenoiserModel model(small_unet(false, true), small_mae(), plan, 12);
    model.randomize_all(13);

    SplitMix64 rng(14);
    Tensor x_tilde = Tensor::rand_uniform({32, 32}, rng);
    Tensor target = Tensor::rand_uniform({32, 32}, rng);
    PatchMask m = make_mask(plan, 0);

    ag::Graph g(true);
    nn::ParamBinder pb(g);
    nn::Var xv = g.input(x_tilde.reshaped({1, 32, 32}), true);
    nn::Var pred = model.net().forward(pb, xv, 25, model.visible_grids_for_patch(0));
    nn::Var loss = ag::masked_l1(pred, target.reshaped({1, 32, 32}), m.mask.reshaped({1, 32, 32}));
    g.backward(loss);
    Tensor grad = g.leaf_grad(xv).reshaped({32, 32});

    double vis_grad = 0.0;
    for (int64_t i = 0; i < grad.numel(); ++i) {
        if (m.mask[i] == 0.0f) vis_grad += std::fabs(grad[i]);
    }
    CHECK(vis_grad > 0.0);
}
