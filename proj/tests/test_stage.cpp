#include <cmath>

#include "afnet/stage.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace afnet;
using testutil::rand_tensor;

namespace {

AFStageConfig small_stage(int in, int out, int blocks, int stride) {
    AFStageConfig c;
    c.in_channels = in;
    c.out_channels = out;
    c.num_blocks = blocks;
    c.first_stride = stride;
    return c;
}

std::vector<std::vector<double>> random_masks(int blocks, int frames, RngState& rng,
                                              bool allow_empty = true) {
    std::vector<std::vector<double>> masks(static_cast<size_t>(blocks));
    for (auto& m : masks) {
        m.resize(static_cast<size_t>(frames));
        int on = 0;
        for (auto& v : m) {
            v = rng.next_double() < 0.5 ? 1.0 : 0.0;
            on += v > 0.5;
        }
        if (!allow_empty && on == 0) m[0] = 1.0;
    }
    return masks;
}

}  // namespace

TEST_CASE("stage output geometry: focal width at focal stride") {
    RngState rng{81, 0};
    AFStage<double> st(small_stage(4, 8, 2, 2), 4, rng);
    auto x = rand_tensor({8, 4, 8, 8}, rng);  // 2 videos, T=4
    StageCtx<double> ctx;
    std::vector<std::vector<double>> masks = random_masks(2, 8, rng, false);
    ctx.forced_masks = &masks;
    auto [y, trace] = st.forward(x, ctx);
    CHECK(y.dim(0) == 8);
    CHECK(y.dim(1) == 8);    // out_channels
    CHECK(y.dim(2) == 4);    // stride 2 on the focal branch
    CHECK(y.dim(3) == 4);
    CHECK(trace.masks.size() == 2);
    CHECK(trace.theta.size() == 2 * 8);  // one weight per (video, channel)
}

TEST_CASE("gather and mask-multiply execution agree at eval") {
    RngState rng{82, 0};
    AFStage<double> st(small_stage(4, 8, 2, 2), 4, rng);
    auto x = rand_tensor({8, 4, 8, 8}, rng);
    for (int pattern = 0; pattern < 10; ++pattern) {
        RngState mrng{83, static_cast<uint64_t>(pattern)};
        std::vector<std::vector<double>> masks = random_masks(2, 8, mrng);
        StageCtx<double> g, mm;
        g.forced_masks = mm.forced_masks = &masks;
        g.exec = ExecMode::Gather;
        mm.exec = ExecMode::MaskMultiply;
        auto [yg, tg] = st.forward(x, g);
        auto [ym, tm] = st.forward(x, mm);
        CHECK(testutil::max_abs_diff(yg.data(), ym.data()) < 1e-5);
    }
}

TEST_CASE("unselected frames ride the residual unchanged") {
    // Shape-preserving single block, all-skip mask: focal main contributes
    // nothing, so the focal-side residual carry equals the input exactly.
    RngState rng{84, 0};
    AFStageConfig c = small_stage(6, 6, 1, 1);
    c.shape_preserving = true;
    c.post_act = PostAct::None;
    c.fusion = FusionKind::Dynamic;
    AFStage<double> st(c, 4, rng);
    auto x = rand_tensor({4, 6, 4, 4}, rng);
    StageCtx<double> ctx;
    std::vector<std::vector<double>> skip_all{std::vector<double>(4, 0.0)};
    std::vector<double> theta(1 * 6, 0.0);  // weight the focal branch alone
    ctx.forced_masks = &skip_all;
    ctx.forced_theta = &theta;
    auto [y, trace] = st.forward(x, ctx);
    CHECK(testutil::max_abs_diff(y.data(), x.data()) < 1e-12);
}

TEST_CASE("dynamic fusion weights live strictly inside (0,1)") {
    RngState rng{85, 0};
    AFStage<double> st(small_stage(4, 8, 2, 2), 4, rng);
    auto x = rand_tensor({8, 4, 8, 8}, rng);
    StageCtx<double> ctx;
    std::vector<std::vector<double>> masks = random_masks(2, 8, rng, false);
    ctx.forced_masks = &masks;
    auto [y, trace] = st.forward(x, ctx);
    for (double th : trace.theta) {
        CHECK(th > 0.0);
        CHECK(th < 1.0);
    }
}

TEST_CASE("addition fusion equals dynamic fusion pinned at one half") {
    RngState rng{86, 0};
    AFStageConfig cd = small_stage(4, 8, 1, 2);
    cd.fusion = FusionKind::Dynamic;
    AFStageConfig ca = cd;
    ca.fusion = FusionKind::Addition;
    RngState r1{87, 0}, r2{87, 0};
    AFStage<double> dyn(cd, 4, r1);
    AFStage<double> add(ca, 4, r2);
    // same parameter stream except the fusion layer; pin theta=0.5 on dynamic
    auto x = rand_tensor({4, 4, 8, 8}, rng);
    std::vector<std::vector<double>> masks = random_masks(1, 4, rng, false);
    StageCtx<double> cda, caa;
    cda.forced_masks = caa.forced_masks = &masks;
    std::vector<double> half(1 * 8, 0.5);
    cda.forced_theta = &half;
    auto [yd, td] = dyn.forward(x, cda);
    auto [ya, ta] = add.forward(x, caa);
    CHECK(testutil::max_abs_diff(yd.data(), ya.data()) < 1e-12);
    for (double th : ta.theta) CHECK(th == 0.5);
}

TEST_CASE("temporal shift in the focal path changes the output when enabled") {
    AFStageConfig base = small_stage(4, 8, 1, 1);
    AFStageConfig shifted = base;
    shifted.shift_enabled = true;
    shifted.shift_fraction = 0.25;
    RngState r1{88, 0}, r2{88, 0}, rng{89, 0};
    AFStage<double> a(base, 4, r1);
    AFStage<double> b(shifted, 4, r2);
    auto x = rand_tensor({4, 4, 8, 8}, rng);
    std::vector<std::vector<double>> masks{std::vector<double>(4, 1.0)};
    StageCtx<double> ctx;
    ctx.forced_masks = &masks;
    std::vector<double> theta(1 * 8, 0.0);  // isolate the focal branch
    ctx.forced_theta = &theta;
    auto [ya, t1] = a.forward(x, ctx);
    auto [yb, t2] = b.forward(x, ctx);
    CHECK(testutil::max_abs_diff(ya.data(), yb.data()) > 1e-6);
}

TEST_CASE("spatial cell masks gate the focal contribution per region") {
    RngState rng{90, 0};
    AFStageConfig c = small_stage(4, 8, 1, 1);
    c.spatial_enabled = true;
    c.spatial_grid = 4;
    RngState r1{91, 0};
    AFStage<double> st(c, 4, r1);
    auto x = rand_tensor({4, 4, 8, 8}, rng);
    std::vector<std::vector<double>> masks{std::vector<double>(4, 1.0)};
    // identical runs must agree bit-for-bit; changing cells must change output
    std::vector<std::vector<double>> all_cells{std::vector<double>(4 * 16, 1.0)};
    std::vector<std::vector<double>> crop{std::vector<double>(4 * 16, 0.0)};
    for (int f = 0; f < 4; ++f)
        for (int idx : {5, 6, 9, 10}) crop[0][f * 16 + idx] = 1.0;
    std::vector<double> theta(1 * 8, 0.5);
    StageCtx<double> a, b;
    a.forced_masks = b.forced_masks = &masks;
    a.forced_theta = b.forced_theta = &theta;
    a.forced_spatial = &all_cells;
    b.forced_spatial = &crop;
    auto [ya, ta] = st.forward(x, a);
    auto [ya2, ta2] = st.forward(x, a);
    auto [yb, tb] = st.forward(x, b);
    CHECK(testutil::max_abs_diff(ya.data(), ya2.data()) == 0.0);
    CHECK(testutil::max_abs_diff(ya.data(), yb.data()) > 1e-8);
    REQUIRE(ta.spatial.size() == 1);
    CHECK(ta.spatial[0].hard.size() == 4 * 16);
    CHECK(ta.spatial[0].grid == 4);
}

TEST_CASE("every block's mask lands in the trace in block order") {
    RngState rng{92, 0};
    AFStage<double> st(small_stage(4, 8, 3, 1), 4, rng);
    auto x = rand_tensor({4, 4, 8, 8}, rng);
    std::vector<std::vector<double>> masks;
    masks.push_back({1, 0, 0, 0});
    masks.push_back({1, 1, 0, 0});
    masks.push_back({1, 1, 1, 0});
    StageCtx<double> ctx;
    ctx.forced_masks = &masks;
    auto [y, trace] = st.forward(x, ctx);
    REQUIRE(trace.masks.size() == 3);
    CHECK(trace.selected_counts() == std::vector<int>{1, 2, 3});
    for (size_t n = 0; n < 3; ++n)
        CHECK(trace.masks[n].hard == std::vector<double>(masks[n].begin(), masks[n].end()));
}
