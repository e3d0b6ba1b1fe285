#pragma once

#include <optional>

#include "afnet/layers.hpp"
#include "afnet/navigation.hpp"
#include "afnet/ops.hpp"

namespace afnet {

enum class ExecMode { MaskMultiply, Gather };
enum class FusionKind { Dynamic, Addition };
enum class BlockKind { Bottleneck, Basic };
enum class PostAct { ReLU, None };

struct AFStageConfig {
    int in_channels = 0;
    int out_channels = 0;  // focal width C_o; ample runs at C_o/2
    int num_blocks = 2;
    int first_stride = 1;  // focal stride of block 0; ample uses twice this
    int focal_groups = 2;
    FusionKind fusion = FusionKind::Dynamic;
    BlockKind block = BlockKind::Bottleneck;
    PostAct post_act = PostAct::ReLU;
    // Identity-check geometry: both branches keep the input shape (width
    // in_channels, stride 1, identity shortcuts, direct fusion).  Used by the
    // product-form verifier, which requires pure v + F(v) block structure.
    bool shape_preserving = false;
    bool spatial_enabled = false;
    int spatial_grid = 4;
    bool shift_enabled = false;
    double shift_fraction = 0.125;
};

// Residual block: bottleneck (1x1 -> 3x3 -> 1x1) or basic (3x3 -> 3x3) main
// path with BN after each conv; optional projection shortcut.  The post-add
// activation is owned by the stage so the two can be composed differently.
template <class S>
struct ResidualBlock {
    BlockKind kind = BlockKind::Bottleneck;
    Conv2dLayer<S> c1, c2, c3;
    BatchNorm2dLayer<S> b1, b2, b3;
    bool has_shortcut = false;
    Conv2dLayer<S> sc;
    BatchNorm2dLayer<S> sbn;

    ResidualBlock() = default;
    ResidualBlock(int in, int out, int stride, int groups, BlockKind kind_, RngState& rng)
        : kind(kind_) {
        AFNET_CHECK(out % groups == 0 && in % groups == 0, "block: groups ", groups,
                    " must divide widths ", in, "->", out);
        if (kind == BlockKind::Bottleneck) {
            const int mid = std::max(out / 4, groups);
            AFNET_CHECK(mid % groups == 0, "block: bottleneck width ", mid,
                        " not divisible by groups ", groups);
            c1 = Conv2dLayer<S>(in, mid, 1, 1, 0, groups, false, rng);
            b1 = BatchNorm2dLayer<S>(mid);
            c2 = Conv2dLayer<S>(mid, mid, 3, stride, 1, groups, false, rng);
            b2 = BatchNorm2dLayer<S>(mid);
            c3 = Conv2dLayer<S>(mid, out, 1, 1, 0, groups, false, rng);
            b3 = BatchNorm2dLayer<S>(out);
        } else {
            c1 = Conv2dLayer<S>(in, out, 3, stride, 1, groups, false, rng);
            b1 = BatchNorm2dLayer<S>(out);
            c2 = Conv2dLayer<S>(out, out, 3, 1, 1, groups, false, rng);
            b2 = BatchNorm2dLayer<S>(out);
        }
        has_shortcut = (in != out) || (stride != 1);
        if (has_shortcut) {
            sc = Conv2dLayer<S>(in, out, 1, stride, 0, 1, false, rng);
            sbn = BatchNorm2dLayer<S>(out);
        }
    }

    Tensor<S> main(const Tensor<S>& x, bool training) {
        Tensor<S> h = relu(b1.forward(c1.forward(x), training));
        if (kind == BlockKind::Bottleneck) {
            h = relu(b2.forward(c2.forward(h), training));
            return b3.forward(c3.forward(h), training);
        }
        return b2.forward(c2.forward(h), training);
    }
    Tensor<S> shortcut(const Tensor<S>& x, bool training) {
        return has_shortcut ? sbn.forward(sc.forward(x), training) : x;
    }
    void register_state(ParamMap<S>& m, const std::string& prefix) {
        c1.register_state(m, prefix + ".c1");
        b1.register_state(m, prefix + ".b1");
        c2.register_state(m, prefix + ".c2");
        b2.register_state(m, prefix + ".b2");
        if (kind == BlockKind::Bottleneck) {
            c3.register_state(m, prefix + ".c3");
            b3.register_state(m, prefix + ".b3");
        }
        if (has_shortcut) {
            sc.register_state(m, prefix + ".sc");
            sbn.register_state(m, prefix + ".sbn");
        }
    }
};

// Per-forward context: phase, execution strategy, schedule values, RNG, and
// test hooks that pin masks, noise, or fusion weights.
template <class S>
struct StageCtx {
    bool training = false;
    ExecMode exec = ExecMode::MaskMultiply;
    double tau = 1.0;
    GateMode gate_mode = GateMode::GumbelST;
    RngState* rng = nullptr;
    bool capture = false;  // record per-block main-path outputs for analysis
    const std::vector<std::vector<S>>* forced_masks = nullptr;    // per block, [F] hard
    const std::vector<std::vector<S>>* forced_spatial = nullptr;  // per block, [F*G*G] hard
    const std::vector<std::vector<S>>* frozen_noise = nullptr;    // per block, [2F] gumbels
    const std::vector<S>* forced_theta = nullptr;                 // [N * C_o]
};

template <class S>
struct StageTrace {
    std::vector<TemporalMask<S>> masks;    // one per block
    std::vector<SpatialMask<S>> spatial;   // one per block when enabled
    std::vector<S> theta;                  // realized fusion weights, [N * C_o]
    // Captured per-block main-path values (pre-mask, pre-add), for the
    // product-form identity check; filled only when ctx.capture is set.
    std::vector<std::vector<S>> ample_main, focal_main;

    std::vector<int> selected_counts() const {
        std::vector<int> out;
        for (const auto& m : masks) out.push_back(static_cast<int>(m.selected().size()));
        return out;
    }
};

// Two-branch stage: a half-width half-resolution ample path over all frames,
// a full-width grouped-conv focal path computed only where the per-block
// navigation masks select, and a learned per-channel convex fusion of the two.
template <class S>
struct AFStage {
    AFStageConfig cfg;
    int t = 0;
    std::vector<ResidualBlock<S>> ample_blocks, focal_blocks;
    std::vector<Navigation<S>> navs;
    std::vector<SpatialNav<S>> snavs;
    Conv2dLayer<S> proj;    // ample C_o/2 -> C_o before upsampling
    LinearLayer<S> fuse_fc;  // pooled [ample | focal] -> theta logits

    AFStage() = default;
    AFStage(const AFStageConfig& cfg_, int t_frames, RngState& rng) : cfg(cfg_), t(t_frames) {
        AFNET_CHECK(cfg.num_blocks >= 1, "stage: need at least one block");
        AFNET_CHECK(cfg.out_channels % 2 == 0, "stage: out_channels must be even, got ",
                    cfg.out_channels);
        const bool sp = cfg.shape_preserving;
        const int aw = sp ? cfg.in_channels : cfg.out_channels / 2;  // ample width
        const int fw = sp ? cfg.in_channels : cfg.out_channels;      // focal width
        for (int n = 0; n < cfg.num_blocks; ++n) {
            const int a_in = n == 0 ? cfg.in_channels : aw;
            const int f_in = n == 0 ? cfg.in_channels : fw;
            const int a_stride = (n == 0 && !sp) ? 2 * cfg.first_stride : 1;
            const int f_stride = (n == 0 && !sp) ? cfg.first_stride : 1;
            ample_blocks.emplace_back(a_in, aw, a_stride, 1, cfg.block, rng);
            focal_blocks.emplace_back(f_in, fw, f_stride, cfg.focal_groups, cfg.block, rng);
            navs.emplace_back(aw, t_frames, rng);
            if (cfg.spatial_enabled) snavs.emplace_back(aw, cfg.spatial_grid, rng);
        }
        if (!sp) proj = Conv2dLayer<S>(aw, fw, 1, 1, 0, 1, true, rng);
        if (cfg.fusion == FusionKind::Dynamic) fuse_fc = LinearLayer<S>(2 * fw, fw, true, rng);
    }

    std::pair<Tensor<S>, StageTrace<S>> forward(const Tensor<S>& x, const StageCtx<S>& ctx) {
        const int f = x.dim(0);
        AFNET_CHECK(t >= 1 && f % t == 0, "stage: ", f, " frames not a multiple of T=", t);
        const int n_videos = f / t;
        StageTrace<S> trace;
        Tensor<S> a = x, fx = x;
        for (size_t n = 0; n < focal_blocks.size(); ++n) {
            // Ample block n over all frames.
            Tensor<S> fa = ample_blocks[n].main(a, ctx.training);
            Tensor<S> a_next = ample_blocks[n].shortcut(a, ctx.training) + fa;
            if (cfg.post_act == PostAct::ReLU) a_next = relu(a_next);

            // Navigation from the ample output.
            TemporalMask<S> mask = make_mask(a_next, n, ctx);
            std::optional<SpatialMask<S>> smask;
            if (cfg.spatial_enabled) smask = make_spatial(a_next, n, f, ctx);

            // Focal block n on selected frames.
            Tensor<S> fin = fx;
            if (cfg.shift_enabled) fin = temporal_shift(fin, t, cfg.shift_fraction);
            Tensor<S> sc = focal_blocks[n].shortcut(fx, ctx.training);
            Tensor<S> f_next;
            if (ctx.exec == ExecMode::Gather && !ctx.training) {
                const std::vector<int> sel = mask.selected();
                Tensor<S> scattered;
                if (sel.empty()) {
                    scattered = Tensor<S>::zeros(sc.shape());
                } else {
                    Tensor<S> m = focal_blocks[n].main(gather_frames(fin, sel), false);
                    scattered = scatter_frames(m, sel, f);
                }
                if (smask)
                    scattered =
                        mul_spatial(scattered, upsample_gate(smask->gate, sc.dim(2), sc.dim(3)));
                f_next = sc + scattered;
            } else {
                Tensor<S> m = focal_blocks[n].main(fin, ctx.training);
                if (ctx.capture) {
                    trace.ample_main.push_back(fa.data());
                    trace.focal_main.push_back(m.data());
                }
                Tensor<S> gated = mul_frames(m, mask.gate);
                if (smask)
                    gated = mul_spatial(gated, upsample_gate(smask->gate, m.dim(2), m.dim(3)));
                f_next = sc + gated;
            }
            if (cfg.post_act == PostAct::ReLU) f_next = relu(f_next);

            trace.masks.push_back(std::move(mask));
            if (smask) trace.spatial.push_back(std::move(*smask));
            a = a_next;
            fx = f_next;
        }

        // Map the ample output into focal geometry, then fuse.
        Tensor<S> a_f = cfg.shape_preserving ? a : nearest_upsample(proj.forward(a), 2);
        check_same_shape(a_f, fx, "fuse");
        const int fw = a_f.dim(1);
        Tensor<S> theta;
        if (ctx.forced_theta) {
            AFNET_CHECK(static_cast<int64_t>(ctx.forced_theta->size()) ==
                            static_cast<int64_t>(n_videos) * fw,
                        "stage: forced theta size != N*C");
            theta = Tensor<S>::from(*ctx.forced_theta, {n_videos, fw});
        } else if (cfg.fusion == FusionKind::Addition) {
            theta = Tensor<S>::full({n_videos, fw}, S(0.5));
        } else {
            Tensor<S> ga = frame_mean(gap_flat(a_f), t);
            Tensor<S> gf = frame_mean(gap_flat(fx), t);
            theta = sigmoid(fuse_fc.forward(concat_cols(ga, gf)));
        }
        trace.theta = theta.data();
        Tensor<S> one_minus = add_scalar(scale(theta, S(-1)), S(1));
        Tensor<S> out = mul_video_channels(a_f, theta, t) + mul_video_channels(fx, one_minus, t);
        return {std::move(out), std::move(trace)};
    }

    void register_state(ParamMap<S>& m, const std::string& prefix) {
        for (size_t n = 0; n < focal_blocks.size(); ++n) {
            const std::string b = prefix + ".b" + std::to_string(n);
            ample_blocks[n].register_state(m, b + ".ample");
            focal_blocks[n].register_state(m, b + ".focal");
            navs[n].register_state(m, b + ".nav");
            if (cfg.spatial_enabled) snavs[n].register_state(m, b + ".snav");
        }
        if (!cfg.shape_preserving) proj.register_state(m, prefix + ".proj");
        if (cfg.fusion == FusionKind::Dynamic) fuse_fc.register_state(m, prefix + ".fuse");
    }

  private:
    TemporalMask<S> make_mask(const Tensor<S>& ample_out, size_t n, const StageCtx<S>& ctx) {
        if (ctx.forced_masks) {
            AFNET_CHECK(ctx.forced_masks->size() == focal_blocks.size(),
                        "stage: forced mask count != blocks");
            return fixed_mask((*ctx.forced_masks)[n]);
        }
        Tensor<S> lg = navs[n].logits(ample_out, ctx.training);
        if (ctx.frozen_noise)
            return sample_mask_frozen(lg, ctx.tau, ctx.gate_mode, ctx.training,
                                      (*ctx.frozen_noise)[n]);
        if (ctx.training && ctx.gate_mode == GateMode::GumbelST) {
            AFNET_CHECK(ctx.rng, "stage: training-mode sampling needs an RNG");
            return sample_mask(lg, ctx.tau, ctx.gate_mode, ctx.training, *ctx.rng);
        }
        return sample_mask_frozen(lg, ctx.tau, ctx.gate_mode, ctx.training, {});
    }

    std::optional<SpatialMask<S>> make_spatial(const Tensor<S>& ample_out, size_t n, int frames,
                                               const StageCtx<S>& ctx) {
        const int g = cfg.spatial_grid;
        if (ctx.forced_spatial)
            return spatial_mask_from_sample(fixed_mask((*ctx.forced_spatial)[n]), frames, g);
        Tensor<S> lg = snavs[n].logits(ample_out, ctx.training);
        TemporalMask<S> cells;
        if (ctx.training && ctx.gate_mode == GateMode::GumbelST) {
            AFNET_CHECK(ctx.rng, "stage: training-mode sampling needs an RNG");
            cells = sample_mask(lg, ctx.tau, ctx.gate_mode, ctx.training, *ctx.rng);
        } else {
            cells = sample_mask_frozen(lg, ctx.tau, ctx.gate_mode, ctx.training, {});
        }
        return spatial_mask_from_sample(cells, frames, g);
    }
};

}  // namespace afnet
