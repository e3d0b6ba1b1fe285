#pragma once

#include "afnet/stage.hpp"

namespace afnet {

struct StageSpec {
    enum class Kind { AF, Plain };
    Kind kind = Kind::AF;
    int out_channels = 64;
    int num_blocks = 2;
    int stride = 2;
};

struct ModelConfig {
    int frames = 8;
    int in_channels = 3;
    int resolution = 16;
    int classes = 4;
    int stem_channels = 32;
    std::vector<StageSpec> stages;
    FusionKind fusion = FusionKind::Dynamic;
    BlockKind block = BlockKind::Bottleneck;
    int focal_groups = 2;
    bool shift_enabled = false;
    double shift_fraction = 0.125;
    bool spatial_enabled = false;
    int spatial_grid = 4;

    // Trains in minutes on one CPU core while exercising every mechanism:
    // stem to 32 channels, two AF stages, one plain stage, linear classifier.
    static ModelConfig desk_default() {
        ModelConfig c;
        c.stages = {{StageSpec::Kind::AF, 64, 2, 2},
                    {StageSpec::Kind::AF, 128, 2, 2},
                    {StageSpec::Kind::Plain, 256, 1, 2}};
        return c;
    }
    int af_block_count() const {
        int n = 0;
        for (const auto& s : stages)
            if (s.kind == StageSpec::Kind::AF) n += s.num_blocks;
        return n;
    }
};

template <class S>
struct Prediction {
    Tensor<S> frame_logits;  // [F, K]
    Tensor<S> video_logits;  // [N, K], arithmetic mean over each video's frames

    std::vector<S> probabilities() const {
        const int n = video_logits.dim(0), k = video_logits.dim(1);
        std::vector<S> p(static_cast<size_t>(n) * k);
        detail::softmax_slices(video_logits.ptr(), p.data(), n, k, 1);
        return p;
    }
};

// Model-level forward context; fans out into per-stage StageCtx.  Forced
// masks (fixed sampling policies) apply the same per-frame / per-cell pattern
// to every AF block of every stage.
template <class S>
struct ModelCtx {
    bool training = false;
    ExecMode exec = ExecMode::MaskMultiply;
    double tau = 1.0;
    GateMode gate_mode = GateMode::GumbelST;
    RngState* rng = nullptr;
    bool capture = false;
    const std::vector<S>* forced_mask = nullptr;     // [F] hard values
    const std::vector<S>* forced_spatial = nullptr;  // [G*G] per-frame cell pattern
};

template <class S>
struct Model {
    ModelConfig cfg;
    Conv2dLayer<S> stem;
    BatchNorm2dLayer<S> stem_bn;
    std::vector<AFStage<S>> af_stages;
    std::vector<std::vector<ResidualBlock<S>>> plain_stages;
    // (is_af, index into the respective stage vector), in forward order.
    std::vector<std::pair<bool, int>> order;
    LinearLayer<S> classifier;

    std::pair<Prediction<S>, std::vector<StageTrace<S>>> forward(const Tensor<S>& x,
                                                                 const ModelCtx<S>& ctx) {
        AFNET_CHECK(x.rank() == 4, "model: input must be [N*T,C,H,W]");
        AFNET_CHECK(x.dim(0) % cfg.frames == 0, "model: batch rows ", x.dim(0),
                    " not a multiple of T=", cfg.frames);
        const int f = x.dim(0);
        Tensor<S> h = relu(stem_bn.forward(stem.forward(x), ctx.training));
        std::vector<StageTrace<S>> traces;
        for (const auto& [is_af, idx] : order) {
            if (is_af) {
                AFStage<S>& st = af_stages[idx];
                StageCtx<S> sctx;
                sctx.training = ctx.training;
                sctx.exec = ctx.exec;
                sctx.tau = ctx.tau;
                sctx.gate_mode = ctx.gate_mode;
                sctx.rng = ctx.rng;
                sctx.capture = ctx.capture;
                std::vector<std::vector<S>> forced, forced_sp;
                if (ctx.forced_mask) {
                    AFNET_CHECK(static_cast<int>(ctx.forced_mask->size()) == f,
                                "model: forced mask length ", ctx.forced_mask->size(), " != ", f);
                    forced.assign(st.focal_blocks.size(), *ctx.forced_mask);
                    sctx.forced_masks = &forced;
                }
                if (ctx.forced_spatial) {
                    const int g = st.cfg.spatial_grid;
                    AFNET_CHECK(static_cast<int>(ctx.forced_spatial->size()) == g * g,
                                "model: forced spatial pattern size != G*G");
                    std::vector<S> per_frame(static_cast<size_t>(f) * g * g);
                    for (int fr = 0; fr < f; ++fr)
                        std::copy(ctx.forced_spatial->begin(), ctx.forced_spatial->end(),
                                  per_frame.begin() + static_cast<int64_t>(fr) * g * g);
                    forced_sp.assign(st.focal_blocks.size(), per_frame);
                    sctx.forced_spatial = &forced_sp;
                }
                auto [out, trace] = st.forward(h, sctx);
                h = out;
                traces.push_back(std::move(trace));
            } else {
                for (auto& blk : plain_stages[idx]) {
                    Tensor<S> m = blk.main(h, ctx.training);
                    h = relu(blk.shortcut(h, ctx.training) + m);
                }
            }
        }
        Prediction<S> pred;
        pred.frame_logits = classifier.forward(gap_flat(h));
        pred.video_logits = frame_mean(pred.frame_logits, cfg.frames);
        return {std::move(pred), std::move(traces)};
    }

    ParamMap<S> state() {
        ParamMap<S> m;
        stem.register_state(m, "stem");
        stem_bn.register_state(m, "stem_bn");
        int si = 0;
        for (const auto& [is_af, idx] : order) {
            const std::string p = "s" + std::to_string(si++);
            if (is_af) {
                af_stages[idx].register_state(m, p);
            } else {
                for (size_t b = 0; b < plain_stages[idx].size(); ++b)
                    plain_stages[idx][b].register_state(m, p + ".b" + std::to_string(b));
            }
        }
        classifier.register_state(m, "classifier");
        return m;
    }
};

template <class S>
Model<S> build_model(const ModelConfig& cfg, RngState rng) {
    AFNET_CHECK(!cfg.stages.empty(), "model: no stages configured");
    AFNET_CHECK(cfg.frames >= 1 && cfg.classes >= 2, "model: invalid frames/classes");
    Model<S> m;
    m.cfg = cfg;
    m.stem = Conv2dLayer<S>(cfg.in_channels, cfg.stem_channels, 3, 1, 1, 1, false, rng);
    m.stem_bn = BatchNorm2dLayer<S>(cfg.stem_channels);
    int width = cfg.stem_channels;
    for (const auto& s : cfg.stages) {
        if (s.kind == StageSpec::Kind::AF) {
            AFStageConfig sc;
            sc.in_channels = width;
            sc.out_channels = s.out_channels;
            sc.num_blocks = s.num_blocks;
            sc.first_stride = s.stride;
            sc.focal_groups = cfg.focal_groups;
            sc.fusion = cfg.fusion;
            sc.block = cfg.block;
            sc.spatial_enabled = cfg.spatial_enabled;
            sc.spatial_grid = cfg.spatial_grid;
            sc.shift_enabled = cfg.shift_enabled;
            sc.shift_fraction = cfg.shift_fraction;
            m.order.emplace_back(true, static_cast<int>(m.af_stages.size()));
            m.af_stages.emplace_back(sc, cfg.frames, rng);
        } else {
            std::vector<ResidualBlock<S>> blocks;
            for (int b = 0; b < s.num_blocks; ++b)
                blocks.emplace_back(b == 0 ? width : s.out_channels, s.out_channels,
                                    b == 0 ? s.stride : 1, 1, cfg.block, rng);
            m.order.emplace_back(false, static_cast<int>(m.plain_stages.size()));
            m.plain_stages.push_back(std::move(blocks));
        }
        width = s.out_channels;
    }
    m.classifier = LinearLayer<S>(width, cfg.classes, true, rng);
    return m;
}

}  // namespace afnet
