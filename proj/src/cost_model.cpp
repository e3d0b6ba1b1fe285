#include "afnet/cost_model.hpp"

namespace afnet {

namespace {

uint64_t conv_macs(int rows, int cin, int cout, int k, int groups, int oh, int ow) {
    return static_cast<uint64_t>(rows) * cout * (cin / groups) * k * k * oh * ow;
}

// Per-block main-path + shortcut costs, matching ResidualBlock's geometry.
struct BlockMacs {
    uint64_t main = 0, shortcut = 0;
};

BlockMacs block_macs(int rows, int in, int out, int stride, int groups, BlockKind kind, int h,
                     int w, int* oh, int* ow) {
    BlockMacs bm;
    *oh = conv_out_extent(h, 3, stride, 1);
    *ow = conv_out_extent(w, 3, stride, 1);
    if (kind == BlockKind::Bottleneck) {
        const int mid = std::max(out / 4, groups);
        bm.main += conv_macs(rows, in, mid, 1, groups, h, w);        // 1x1 reduce, stride 1
        bm.main += conv_macs(rows, mid, mid, 3, groups, *oh, *ow);   // 3x3 at stride
        bm.main += conv_macs(rows, mid, out, 1, groups, *oh, *ow);   // 1x1 expand
    } else {
        bm.main += conv_macs(rows, in, out, 3, groups, *oh, *ow);
        bm.main += conv_macs(rows, out, out, 3, groups, *oh, *ow);
    }
    if (in != out || stride != 1)
        bm.shortcut = conv_macs(rows, in, out, 1, 1, *oh, *ow);
    return bm;
}

}  // namespace

double CostReport::expected_total_at(const std::vector<double>& per_block_ratio) const {
    AFNET_CHECK(per_block_ratio.size() == focal_main_per_block.size(),
                "cost: ", per_block_ratio.size(), " ratios for ", focal_main_per_block.size(),
                " blocks");
    double t = static_cast<double>(fixed_macs);
    for (size_t i = 0; i < focal_main_per_block.size(); ++i)
        t += static_cast<double>(focal_main_per_block[i]) * per_block_ratio[i] *
             (rs_applies ? rs : 1.0);
    return t;
}

CostReport count_flops(const ModelConfig& cfg, double rt, double rs) {
    AFNET_CHECK(rt >= 0.0 && rt <= 1.0 && rs >= 0.0 && rs <= 1.0,
                "count_flops: ratios must be in [0,1]");
    CostReport rep;
    rep.rt = rt;
    rep.rs = rs;
    rep.rs_applies = cfg.spatial_enabled;

    const int t = cfg.frames;
    auto add_fixed = [&](int block, const std::string& branch, uint64_t macs) {
        rep.items.push_back({block, branch, macs});
        rep.fixed_macs += macs;
    };

    // Stem: 3x3, stride 1, pad 1.
    int h = cfg.resolution, w = cfg.resolution;
    add_fixed(-1, "stem", conv_macs(t, cfg.in_channels, cfg.stem_channels, 3, 1, h, w));

    int width = cfg.stem_channels;
    int gblock = 0;
    for (const auto& s : cfg.stages) {
        if (s.kind == StageSpec::Kind::AF) {
            const int aw = s.out_channels / 2, fw = s.out_channels;
            int ah = h, aw_ext = w, fh = h, fw_ext = w;
            for (int b = 0; b < s.num_blocks; ++b) {
                const int a_in = b == 0 ? width : aw;
                const int f_in = b == 0 ? width : fw;
                const int a_stride = b == 0 ? 2 * s.stride : 1;
                const int f_stride = b == 0 ? s.stride : 1;
                int oh, ow;
                BlockMacs am = block_macs(t, a_in, aw, a_stride, 1, cfg.block, ah, aw_ext, &oh, &ow);
                ah = oh;
                aw_ext = ow;
                add_fixed(gblock, "ample", am.main + am.shortcut);

                BlockMacs fm =
                    block_macs(t, f_in, fw, f_stride, cfg.focal_groups, cfg.block, fh, fw_ext, &oh, &ow);
                fh = oh;
                fw_ext = ow;
                rep.items.push_back({gblock, "focal_main", fm.main});
                rep.focal_main_per_block.push_back(fm.main);
                if (fm.shortcut) add_fixed(gblock, "focal_shortcut", fm.shortcut);

                // Navigation: 1x1 reduce on pooled [T,C,1,1], then the 2T->2T
                // per-video mix; spatial head when enabled.
                uint64_t nav = conv_macs(t, aw, 2, 1, 1, 1, 1) +
                               conv_macs(1, 2 * t, 2 * t, 1, 1, 1, 1);
                if (cfg.spatial_enabled)
                    nav += conv_macs(t, aw, 16, 3, 1, ah, aw_ext) +
                           conv_macs(t, 16, 2, 1, 1, cfg.spatial_grid, cfg.spatial_grid);
                add_fixed(gblock, "navigation", nav);
                ++gblock;
            }
            // Fusion: 1x1 projection of the ample output plus the theta head.
            const uint64_t fuse = conv_macs(t, aw, fw, 1, 1, ah, aw_ext) +
                                  static_cast<uint64_t>(2 * fw) * fw;
            add_fixed(gblock - 1, "fusion", fuse);
            h = fh;
            w = fw_ext;
            width = fw;
        } else {
            for (int b = 0; b < s.num_blocks; ++b) {
                int oh, ow;
                BlockMacs bm = block_macs(t, b == 0 ? width : s.out_channels, s.out_channels,
                                          b == 0 ? s.stride : 1, 1, cfg.block, h, w, &oh, &ow);
                h = oh;
                w = ow;
                add_fixed(-1, "plain", bm.main + bm.shortcut);
            }
            width = s.out_channels;
        }
    }
    add_fixed(-1, "classifier", static_cast<uint64_t>(t) * width * cfg.classes);

    rep.full_macs = rep.fixed_macs;
    for (uint64_t m : rep.focal_main_per_block) rep.full_macs += m;

    // Baseline: the same chain with every AF stage replaced by a plain
    // full-width stage over all frames.
    ModelConfig base = cfg;
    base.spatial_enabled = false;
    for (auto& st : base.stages) st.kind = StageSpec::Kind::Plain;
    CostReport brep;
    brep.rt = 1.0;
    brep.rs = 1.0;
    {
        int bh = base.resolution, bw = base.resolution;
        uint64_t total = conv_macs(t, base.in_channels, base.stem_channels, 3, 1, bh, bw);
        int bwidth = base.stem_channels;
        for (const auto& s : base.stages) {
            for (int b = 0; b < s.num_blocks; ++b) {
                int oh, ow;
                BlockMacs bm = block_macs(t, b == 0 ? bwidth : s.out_channels, s.out_channels,
                                          b == 0 ? s.stride : 1, 1, base.block, bh, bw, &oh, &ow);
                bh = oh;
                bw = ow;
                total += bm.main + bm.shortcut;
            }
            bwidth = s.out_channels;
        }
        total += static_cast<uint64_t>(t) * bwidth * base.classes;
        rep.baseline_macs = total;
    }
    return rep;
}

}  // namespace afnet
