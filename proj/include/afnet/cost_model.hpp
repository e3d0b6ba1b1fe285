#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afnet/model.hpp"

namespace afnet {

// One accounted component at full execution (RT = RS = 1).  `block` is the
// global AF-block index (across stages, in forward order) or -1 for items not
// tied to an AF block (stem, plain blocks, classifier; fusion carries the
// stage's last block index).
struct CostItem {
    int block = -1;
    std::string branch;  // stem|ample|focal_main|focal_shortcut|navigation|fusion|plain|classifier
    uint64_t macs = 0;
};

// Multiply-add budget of one video (T frames).  The focal main path is the
// only part scaled by the selection ratios; everything else runs on all
// frames regardless of the masks.  One MAC = 2 FLOPs in GFLOP-style reports.
struct CostReport {
    std::vector<CostItem> items;
    std::vector<uint64_t> focal_main_per_block;  // global AF-block order
    uint64_t fixed_macs = 0;
    uint64_t full_macs = 0;      // fixed + sum(focal_main), == instrumented count at RT=RS=1
    uint64_t baseline_macs = 0;  // all-plain full-width counterpart model
    double rt = 1.0, rs = 1.0;
    bool rs_applies = false;  // spatial masking enabled in the config

    double expected_total() const {
        double t = static_cast<double>(fixed_macs);
        const double scale = rt * (rs_applies ? rs : 1.0);
        for (uint64_t m : focal_main_per_block) t += static_cast<double>(m) * scale;
        return t;
    }
    // Expected cost with a measured per-block selection ratio (e.g. hard-mask
    // means from eval traces) instead of the uniform target.
    double expected_total_at(const std::vector<double>& per_block_ratio) const;
    double ratio_vs_baseline() const {
        return baseline_macs > 0 ? expected_total() / static_cast<double>(baseline_macs) : 0.0;
    }
};

// Analytic per-component MAC counts for `cfg`, mirroring the instrumented
// conv/linear counters exactly.  Counted: convolutions and linear maps.
// Not counted: BN, activations, pooling, upsampling, additions.
CostReport count_flops(const ModelConfig& cfg, double rt, double rs);

}  // namespace afnet
