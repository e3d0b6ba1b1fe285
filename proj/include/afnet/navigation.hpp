#pragma once

#include "afnet/layers.hpp"
#include "afnet/ops.hpp"
#include "afnet/rng.hpp"
#include "afnet/tensor.hpp"

namespace afnet {

enum class TauMode { Exponential, Cosine, Linear };

struct TemperatureSchedule {
    double tau_start = 1.0;
    double tau_end = 0.01;
    int64_t total_steps = 1;
    TauMode mode = TauMode::Exponential;
};

inline double temperature_at(int64_t step, const TemperatureSchedule& s) {
    AFNET_CHECK(step >= 0 && step <= s.total_steps, "temperature_at: step ", step,
                " outside [0,", s.total_steps, "]");
    const double u = s.total_steps > 0 ? static_cast<double>(step) / s.total_steps : 1.0;
    switch (s.mode) {
        case TauMode::Exponential:
            return std::exp(std::log(s.tau_start) + u * (std::log(s.tau_end) - std::log(s.tau_start)));
        case TauMode::Cosine:
            return s.tau_end + (s.tau_start - s.tau_end) * 0.5 * (1.0 + std::cos(M_PI * u));
        case TauMode::Linear:
            return s.tau_start + u * (s.tau_end - s.tau_start);
    }
    return s.tau_end;
}

// Spatial keep-ratio warmup: linear from 1 at step 0 down to the target, flat after.
inline double rs_at(int64_t step, double rs_target, int64_t warm_steps) {
    AFNET_CHECK(rs_target > 0.0 && rs_target <= 1.0, "rs_at: target must be in (0,1], got ",
                rs_target);
    if (warm_steps <= 0 || step >= warm_steps) return rs_target;
    const double u = static_cast<double>(step) / warm_steps;
    return 1.0 + u * (rs_target - 1.0);
}

// How the per-frame gate enters the forward pass: discrete samples with
// straight-through gradients, or the relaxed probabilities directly (the
// soft-weights ablation).
enum class GateMode { GumbelST, SoftWeights };

constexpr double kLogitFloor = 1e-20;

// Per-frame binary selection state for one block.  `gate` is the tensor the
// focal path multiplies by (hard forward / soft backward under GumbelST);
// `soft` is the relaxed select probability feeding the ratio regularizer;
// `hard` mirrors the forward gate values outside the graph.
template <class S>
struct TemporalMask {
    std::vector<S> hard;
    Tensor<S> gate;
    Tensor<S> soft;
    Tensor<S> logits;  // [F,2]; undefined for fixed policies

    std::vector<int> selected() const {
        std::vector<int> idx;
        for (size_t i = 0; i < hard.size(); ++i)
            if (hard[i] > S(0.5)) idx.push_back(static_cast<int>(i));
        return idx;
    }
    double hard_ratio() const {
        if (hard.empty()) return 0.0;
        double s = 0;
        for (S v : hard) s += static_cast<double>(v);
        return s / static_cast<double>(hard.size());
    }
};

// Per-frame G×G spatial selection state; same roles as TemporalMask with the
// gate shaped [F,G,G] for upsampling onto feature maps.
template <class S>
struct SpatialMask {
    int grid = 0;
    std::vector<S> hard;  // F*G*G
    Tensor<S> gate;       // [F,G,G]
    Tensor<S> soft;       // [F*G*G]
};

// Relaxed 2-way sampling over rows of logits [M,2] with explicit noise
// (one Gumbel per logit; zeros mean no perturbation).  Coordinate 1 is
// "select".  Training + GumbelST: hard = argmax of perturbed log-probs,
// soft = tempered softmax, gate = straight-through.  Training + SoftWeights:
// gate = tempered softmax of unperturbed log-probs.  Eval: argmax of the
// plain logits (GumbelST) or the tempered soft value (SoftWeights), no graph.
template <class S>
TemporalMask<S> sample_mask_frozen(const Tensor<S>& logits, double tau, GateMode mode,
                                   bool training, const std::vector<S>& noise) {
    AFNET_CHECK(logits.rank() == 2 && logits.dim(1) == 2, "sample_mask: logits must be [M,2]");
    AFNET_CHECK(tau > 0.0, "sample_mask: tau must be positive, got ", tau);
    const int m = logits.dim(0);
    AFNET_CHECK(noise.empty() || static_cast<int>(noise.size()) == 2 * m,
                "sample_mask: noise size ", noise.size(), " != ", 2 * m);

    TemporalMask<S> out;
    out.logits = logits;
    Tensor<S> pi = softmax(logits, 1);
    Tensor<S> logp = log_clamped(pi, S(kLogitFloor));

    Tensor<S> perturbed = logp;
    if (!noise.empty()) {
        Tensor<S> g = Tensor<S>::from(noise, {m, 2});
        perturbed = logp + g;
    }
    out.hard.assign(static_cast<size_t>(m), S(0));
    const std::vector<int> arg = argmax_rows(perturbed);

    if (mode == GateMode::GumbelST) {
        for (int r = 0; r < m; ++r) out.hard[r] = S(arg[r] == 1 ? 1 : 0);
        if (training) {
            Tensor<S> relaxed = softmax(perturbed * S(1.0 / tau), 1);
            out.soft = column(relaxed, 1);
            out.gate = straight_through(out.soft, out.hard);
        } else {
            // Noise-free argmax of the raw logits; no gradient path needed.
            const std::vector<int> plain = argmax_rows(logits);
            for (int r = 0; r < m; ++r) out.hard[r] = S(plain[r] == 1 ? 1 : 0);
            out.soft = column(pi, 1).detach();
            out.gate = Tensor<S>::from(out.hard, {m});
        }
    } else {
        Tensor<S> relaxed = softmax(logp * S(1.0 / tau), 1);
        out.soft = column(relaxed, 1);
        out.gate = out.soft;
        for (int r = 0; r < m; ++r) out.hard[r] = S(out.soft.data()[r] > S(0.5) ? 1 : 0);
    }
    return out;
}

template <class S>
TemporalMask<S> sample_mask(const Tensor<S>& logits, double tau, GateMode mode, bool training,
                            RngState& rng) {
    std::vector<S> noise;
    if (training && mode == GateMode::GumbelST) {
        noise.resize(static_cast<size_t>(logits.dim(0)) * 2);
        for (auto& v : noise) v = static_cast<S>(rng.next_gumbel());
    }
    return sample_mask_frozen(logits, tau, mode, training, noise);
}

// Constant mask for the fixed sampling-policy baselines: no logits, gate is a
// gradient-free copy of the given binary values.
template <class S>
TemporalMask<S> fixed_mask(std::vector<S> hard) {
    TemporalMask<S> out;
    const int m = static_cast<int>(hard.size());
    out.hard = std::move(hard);
    out.gate = Tensor<S>::from(out.hard, {m});
    out.soft = out.gate;
    return out;
}

// Frame-selection gate head: pooled ample features -> per-frame 2-way logits
// with full cross-frame mixing inside each video.
template <class S>
struct Navigation {
    int t = 0;
    Conv2dLayer<S> reduce;  // C -> 2, 1x1
    BatchNorm2dLayer<S> bn;
    Conv2dLayer<S> mix;  // 2T -> 2T, 1x1, acting per video

    Navigation() = default;
    Navigation(int channels, int t_frames, RngState& rng)
        : t(t_frames),
          reduce(channels, 2, 1, 1, 0, 1, false, rng),
          bn(2),
          mix(2 * t_frames, 2 * t_frames, 1, 1, 0, 1, true, rng) {
        // Start the head as a symmetric frame-activity probe: reduce projects
        // mean channel energy with opposite signs into its two outputs, and the
        // zeroed mix leaves every frame at exactly 50/50.  Selection then grows
        // out of observed per-frame evidence rather than an arbitrary random
        // projection, which a gate trained from scratch cannot unlearn.
        auto& rw = reduce.w.data();
        const size_t c = rw.size() / 2;
        const S u = S(1) / std::sqrt(static_cast<S>(c));
        for (size_t i = 0; i < c; ++i) {
            rw[i] = u;
            rw[c + i] = -u;
        }
        std::fill(mix.w.data().begin(), mix.w.data().end(), S(0));
    }

    // features: [N*T, C, H, W] -> logits [N*T, 2]
    Tensor<S> logits(const Tensor<S>& features, bool training) {
        const int f = features.dim(0);
        AFNET_CHECK(t >= 1 && f % t == 0, "navigation: ", f, " frames not a multiple of T=", t);
        const int n = f / t;
        Tensor<S> pooled = global_avg_pool(features);
        Tensor<S> a = relu(bn.forward(reduce.forward(pooled), training));
        Tensor<S> v = reshape(a, {n, 2 * t, 1, 1});
        Tensor<S> m = mix.forward(v);
        return reshape(m, {f, 2});
    }
    void register_state(ParamMap<S>& pm, const std::string& prefix) {
        reduce.register_state(pm, prefix + ".reduce");
        bn.register_state(pm, prefix + ".bn");
        mix.register_state(pm, prefix + ".mix");
    }
};

// Rearranges a 2-channel map [F,2,G,G] into per-cell logit rows [F*G*G, 2].
template <class S>
Tensor<S> pairs_from_2chan(const Tensor<S>& x) {
    AFNET_CHECK(x.rank() == 4 && x.dim(1) == 2, "pairs_from_2chan: input must be [F,2,G,G]");
    const int f = x.dim(0);
    const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor<S> out({static_cast<int>(f * plane), 2});
    for (int fr = 0; fr < f; ++fr)
        for (int64_t p = 0; p < plane; ++p)
            for (int c = 0; c < 2; ++c)
                out.data()[(fr * plane + p) * 2 + c] = x.data()[(fr * 2 + c) * plane + p];
    out.attach("pairs_from_2chan", {x}, [x, f, plane](TensorImpl<S>& self) mutable {
        auto& gx = x.grad();
        for (int fr = 0; fr < f; ++fr)
            for (int64_t p = 0; p < plane; ++p)
                for (int c = 0; c < 2; ++c)
                    gx[(fr * 2 + c) * plane + p] += self.grad[(fr * plane + p) * 2 + c];
    });
    return out;
}

// Region-selection gate head: 3x3 conv features, pooled to a G×G grid, 1x1
// conv to per-cell 2-way logits.
template <class S>
struct SpatialNav {
    int grid = 4;
    Conv2dLayer<S> conv;  // C -> hidden, 3x3
    BatchNorm2dLayer<S> bn;
    Conv2dLayer<S> head;  // hidden -> 2, 1x1

    SpatialNav() = default;
    SpatialNav(int channels, int grid_, RngState& rng, int hidden = 16)
        : grid(grid_),
          conv(channels, hidden, 3, 1, 1, 1, false, rng),
          bn(hidden),
          head(hidden, 2, 1, 1, 0, 1, true, rng) {}

    // features: [F, C, H, W] -> per-cell logits [F*G*G, 2]
    Tensor<S> logits(const Tensor<S>& features, bool training) {
        const int h = features.dim(2), w = features.dim(3);
        AFNET_CHECK(h % grid == 0 && w % grid == 0, "spatial nav: extent ", h, "x", w,
                    " not divisible by grid ", grid);
        Tensor<S> a = relu(bn.forward(conv.forward(features), training));
        Tensor<S> pooled = avg_pool2d(a, h / grid, h / grid);
        Tensor<S> l = head.forward(pooled);  // [F,2,G,G]
        return pairs_from_2chan(l);
    }
    void register_state(ParamMap<S>& pm, const std::string& prefix) {
        conv.register_state(pm, prefix + ".conv");
        bn.register_state(pm, prefix + ".bn");
        head.register_state(pm, prefix + ".head");
    }
};

// Packages a per-cell TemporalMask sample into grid form.
template <class S>
SpatialMask<S> spatial_mask_from_sample(const TemporalMask<S>& cells, int frames, int grid) {
    SpatialMask<S> out;
    out.grid = grid;
    out.hard = cells.hard;
    out.soft = cells.soft;
    out.gate = reshape(cells.gate, {frames, grid, grid});
    return out;
}

// Expands a [F,G,G] gate to [F,H,W] for masking a feature map.
template <class S>
Tensor<S> upsample_gate(const Tensor<S>& gate, int h, int w) {
    AFNET_CHECK(gate.rank() == 3, "upsample_gate: gate must be [F,G,G]");
    const int f = gate.dim(0), g = gate.dim(1);
    AFNET_CHECK(h % g == 0 && w % g == 0 && h / g == w / g, "upsample_gate: cannot expand ", g,
                "x", g, " grid to ", h, "x", w);
    Tensor<S> x = reshape(gate, {f, 1, g, g});
    Tensor<S> up = nearest_upsample(x, h / g);
    return reshape(up, {f, h, w});
}

}  // namespace afnet
