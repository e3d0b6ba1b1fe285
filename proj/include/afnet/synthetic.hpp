#pragma once

#include "afnet/rng.hpp"
#include "afnet/tensor.hpp"

namespace afnet {

// Desk-scale video classification task: each class has a fixed sinusoidal
// grating template; each sample plants the (noisy) template on a random
// k_s-subset of its T frames and fills the remaining frames with pure noise,
// so frame selection has a ground truth to be scored against.
struct SyntheticVideoSpec {
    int classes = 4;
    int frames = 8;
    int salient = 2;  // planted template frames per video
    int channels = 3;
    int resolution = 16;
    double noise = 1.5;      // additive noise stddev on salient frames
    double bg_noise = -1.0;  // non-salient frame noise stddev; < 0 means use `noise`
    double amplitude = 2.0;

    double background() const { return bg_noise < 0 ? noise : bg_noise; }
};

template <class S>
struct VideoBatch {
    Tensor<S> frames;  // [N*T, C, H, W]
    std::vector<int> labels;
    std::vector<std::vector<int>> salient;  // sorted frame indices per video

    int videos() const { return static_cast<int>(labels.size()); }
};

// Deterministic class template: a strong class-independent carrier grating
// plus a weak class-coded grating at an orthogonal orientation, both with
// per-channel phase.  The carrier makes salient frames easy to *detect*
// (their energy stands out from pure-noise frames); the weak component alone
// decides *which* class, so classification difficulty is set by noise without
// erasing the detection cue.  Frequencies sit near the full-resolution
// Nyquist limit so the patterns are only legible at native resolution;
// downsampled views blur them away, which rewards spending full-resolution
// compute on the frames that carry them.
template <class S>
std::vector<S> class_template(const SyntheticVideoSpec& spec, int label) {
    AFNET_CHECK(label >= 0 && label < spec.classes, "class_template: label ", label,
                " out of range");
    const int c = spec.channels, r = spec.resolution;
    std::vector<S> out(static_cast<size_t>(c) * r * r);
    const double freq = r * 7.0 / 16.0;
    const double carrier = M_PI / 8.0;
    const double span = M_PI / 2.0 / std::max(spec.classes - 1, 1);
    const double part = carrier + M_PI / 4.0 + span * label;
    const double cc = std::cos(carrier), sc = std::sin(carrier);
    const double cp = std::cos(part), sp = std::sin(part);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < r; ++y)
            for (int x = 0; x < r; ++x) {
                const double phase = ch * M_PI / 3.0;
                const double uc = (x * cc + y * sc) / r;
                const double up = (x * cp + y * sp) / r;
                out[(static_cast<size_t>(ch) * r + y) * r + x] = static_cast<S>(
                    spec.amplitude * (std::sin(2.0 * M_PI * freq * uc + phase) +
                                      0.25 * std::sin(2.0 * M_PI * freq * up + phase)));
            }
    return out;
}

// Each sample is generated from base.derive(sample_index), so any batching of
// the same indices yields bit-identical data.
template <class S>
VideoBatch<S> make_synthetic_batch(const SyntheticVideoSpec& spec, const RngState& base,
                                   const std::vector<int>& indices) {
    AFNET_CHECK(spec.salient >= 0 && spec.salient <= spec.frames, "synthetic: k_s ", spec.salient,
                " must be in [0,T=", spec.frames, "]");
    AFNET_CHECK(!indices.empty(), "synthetic: empty batch");
    const int count = static_cast<int>(indices.size());
    const int t = spec.frames, c = spec.channels, r = spec.resolution;
    const int64_t frame_sz = static_cast<int64_t>(c) * r * r;

    VideoBatch<S> out;
    out.frames = Tensor<S>({count * t, c, r, r});
    out.labels.resize(static_cast<size_t>(count));
    out.salient.resize(static_cast<size_t>(count));

    std::vector<std::vector<S>> templates;
    for (int k = 0; k < spec.classes; ++k) templates.push_back(class_template<S>(spec, k));

    for (int i = 0; i < count; ++i) {
        RngState rng = base.derive(static_cast<uint64_t>(indices[i]));
        const int label = static_cast<int>(rng.next_u64() % spec.classes);
        out.labels[i] = label;

        // Uniform k_s-subset via partial Fisher-Yates.
        std::vector<int> order(static_cast<size_t>(t));
        for (int j = 0; j < t; ++j) order[j] = j;
        for (int j = 0; j < spec.salient; ++j) {
            const int pick = j + static_cast<int>(rng.next_u64() % (t - j));
            std::swap(order[j], order[pick]);
        }
        std::vector<int> sal(order.begin(), order.begin() + spec.salient);
        std::sort(sal.begin(), sal.end());
        std::vector<char> is_salient(static_cast<size_t>(t), 0);
        for (int s : sal) is_salient[s] = 1;
        out.salient[i] = std::move(sal);

        for (int fr = 0; fr < t; ++fr) {
            S* dst = out.frames.ptr() + (static_cast<int64_t>(i) * t + fr) * frame_sz;
            if (is_salient[fr]) {
                const std::vector<S>& tpl = templates[label];
                for (int64_t p = 0; p < frame_sz; ++p)
                    dst[p] = tpl[p] + static_cast<S>(spec.noise * rng.next_normal());
            } else {
                for (int64_t p = 0; p < frame_sz; ++p)
                    dst[p] = static_cast<S>(spec.background() * rng.next_normal());
            }
        }
    }
    return out;
}

template <class S>
VideoBatch<S> make_synthetic_batch(const SyntheticVideoSpec& spec, const RngState& base,
                                   int first_index, int count) {
    std::vector<int> indices(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) indices[i] = first_index + i;
    return make_synthetic_batch<S>(spec, base, indices);
}

}  // namespace afnet
