#pragma once

#include "afnet/tensor.hpp"

namespace afnet {

// Video batches are laid out frame-major: [N*T, C, H, W] with frame t of
// video n at row n*T + t.  These ops treat axis 0 as the frame axis.

template <class S>
Tensor<S> gather_frames(const Tensor<S>& x, const std::vector<int>& indices) {
    AFNET_CHECK(x.rank() == 4, "gather_frames: input must be [F,C,H,W]");
    const int f = x.dim(0);
    const int64_t row = x.numel() / std::max(f, 1);
    Shape shape = x.shape();
    shape[0] = static_cast<int>(indices.size());
    Tensor<S> out(shape);
    for (size_t i = 0; i < indices.size(); ++i) {
        AFNET_CHECK(indices[i] >= 0 && indices[i] < f, "gather_frames: index ", indices[i],
                    " out of range [0,", f, ")");
        std::copy_n(x.ptr() + indices[i] * row, row, out.ptr() + static_cast<int64_t>(i) * row);
    }
    out.attach("gather_frames", {x}, [x, indices, row](TensorImpl<S>& self) mutable {
        auto& gx = x.grad();
        for (size_t i = 0; i < indices.size(); ++i) {
            const S* src = self.grad.data() + static_cast<int64_t>(i) * row;
            S* dst = gx.data() + indices[i] * row;
            for (int64_t p = 0; p < row; ++p) dst[p] += src[p];
        }
    });
    return out;
}

// Writes values at the given frame rows, zeros elsewhere.
template <class S>
Tensor<S> scatter_frames(const Tensor<S>& values, const std::vector<int>& indices, int total) {
    AFNET_CHECK(values.rank() == 4, "scatter_frames: values must be [M,C,H,W]");
    AFNET_CHECK(values.dim(0) == static_cast<int>(indices.size()), "scatter_frames: ",
                values.dim(0), " rows vs ", indices.size(), " indices");
    const int64_t row = values.dim(1) * static_cast<int64_t>(values.dim(2)) * values.dim(3);
    Tensor<S> out({total, values.dim(1), values.dim(2), values.dim(3)});
    for (size_t i = 0; i < indices.size(); ++i) {
        AFNET_CHECK(indices[i] >= 0 && indices[i] < total, "scatter_frames: index ", indices[i],
                    " out of range [0,", total, ")");
        std::copy_n(values.ptr() + static_cast<int64_t>(i) * row, row,
                    out.ptr() + indices[i] * row);
    }
    out.attach("scatter_frames", {values}, [values, indices, row](TensorImpl<S>& self) mutable {
        auto& gv = values.grad();
        for (size_t i = 0; i < indices.size(); ++i) {
            const S* src = self.grad.data() + indices[i] * row;
            S* dst = gv.data() + static_cast<int64_t>(i) * row;
            for (int64_t p = 0; p < row; ++p) dst[p] += src[p];
        }
    });
    return out;
}

// Parameter-free channel shift across adjacent frames of each length-T video:
// the first fold channels of frame t take their values from frame t-1, the
// next fold channels from frame t+1, the rest pass through; out-of-range
// neighbours contribute zeros.  reverse swaps the two shift directions.
template <class S>
Tensor<S> temporal_shift(const Tensor<S>& x, int t_frames, double fraction, bool reverse = false) {
    AFNET_CHECK(x.rank() == 4, "temporal_shift: input must be [F,C,H,W]");
    AFNET_CHECK(fraction > 0.0 && fraction <= 0.5, "temporal_shift: fraction must be in (0,0.5], got ",
                fraction);
    const int f = x.dim(0), c = x.dim(1);
    AFNET_CHECK(t_frames >= 1 && f % t_frames == 0, "temporal_shift: frame axis ", f,
                " not a multiple of T=", t_frames);
    const int fold = static_cast<int>(c * fraction);
    AFNET_CHECK(2 * fold <= c, "temporal_shift: 2*fold exceeds channel count");
    const int videos = f / t_frames;
    const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);

    // src_frame(t, c) for the forward pass; the backward pass inverts it.
    const int fwd = reverse ? +1 : -1;  // frame t reads t+fwd in the first fold
    Tensor<S> out(x.shape());
    auto at = [&](const S* base, int frame, int ch) {
        return base + (static_cast<int64_t>(frame) * c + ch) * plane;
    };
    for (int v = 0; v < videos; ++v) {
        const int f0 = v * t_frames;
        for (int t = 0; t < t_frames; ++t) {
            for (int ch = 0; ch < c; ++ch) {
                int src_t = t;
                if (fold > 0 && ch < fold) src_t = t + fwd;
                else if (fold > 0 && ch < 2 * fold) src_t = t - fwd;
                S* dst = const_cast<S*>(at(out.ptr(), f0 + t, ch));
                if (src_t < 0 || src_t >= t_frames)
                    std::fill_n(dst, plane, S(0));
                else
                    std::copy_n(at(x.ptr(), f0 + src_t, ch), plane, dst);
            }
        }
    }
    out.attach("temporal_shift", {x},
               [x, videos, t_frames, c, fold, plane, fwd](TensorImpl<S>& self) mutable {
                   auto& gx = x.grad();
                   for (int v = 0; v < videos; ++v) {
                       const int f0 = v * t_frames;
                       for (int t = 0; t < t_frames; ++t)
                           for (int ch = 0; ch < c; ++ch) {
                               int src_t = t;
                               if (fold > 0 && ch < fold) src_t = t + fwd;
                               else if (fold > 0 && ch < 2 * fold) src_t = t - fwd;
                               if (src_t < 0 || src_t >= t_frames) continue;
                               const S* gy =
                                   self.grad.data() + (static_cast<int64_t>(f0 + t) * c + ch) * plane;
                               S* dst = gx.data() +
                                        (static_cast<int64_t>(f0 + src_t) * c + ch) * plane;
                               for (int64_t p = 0; p < plane; ++p) dst[p] += gy[p];
                           }
                   }
               });
    return out;
}

// Per-video mean over frames: [N*T, K] -> [N, K].
template <class S>
Tensor<S> frame_mean(const Tensor<S>& x, int t_frames) {
    AFNET_CHECK(x.rank() == 2, "frame_mean: input must be [F,K]");
    const int f = x.dim(0), k = x.dim(1);
    AFNET_CHECK(t_frames >= 1 && f % t_frames == 0, "frame_mean: frame axis ", f,
                " not a multiple of T=", t_frames);
    const int n = f / t_frames;
    Tensor<S> out({n, k});
    const S inv = S(1) / static_cast<S>(t_frames);
    for (int v = 0; v < n; ++v)
        for (int c = 0; c < k; ++c) {
            S acc = S(0);
            for (int t = 0; t < t_frames; ++t) acc += x.data()[(v * t_frames + t) * k + c];
            out.data()[v * k + c] = acc * inv;
        }
    out.attach("frame_mean", {x}, [x, n, k, t_frames, inv](TensorImpl<S>& self) mutable {
        auto& gx = x.grad();
        for (int v = 0; v < n; ++v)
            for (int t = 0; t < t_frames; ++t)
                for (int c = 0; c < k; ++c)
                    gx[(v * t_frames + t) * k + c] += self.grad[v * k + c] * inv;
    });
    return out;
}

// Scales each frame by a scalar gate: x [F,C,H,W] * m [F].
template <class S>
Tensor<S> mul_frames(const Tensor<S>& x, const Tensor<S>& m) {
    AFNET_CHECK(x.rank() == 4, "mul_frames: input must be [F,C,H,W]");
    AFNET_CHECK(m.rank() == 1 && m.dim(0) == x.dim(0), "mul_frames: gate shape ",
                shape_str(m.shape()), " != [", x.dim(0), "]");
    const int f = x.dim(0);
    const int64_t row = x.numel() / std::max(f, 1);
    Tensor<S> out(x.shape());
    for (int fr = 0; fr < f; ++fr) {
        const S g = m.data()[fr];
        const S* src = x.ptr() + fr * row;
        S* dst = out.ptr() + fr * row;
        for (int64_t p = 0; p < row; ++p) dst[p] = src[p] * g;
    }
    out.attach("mul_frames", {x, m}, [x, m, f, row](TensorImpl<S>& self) mutable {
        if (x.requires_grad()) {
            auto& gx = x.grad();
            for (int fr = 0; fr < f; ++fr) {
                const S g = m.data()[fr];
                for (int64_t p = 0; p < row; ++p) gx[fr * row + p] += self.grad[fr * row + p] * g;
            }
        }
        if (m.requires_grad()) {
            auto& gm = m.grad();
            for (int fr = 0; fr < f; ++fr) {
                S acc = S(0);
                for (int64_t p = 0; p < row; ++p)
                    acc += self.grad[fr * row + p] * x.data()[fr * row + p];
                gm[fr] += acc;
            }
        }
    });
    return out;
}

// Scales channels by a per-video factor: x [N*T,C,H,W] * theta [N,C],
// broadcasting theta over the T frames and the spatial extent of each video.
template <class S>
Tensor<S> mul_video_channels(const Tensor<S>& x, const Tensor<S>& theta, int t_frames) {
    AFNET_CHECK(x.rank() == 4, "mul_video_channels: input must be [F,C,H,W]");
    AFNET_CHECK(theta.rank() == 2, "mul_video_channels: theta must be [N,C]");
    const int f = x.dim(0), c = x.dim(1);
    AFNET_CHECK(t_frames >= 1 && f % t_frames == 0 && f / t_frames == theta.dim(0),
                "mul_video_channels: ", f, " frames vs theta for ", theta.dim(0), " videos of T=",
                t_frames);
    AFNET_CHECK(theta.dim(1) == c, "mul_video_channels: theta channels ", theta.dim(1), " != ", c);
    const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor<S> out(x.shape());
    for (int fr = 0; fr < f; ++fr) {
        const int v = fr / t_frames;
        for (int ch = 0; ch < c; ++ch) {
            const S g = theta.data()[v * c + ch];
            const int64_t base = (static_cast<int64_t>(fr) * c + ch) * plane;
            for (int64_t p = 0; p < plane; ++p) out.data()[base + p] = x.data()[base + p] * g;
        }
    }
    out.attach("mul_video_channels", {x, theta},
               [x, theta, f, c, t_frames, plane](TensorImpl<S>& self) mutable {
                   if (x.requires_grad()) {
                       auto& gx = x.grad();
                       for (int fr = 0; fr < f; ++fr) {
                           const int v = fr / t_frames;
                           for (int ch = 0; ch < c; ++ch) {
                               const S g = theta.data()[v * c + ch];
                               const int64_t base = (static_cast<int64_t>(fr) * c + ch) * plane;
                               for (int64_t p = 0; p < plane; ++p)
                                   gx[base + p] += self.grad[base + p] * g;
                           }
                       }
                   }
                   if (theta.requires_grad()) {
                       auto& gt = theta.grad();
                       for (int fr = 0; fr < f; ++fr) {
                           const int v = fr / t_frames;
                           for (int ch = 0; ch < c; ++ch) {
                               const int64_t base = (static_cast<int64_t>(fr) * c + ch) * plane;
                               S acc = S(0);
                               for (int64_t p = 0; p < plane; ++p)
                                   acc += self.grad[base + p] * x.data()[base + p];
                               gt[v * c + ch] += acc;
                           }
                       }
                   }
               });
    return out;
}

// Scales each frame's spatial positions by a per-frame map: x [F,C,H,W] * m [F,H,W].
template <class S>
Tensor<S> mul_spatial(const Tensor<S>& x, const Tensor<S>& m) {
    AFNET_CHECK(x.rank() == 4 && m.rank() == 3, "mul_spatial: need [F,C,H,W] and [F,H,W]");
    AFNET_CHECK(m.dim(0) == x.dim(0) && m.dim(1) == x.dim(2) && m.dim(2) == x.dim(3),
                "mul_spatial: mask shape ", shape_str(m.shape()), " does not match input ",
                shape_str(x.shape()));
    const int f = x.dim(0), c = x.dim(1);
    const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor<S> out(x.shape());
    for (int fr = 0; fr < f; ++fr)
        for (int ch = 0; ch < c; ++ch) {
            const int64_t base = (static_cast<int64_t>(fr) * c + ch) * plane;
            const S* mk = m.ptr() + fr * plane;
            for (int64_t p = 0; p < plane; ++p) out.data()[base + p] = x.data()[base + p] * mk[p];
        }
    out.attach("mul_spatial", {x, m}, [x, m, f, c, plane](TensorImpl<S>& self) mutable {
        if (x.requires_grad()) {
            auto& gx = x.grad();
            for (int fr = 0; fr < f; ++fr)
                for (int ch = 0; ch < c; ++ch) {
                    const int64_t base = (static_cast<int64_t>(fr) * c + ch) * plane;
                    const S* mk = m.ptr() + fr * plane;
                    for (int64_t p = 0; p < plane; ++p)
                        gx[base + p] += self.grad[base + p] * mk[p];
                }
        }
        if (m.requires_grad()) {
            auto& gm = m.grad();
            for (int fr = 0; fr < f; ++fr)
                for (int64_t p = 0; p < plane; ++p) {
                    S acc = S(0);
                    for (int ch = 0; ch < c; ++ch) {
                        const int64_t base = (static_cast<int64_t>(fr) * c + ch) * plane;
                        acc += self.grad[base + p] * x.data()[base + p];
                    }
                    gm[fr * plane + p] += acc;
                }
        }
    });
    return out;
}

}  // namespace afnet
