#pragma once

#include "afnet/ops/basic.hpp"
#include "afnet/tensor.hpp"

namespace afnet {

template <class S>
Tensor<S> avg_pool2d(const Tensor<S>& x, int k, int stride) {
    AFNET_CHECK(x.rank() == 4, "avg_pool2d: input must be [N,C,H,W]");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_extent(h, k, stride, 0), ow = conv_out_extent(w, k, stride, 0);
    Tensor<S> out({n, c, oh, ow});
    const S inv = S(1) / static_cast<S>(k * k);
    for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
        const S* src = x.ptr() + nc * h * w;
        S* dst = out.ptr() + nc * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo) {
                S acc = S(0);
                for (int ki = 0; ki < k; ++ki)
                    for (int kj = 0; kj < k; ++kj)
                        acc += src[(y * stride + ki) * w + xo * stride + kj];
                dst[y * ow + xo] = acc * inv;
            }
    }
    out.attach("avg_pool2d", {x}, [x, n, c, h, w, k, stride, oh, ow, inv](
                                      TensorImpl<S>& self) mutable {
        auto& gx = x.grad();
        for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
            const S* gy = self.grad.data() + nc * oh * ow;
            S* dst = gx.data() + nc * h * w;
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    const S g = gy[y * ow + xo] * inv;
                    for (int ki = 0; ki < k; ++ki)
                        for (int kj = 0; kj < k; ++kj)
                            dst[(y * stride + ki) * w + xo * stride + kj] += g;
                }
        }
    });
    return out;
}

template <class S>
Tensor<S> max_pool2d(const Tensor<S>& x, int k, int stride) {
    AFNET_CHECK(x.rank() == 4, "max_pool2d: input must be [N,C,H,W]");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_extent(h, k, stride, 0), ow = conv_out_extent(w, k, stride, 0);
    Tensor<S> out({n, c, oh, ow});
    // First max wins ties, matching the gradient routing below.
    std::vector<int> arg(static_cast<size_t>(out.numel()));
    for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
        const S* src = x.ptr() + nc * h * w;
        for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo) {
                int best = (y * stride) * w + xo * stride;
                for (int ki = 0; ki < k; ++ki)
                    for (int kj = 0; kj < k; ++kj) {
                        const int idx = (y * stride + ki) * w + xo * stride + kj;
                        if (src[idx] > src[best]) best = idx;
                    }
                const int64_t o = nc * oh * ow + y * ow + xo;
                out.data()[o] = src[best];
                arg[o] = best;
            }
    }
    out.attach("max_pool2d", {x}, [x, arg, n, c, h, w, oh, ow](TensorImpl<S>& self) mutable {
        auto& gx = x.grad();
        for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc)
            for (int64_t p = 0; p < static_cast<int64_t>(oh) * ow; ++p)
                gx[nc * h * w + arg[nc * oh * ow + p]] += self.grad[nc * oh * ow + p];
    });
    return out;
}

// Spatial mean per (image, channel): [N,C,H,W] -> [N,C].
template <class S>
Tensor<S> gap_flat(const Tensor<S>& x) {
    AFNET_CHECK(x.rank() == 4, "gap_flat: input must be [N,C,H,W]");
    const int n = x.dim(0), c = x.dim(1);
    const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor<S> out({n, c});
    const S inv = S(1) / static_cast<S>(plane);
    for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
        const S* src = x.ptr() + nc * plane;
        S acc = S(0);
        for (int64_t p = 0; p < plane; ++p) acc += src[p];
        out.data()[nc] = acc * inv;
    }
    out.attach("gap_flat", {x}, [x, n, c, plane, inv](TensorImpl<S>& self) mutable {
        auto& gx = x.grad();
        for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
            const S g = self.grad[nc] * inv;
            for (int64_t p = 0; p < plane; ++p) gx[nc * plane + p] += g;
        }
    });
    return out;
}

template <class S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
    Tensor<S> flat = gap_flat(x);
    return reshape(flat, {x.dim(0), x.dim(1), 1, 1});
}

// Nearest-neighbour upsampling by an integer factor.
template <class S>
Tensor<S> nearest_upsample(const Tensor<S>& x, int factor) {
    AFNET_CHECK(x.rank() == 4, "nearest_upsample: input must be [N,C,H,W]");
    AFNET_CHECK(factor >= 1, "nearest_upsample: factor must be >= 1, got ", factor);
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h * factor, ow = w * factor;
    Tensor<S> out({n, c, oh, ow});
    for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
        const S* src = x.ptr() + nc * h * w;
        S* dst = out.ptr() + nc * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo) dst[y * ow + xo] = src[(y / factor) * w + xo / factor];
    }
    out.attach("nearest_upsample", {x},
               [x, n, c, h, w, factor, oh, ow](TensorImpl<S>& self) mutable {
                   auto& gx = x.grad();
                   for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc)
                       for (int y = 0; y < oh; ++y)
                           for (int xo = 0; xo < ow; ++xo)
                               gx[nc * h * w + (y / factor) * w + xo / factor] +=
                                   self.grad[nc * oh * ow + y * ow + xo];
               });
    return out;
}

}  // namespace afnet
