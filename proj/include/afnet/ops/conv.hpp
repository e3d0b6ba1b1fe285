#pragma once

#include <Eigen/Core>

#include "afnet/macs.hpp"
#include "afnet/ops/basic.hpp"
#include "afnet/tensor.hpp"

namespace afnet {

inline int conv_out_extent(int in, int k, int stride, int pad) {
    const int out = (in + 2 * pad - k) / stride + 1;
    AFNET_CHECK(out > 0, "conv: kernel ", k, " stride ", stride, " pad ", pad,
                " produces empty output from extent ", in);
    return out;
}

namespace detail {

// Unpacks one image [C,H,W] into a [C*K*K, OH*OW] patch matrix.
template <class S>
void im2col(const S* x, int c_in, int h, int w, int k, int stride, int pad, int oh, int ow,
            S* col) {
    for (int c = 0; c < c_in; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                S* row = col + ((c * k + ki) * k + kj) * (oh * ow);
                for (int y = 0; y < oh; ++y) {
                    const int iy = y * stride - pad + ki;
                    if (iy < 0 || iy >= h) {
                        std::fill_n(row + y * ow, ow, S(0));
                        continue;
                    }
                    const S* src = x + (c * h + iy) * w;
                    for (int xo = 0; xo < ow; ++xo) {
                        const int ix = xo * stride - pad + kj;
                        row[y * ow + xo] = (ix >= 0 && ix < w) ? src[ix] : S(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters patch-matrix gradients back onto the image.
template <class S>
void col2im_add(const S* col, int c_in, int h, int w, int k, int stride, int pad, int oh, int ow,
                S* dx) {
    for (int c = 0; c < c_in; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const S* row = col + ((c * k + ki) * k + kj) * (oh * ow);
                for (int y = 0; y < oh; ++y) {
                    const int iy = y * stride - pad + ki;
                    if (iy < 0 || iy >= h) continue;
                    S* dst = dx + (c * h + iy) * w;
                    for (int xo = 0; xo < ow; ++xo) {
                        const int ix = xo * stride - pad + kj;
                        if (ix >= 0 && ix < w) dst[ix] += row[y * ow + xo];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Grouped 2-d convolution: x [N,Cin,H,W], w [Cout,Cin/g,K,K], optional b [Cout].
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride, int pad,
                 int groups = 1) {
    AFNET_CHECK(x.rank() == 4, "conv2d: input must be [N,C,H,W], got ", shape_str(x.shape()));
    AFNET_CHECK(w.rank() == 4, "conv2d: weight must be [Cout,Cin/g,K,K], got ",
                shape_str(w.shape()));
    AFNET_CHECK(w.dim(2) == w.dim(3), "conv2d: kernel must be square, got ", w.dim(2), "x",
                w.dim(3));
    const int n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int c_out = w.dim(0), k = w.dim(2);
    AFNET_CHECK(groups >= 1 && c_in % groups == 0 && c_out % groups == 0,
                "conv2d: groups ", groups, " must divide Cin ", c_in, " and Cout ", c_out);
    AFNET_CHECK(w.dim(1) == c_in / groups, "conv2d: weight axis 1 (", w.dim(1),
                ") != Cin/groups (", c_in / groups, ")");
    const int oh = conv_out_extent(h, k, stride, pad);
    const int ow = conv_out_extent(wd, k, stride, pad);
    const int cg_in = c_in / groups, cg_out = c_out / groups;
    const int col_rows = c_in * k * k, patch = oh * ow, g_rows = cg_in * k * k;

    Tensor<S> out({n, c_out, oh, ow});
    std::vector<S> col(static_cast<size_t>(col_rows) * patch);
    for (int im = 0; im < n; ++im) {
        detail::im2col(x.ptr() + static_cast<int64_t>(im) * c_in * h * wd, c_in, h, wd, k, stride,
                       pad, oh, ow, col.data());
        for (int g = 0; g < groups; ++g) {
            ConstMatMap<S> wm(w.ptr() + static_cast<int64_t>(g) * cg_out * g_rows, cg_out, g_rows);
            ConstMatMap<S> cm(col.data() + static_cast<int64_t>(g) * g_rows * patch, g_rows, patch);
            MatMap<S> om(out.ptr() + (static_cast<int64_t>(im) * c_out + g * cg_out) * patch,
                         cg_out, patch);
            om.noalias() = wm * cm;
        }
    }
    if (b.defined()) {
        AFNET_CHECK(b.rank() == 1 && b.dim(0) == c_out, "conv2d: bias shape ",
                    shape_str(b.shape()), " != [", c_out, "]");
        for (int im = 0; im < n; ++im)
            for (int c = 0; c < c_out; ++c) {
                S* dst = out.ptr() + (static_cast<int64_t>(im) * c_out + c) * patch;
                for (int p = 0; p < patch; ++p) dst[p] += b.data()[c];
            }
    }
    MacCounter::add(static_cast<uint64_t>(n) * c_out * cg_in * k * k * patch);

    std::vector<Tensor<S>> parents = b.defined() ? std::vector<Tensor<S>>{x, w, b}
                                                 : std::vector<Tensor<S>>{x, w};
    out.attach("conv2d", parents,
               [x, w, b, n, c_in, h, wd, c_out, k, stride, pad, groups, oh, ow,
                patch](TensorImpl<S>& self) mutable {
                   const int cg_in = c_in / groups, cg_out = c_out / groups;
                   const int col_rows = c_in * k * k, g_rows = cg_in * k * k;
                   std::vector<S> col(static_cast<size_t>(col_rows) * patch);
                   std::vector<S> dcol(static_cast<size_t>(col_rows) * patch);
                   const bool need_dx = x.requires_grad(), need_dw = w.requires_grad();
                   for (int im = 0; im < n; ++im) {
                       if (need_dw)
                           detail::im2col(x.ptr() + static_cast<int64_t>(im) * c_in * h * wd, c_in,
                                          h, wd, k, stride, pad, oh, ow, col.data());
                       for (int g = 0; g < groups; ++g) {
                           ConstMatMap<S> gym(
                               self.grad.data() +
                                   (static_cast<int64_t>(im) * c_out + g * cg_out) * patch,
                               cg_out, patch);
                           if (need_dw) {
                               MatMap<S> gwm(w.grad().data() +
                                                 static_cast<int64_t>(g) * cg_out * g_rows,
                                             cg_out, g_rows);
                               ConstMatMap<S> cm(col.data() + static_cast<int64_t>(g) * g_rows *
                                                                  patch,
                                                 g_rows, patch);
                               gwm.noalias() += gym * cm.transpose();
                           }
                           if (need_dx) {
                               ConstMatMap<S> wm(w.ptr() + static_cast<int64_t>(g) * cg_out *
                                                               g_rows,
                                                 cg_out, g_rows);
                               MatMap<S> dcm(dcol.data() + static_cast<int64_t>(g) * g_rows *
                                                               patch,
                                             g_rows, patch);
                               dcm.noalias() = wm.transpose() * gym;
                           }
                       }
                       if (need_dx)
                           detail::col2im_add(dcol.data(), c_in, h, wd, k, stride, pad, oh, ow,
                                              x.grad().data() +
                                                  static_cast<int64_t>(im) * c_in * h * wd);
                   }
                   if (b.defined() && b.requires_grad()) {
                       auto& gb = b.grad();
                       for (int im = 0; im < n; ++im)
                           for (int c = 0; c < c_out; ++c) {
                               const S* src =
                                   self.grad.data() + (static_cast<int64_t>(im) * c_out + c) * patch;
                               S acc = S(0);
                               for (int p = 0; p < patch; ++p) acc += src[p];
                               gb[c] += acc;
                           }
                   }
               });
    return out;
}

// Per-channel batch normalization over [N,C,H,W].  Normalization uses the
// biased batch variance; the running-variance update uses the unbiased one.
template <class S>
Tensor<S> batchnorm2d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                      std::vector<S>& running_mean, std::vector<S>& running_var, bool training,
                      S momentum = S(0.1), S eps = S(1e-5)) {
    AFNET_CHECK(x.rank() == 4, "batchnorm2d: input must be [N,C,H,W], got ",
                shape_str(x.shape()));
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    AFNET_CHECK(gamma.numel() == c && beta.numel() == c, "batchnorm2d: affine size != ", c);
    AFNET_CHECK(static_cast<int>(running_mean.size()) == c &&
                    static_cast<int>(running_var.size()) == c,
                "batchnorm2d: running stats size != ", c);
    const int64_t m = static_cast<int64_t>(n) * h * w;
    const int64_t plane = static_cast<int64_t>(h) * w;

    std::vector<S> mu(c), inv(c);
    if (training) {
        AFNET_CHECK(m >= 2, "batchnorm2d: need at least 2 values per channel in training, got ",
                    m);
        for (int ch = 0; ch < c; ++ch) {
            S s = S(0), s2 = S(0);
            for (int im = 0; im < n; ++im) {
                const S* src = x.ptr() + (static_cast<int64_t>(im) * c + ch) * plane;
                for (int64_t p = 0; p < plane; ++p) {
                    s += src[p];
                    s2 += src[p] * src[p];
                }
            }
            const S mean_c = s / static_cast<S>(m);
            const S var_c = std::max(s2 / static_cast<S>(m) - mean_c * mean_c, S(0));
            mu[ch] = mean_c;
            inv[ch] = S(1) / std::sqrt(var_c + eps);
            running_mean[ch] = (S(1) - momentum) * running_mean[ch] + momentum * mean_c;
            running_var[ch] = (S(1) - momentum) * running_var[ch] +
                              momentum * var_c * static_cast<S>(m) / static_cast<S>(m - 1);
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            mu[ch] = running_mean[ch];
            inv[ch] = S(1) / std::sqrt(running_var[ch] + eps);
        }
    }

    Tensor<S> out(x.shape());
    for (int im = 0; im < n; ++im)
        for (int ch = 0; ch < c; ++ch) {
            const S* src = x.ptr() + (static_cast<int64_t>(im) * c + ch) * plane;
            S* dst = out.ptr() + (static_cast<int64_t>(im) * c + ch) * plane;
            const S a = gamma.data()[ch] * inv[ch];
            const S bshift = beta.data()[ch] - a * mu[ch];
            for (int64_t p = 0; p < plane; ++p) dst[p] = a * src[p] + bshift;
        }

    out.attach("batchnorm2d", {x, gamma, beta},
               [x, gamma, beta, mu, inv, training, n, c, plane, m](TensorImpl<S>& self) mutable {
                   const auto xhat = [&](int im, int ch, int64_t p) {
                       return (x.data()[(static_cast<int64_t>(im) * c + ch) * plane + p] - mu[ch]) *
                              inv[ch];
                   };
                   std::vector<S> sum_dy(c, S(0)), sum_dyx(c, S(0));
                   const bool need_reduce =
                       gamma.requires_grad() || beta.requires_grad() || (training && x.requires_grad());
                   if (need_reduce)
                       for (int im = 0; im < n; ++im)
                           for (int ch = 0; ch < c; ++ch) {
                               const S* gy = self.grad.data() +
                                             (static_cast<int64_t>(im) * c + ch) * plane;
                               S a = S(0), bsum = S(0);
                               for (int64_t p = 0; p < plane; ++p) {
                                   a += gy[p];
                                   bsum += gy[p] * xhat(im, ch, p);
                               }
                               sum_dy[ch] += a;
                               sum_dyx[ch] += bsum;
                           }
                   if (gamma.requires_grad())
                       for (int ch = 0; ch < c; ++ch) gamma.grad()[ch] += sum_dyx[ch];
                   if (beta.requires_grad())
                       for (int ch = 0; ch < c; ++ch) beta.grad()[ch] += sum_dy[ch];
                   if (x.requires_grad()) {
                       auto& gx = x.grad();
                       const S invm = S(1) / static_cast<S>(m);
                       for (int im = 0; im < n; ++im)
                           for (int ch = 0; ch < c; ++ch) {
                               const int64_t base = (static_cast<int64_t>(im) * c + ch) * plane;
                               const S* gy = self.grad.data() + base;
                               const S a = gamma.data()[ch] * inv[ch];
                               if (training) {
                                   const S mdy = sum_dy[ch] * invm, mdyx = sum_dyx[ch] * invm;
                                   for (int64_t p = 0; p < plane; ++p)
                                       gx[base + p] +=
                                           a * (gy[p] - mdy - xhat(im, ch, p) * mdyx);
                               } else {
                                   for (int64_t p = 0; p < plane; ++p) gx[base + p] += a * gy[p];
                               }
                           }
                   }
               });
    return out;
}

}  // namespace afnet
