#pragma once

#include <Eigen/Core>
#include <cmath>
#include <span>

#include "afnet/macs.hpp"
#include "afnet/tensor.hpp"

namespace afnet {

template <class S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape(a, b, "add");
    Tensor<S> out(a.shape());
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    out.attach("add", {a, b}, [a, b](TensorImpl<S>& self) mutable {
        accumulate_grad(a, self.grad);
        accumulate_grad(b, self.grad);
    });
    return out;
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape(a, b, "sub");
    Tensor<S> out(a.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    out.attach("sub", {a, b}, [a, b](TensorImpl<S>& self) mutable {
        accumulate_grad(a, self.grad);
        accumulate_grad(b, self.grad, S(-1));
    });
    return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape(a, b, "mul");
    Tensor<S> out(a.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    out.attach("mul", {a, b}, [a, b](TensorImpl<S>& self) mutable {
        if (a.requires_grad()) {
            auto& g = a.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b.data()[i];
        }
        if (b.requires_grad()) {
            auto& g = b.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a.data()[i];
        }
    });
    return out;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    Tensor<S> out(a.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * c;
    out.attach("scale", {a},
               [a, c](TensorImpl<S>& self) mutable { accumulate_grad(a, self.grad, c); });
    return out;
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
    Tensor<S> out(a.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + c;
    out.attach("add_scalar", {a},
               [a](TensorImpl<S>& self) mutable { accumulate_grad(a, self.grad); });
    return out;
}

template <class S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
    return add(a, b);
}
template <class S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
    return sub(a, b);
}
template <class S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
    return mul(a, b);
}
template <class S>
Tensor<S> operator*(const Tensor<S>& a, S c) {
    return scale(a, c);
}
template <class S>
Tensor<S> operator*(S c, const Tensor<S>& a) {
    return scale(a, c);
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> out(x.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
    // The saved output is read back through `self`; capturing `out` itself
    // would pin its impl inside its own closure and leak the whole graph.
    out.attach("relu", {x}, [x](TensorImpl<S>& self) mutable {
        auto& g = x.grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (self.value[i] > S(0)) g[i] += self.grad[i];
    });
    return out;
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    Tensor<S> out(x.shape());
    for (int64_t i = 0; i < out.numel(); ++i)
        out.data()[i] = S(1) / (S(1) + std::exp(-x.data()[i]));
    out.attach("sigmoid", {x}, [x](TensorImpl<S>& self) mutable {
        auto& g = x.grad();
        for (size_t i = 0; i < g.size(); ++i) {
            const S y = self.value[i];
            g[i] += self.grad[i] * y * (S(1) - y);
        }
    });
    return out;
}

// log(max(x, floor)); gradient is zero where the floor clamps.
template <class S>
Tensor<S> log_clamped(const Tensor<S>& x, S floor) {
    Tensor<S> out(x.shape());
    for (int64_t i = 0; i < out.numel(); ++i)
        out.data()[i] = std::log(std::max(x.data()[i], floor));
    out.attach("log_clamped", {x}, [x, floor](TensorImpl<S>& self) mutable {
        auto& g = x.grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (x.data()[i] > floor) g[i] += self.grad[i] / x.data()[i];
    });
    return out;
}

namespace detail {
template <class S>
void softmax_slices(const S* in, S* out, int64_t outer, int n, int64_t inner) {
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t k = 0; k < inner; ++k) {
            const S* src = in + (o * n) * inner + k;
            S* dst = out + (o * n) * inner + k;
            S m = src[0];
            for (int i = 1; i < n; ++i) m = std::max(m, src[i * inner]);
            S z = S(0);
            for (int i = 0; i < n; ++i) {
                const S e = std::exp(src[i * inner] - m);
                dst[i * inner] = e;
                z += e;
            }
            for (int i = 0; i < n; ++i) dst[i * inner] /= z;
        }
    }
}
}  // namespace detail

template <class S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
    AFNET_CHECK(axis >= 0 && axis < x.rank(), "softmax: axis ", axis, " out of range for rank ",
                x.rank());
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const int n = x.dim(axis);
    Tensor<S> out(x.shape());
    detail::softmax_slices(x.ptr(), out.ptr(), outer, n, inner);
    out.attach("softmax", {x}, [x, outer, n, inner](TensorImpl<S>& self) mutable {
        auto& g = x.grad();
        const auto& y = self.value;
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t k = 0; k < inner; ++k) {
                const int64_t base = o * n * inner + k;
                S dot = S(0);
                for (int i = 0; i < n; ++i) dot += self.grad[base + i * inner] * y[base + i * inner];
                for (int i = 0; i < n; ++i) {
                    const int64_t idx = base + i * inner;
                    g[idx] += y[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
    return out;
}

// y = x W^T + b with x:[B,in], w:[out,in], b:[out]
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    AFNET_CHECK(x.rank() == 2, "linear: input must be rank 2, got ", shape_str(x.shape()));
    AFNET_CHECK(w.rank() == 2, "linear: weight must be rank 2, got ", shape_str(w.shape()));
    const int batch = x.dim(0), in = x.dim(1), out_f = w.dim(0);
    AFNET_CHECK(w.dim(1) == in, "linear: input axis 1 (", in, ") != weight axis 1 (", w.dim(1), ")");
    Tensor<S> out({batch, out_f});
    {
        ConstMatMap<S> xm(x.ptr(), batch, in);
        ConstMatMap<S> wm(w.ptr(), out_f, in);
        MatMap<S> om(out.ptr(), batch, out_f);
        om.noalias() = xm * wm.transpose();
    }
    if (b.defined()) {
        AFNET_CHECK(b.rank() == 1 && b.dim(0) == out_f, "linear: bias shape ",
                    shape_str(b.shape()), " != [", out_f, "]");
        for (int r = 0; r < batch; ++r)
            for (int c = 0; c < out_f; ++c) out.data()[r * out_f + c] += b.data()[c];
    }
    MacCounter::add(static_cast<uint64_t>(batch) * in * out_f);
    std::vector<Tensor<S>> parents = b.defined() ? std::vector<Tensor<S>>{x, w, b}
                                                 : std::vector<Tensor<S>>{x, w};
    out.attach("linear", parents, [x, w, b, batch, in, out_f](TensorImpl<S>& self) mutable {
        ConstMatMap<S> gym(self.grad.data(), batch, out_f);
        if (x.requires_grad()) {
            MatMap<S> gxm(x.grad().data(), batch, in);
            ConstMatMap<S> wm(w.ptr(), out_f, in);
            gxm.noalias() += gym * wm;
        }
        if (w.requires_grad()) {
            MatMap<S> gwm(w.grad().data(), out_f, in);
            ConstMatMap<S> xm(x.ptr(), batch, in);
            gwm.noalias() += gym.transpose() * xm;
        }
        if (b.defined() && b.requires_grad()) {
            auto& gb = b.grad();
            for (int r = 0; r < batch; ++r)
                for (int c = 0; c < out_f; ++c) gb[c] += self.grad[r * out_f + c];
        }
    });
    return out;
}

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
    AFNET_CHECK(shape_numel(shape) == x.numel(), "reshape: cannot view ", shape_str(x.shape()),
                " as ", shape_str(shape));
    Tensor<S> out = Tensor<S>::from(x.data(), std::move(shape));
    out.attach("reshape", {x},
               [x](TensorImpl<S>& self) mutable { accumulate_grad(x, self.grad); });
    return out;
}

template <class S>
Tensor<S> sum(const Tensor<S>& x) {
    S acc = S(0);
    for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
    Tensor<S> out = Tensor<S>::scalar(acc);
    out.attach("sum", {x}, [x](TensorImpl<S>& self) mutable {
        auto& g = x.grad();
        for (auto& v : g) v += self.grad[0];
    });
    return out;
}

template <class S>
Tensor<S> mean(const Tensor<S>& x) {
    AFNET_CHECK(x.numel() > 0, "mean: empty tensor");
    S acc = S(0);
    for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
    const S inv = S(1) / static_cast<S>(x.numel());
    Tensor<S> out = Tensor<S>::scalar(acc * inv);
    out.attach("mean", {x}, [x, inv](TensorImpl<S>& self) mutable {
        auto& g = x.grad();
        for (auto& v : g) v += self.grad[0] * inv;
    });
    return out;
}

// Extracts column j of a rank-2 tensor as a vector.
template <class S>
Tensor<S> column(const Tensor<S>& x, int j) {
    AFNET_CHECK(x.rank() == 2, "column: need rank 2, got ", shape_str(x.shape()));
    AFNET_CHECK(j >= 0 && j < x.dim(1), "column: index ", j, " out of range");
    const int rows = x.dim(0), cols = x.dim(1);
    Tensor<S> out({rows});
    for (int r = 0; r < rows; ++r) out.data()[r] = x.data()[r * cols + j];
    out.attach("column", {x}, [x, j, rows, cols](TensorImpl<S>& self) mutable {
        auto& g = x.grad();
        for (int r = 0; r < rows; ++r) g[r * cols + j] += self.grad[r];
    });
    return out;
}

template <class S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
    AFNET_CHECK(a.rank() == 2 && b.rank() == 2, "concat_cols: need rank-2 inputs");
    AFNET_CHECK(a.dim(0) == b.dim(0), "concat_cols: row count mismatch at axis 0: ", a.dim(0),
                " vs ", b.dim(0));
    const int rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    Tensor<S> out({rows, ca + cb});
    for (int r = 0; r < rows; ++r) {
        std::copy_n(a.ptr() + r * ca, ca, out.ptr() + r * (ca + cb));
        std::copy_n(b.ptr() + r * cb, cb, out.ptr() + r * (ca + cb) + ca);
    }
    out.attach("concat_cols", {a, b}, [a, b, rows, ca, cb](TensorImpl<S>& self) mutable {
        if (a.requires_grad()) {
            auto& g = a.grad();
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < ca; ++c) g[r * ca + c] += self.grad[r * (ca + cb) + c];
        }
        if (b.requires_grad()) {
            auto& g = b.grad();
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cb; ++c) g[r * cb + c] += self.grad[r * (ca + cb) + ca + c];
        }
    });
    return out;
}

// Forward takes the hard values, backward routes the incoming gradient to the
// soft relaxation unchanged.
template <class S>
Tensor<S> straight_through(const Tensor<S>& soft, const std::vector<S>& hard) {
    AFNET_CHECK(static_cast<int64_t>(hard.size()) == soft.numel(),
                "straight_through: hard/soft size mismatch");
    Tensor<S> out = Tensor<S>::from(hard, soft.shape());
    out.attach("straight_through", {soft},
               [soft](TensorImpl<S>& self) mutable { accumulate_grad(soft, self.grad); });
    return out;
}

template <class S>
Tensor<S> detach(const Tensor<S>& x) {
    return x.detach();
}

// Mean cross-entropy of logits[N,K] against integer labels.
template <class S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels) {
    AFNET_CHECK(logits.rank() == 2, "cross_entropy: logits must be [N,K]");
    const int n = logits.dim(0), k = logits.dim(1);
    AFNET_CHECK(static_cast<int>(labels.size()) == n, "cross_entropy: ", labels.size(),
                " labels for ", n, " rows");
    std::vector<S> probs(static_cast<size_t>(n) * k);
    detail::softmax_slices(logits.ptr(), probs.data(), n, k, 1);
    S total = S(0);
    for (int r = 0; r < n; ++r) {
        AFNET_CHECK(labels[r] >= 0 && labels[r] < k, "cross_entropy: label ", labels[r],
                    " out of range [0,", k, ")");
        const S* row = logits.ptr() + r * k;
        S m = row[0];
        for (int c = 1; c < k; ++c) m = std::max(m, row[c]);
        S z = S(0);
        for (int c = 0; c < k; ++c) z += std::exp(row[c] - m);
        total += std::log(z) + m - row[labels[r]];
    }
    Tensor<S> out = Tensor<S>::scalar(total / static_cast<S>(n));
    out.attach("cross_entropy", {logits},
               [logits, labels, probs, n, k](TensorImpl<S>& self) mutable {
                   auto& g = logits.grad();
                   const S w = self.grad[0] / static_cast<S>(n);
                   for (int r = 0; r < n; ++r)
                       for (int c = 0; c < k; ++c)
                           g[r * k + c] += w * (probs[r * k + c] - S(labels[r] == c ? 1 : 0));
               });
    return out;
}

template <class S>
std::vector<int> argmax_rows(const Tensor<S>& x) {
    AFNET_CHECK(x.rank() == 2, "argmax_rows: need rank 2");
    const int rows = x.dim(0), cols = x.dim(1);
    std::vector<int> out(static_cast<size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        int best = 0;
        for (int c = 1; c < cols; ++c)
            if (x.data()[r * cols + c] > x.data()[r * cols + best]) best = c;
        out[r] = best;
    }
    return out;
}

}  // namespace afnet
