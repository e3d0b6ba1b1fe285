#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "afnet/rng.hpp"
#include "afnet/tensor.hpp"

namespace afnet::testutil {

// Central-difference gradient check of a scalar-valued functional against the
// reverse-mode result, in double precision.  `inputs` are the leaves to test;
// every entry of every leaf is perturbed.  Call at a generic point (jittered
// values) so kinks in relu/max/argmax sit away from the evaluation point.
// Returns the max relative error, with an absolute floor so near-zero
// gradients compare absolutely.
inline double grad_check(const std::function<Tensor<double>()>& f,
                         std::vector<Tensor<double>> inputs, double h = 1e-3) {
    for (auto& t : inputs) t.set_requires_grad(true);
    for (auto& t : inputs) t.grad().assign(static_cast<size_t>(t.numel()), 0.0);
    Tensor<double> out = f();
    out.backward();

    double worst = 0;
    for (auto& t : inputs) {
        std::vector<double> analytic = t.grad();
        auto& v = t.data();
        for (size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + h;
            const double up = f().item();
            v[i] = keep - h;
            const double dn = f().item();
            v[i] = keep;
            const double numeric = (up - dn) / (2 * h);
            const double rel = std::abs(analytic[i] - numeric) /
                               std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

inline Tensor<double> rand_tensor(Shape shape, RngState& rng, double scale = 1.0) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return Tensor<double>::from(rng.normal_vec<double>(static_cast<size_t>(n), scale),
                                std::move(shape));
}

// Reference convolution: plain quintuple loop, no autograd, groups honored.
inline std::vector<double> naive_conv2d(const std::vector<double>& x, int n, int c_in, int h,
                                        int w, const std::vector<double>& wt,
                                        const std::vector<double>& b, int c_out, int k,
                                        int stride, int pad, int groups) {
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (w + 2 * pad - k) / stride + 1;
    const int cig = c_in / groups, cog = c_out / groups;
    std::vector<double> y(static_cast<size_t>(n) * c_out * ho * wo, 0.0);
    for (int ni = 0; ni < n; ++ni)
        for (int co = 0; co < c_out; ++co) {
            const int g = co / cog;
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    double acc = b.empty() ? 0.0 : b[static_cast<size_t>(co)];
                    for (int ci = 0; ci < cig; ++ci)
                        for (int ki = 0; ki < k; ++ki)
                            for (int kj = 0; kj < k; ++kj) {
                                const int yy = i * stride + ki - pad;
                                const int xx = j * stride + kj - pad;
                                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                                acc += x[((static_cast<size_t>(ni) * c_in + g * cig + ci) * h +
                                          yy) *
                                             w +
                                         xx] *
                                       wt[((static_cast<size_t>(co) * cig + ci) * k + ki) * k +
                                          kj];
                            }
                    y[((static_cast<size_t>(ni) * c_out + co) * ho + i) * wo + j] = acc;
                }
        }
    return y;
}

inline std::vector<double> naive_avg_pool(const std::vector<double>& x, int n, int c, int h,
                                          int w, int k, int stride) {
    const int ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
    std::vector<double> y(static_cast<size_t>(n) * c * ho * wo, 0.0);
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    double acc = 0;
                    for (int ki = 0; ki < k; ++ki)
                        for (int kj = 0; kj < k; ++kj)
                            acc += x[((static_cast<size_t>(ni) * c + ci) * h + i * stride + ki) *
                                         w +
                                     j * stride + kj];
                    y[((static_cast<size_t>(ni) * c + ci) * ho + i) * wo + j] = acc / (k * k);
                }
    return y;
}

inline std::vector<double> naive_max_pool(const std::vector<double>& x, int n, int c, int h,
                                          int w, int k, int stride) {
    const int ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
    std::vector<double> y(static_cast<size_t>(n) * c * ho * wo, 0.0);
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    double best = -1e300;
                    for (int ki = 0; ki < k; ++ki)
                        for (int kj = 0; kj < k; ++kj)
                            best = std::max(
                                best,
                                x[((static_cast<size_t>(ni) * c + ci) * h + i * stride + ki) * w +
                                  j * stride + kj]);
                    y[((static_cast<size_t>(ni) * c + ci) * ho + i) * wo + j] = best;
                }
    return y;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <class S>
inline double max_abs_diff(const std::vector<S>& a, const std::vector<S>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace afnet::testutil
