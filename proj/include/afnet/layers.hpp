#pragma once

#include <string>
#include <utility>

#include "afnet/ops.hpp"
#include "afnet/rng.hpp"
#include "afnet/tensor.hpp"

namespace afnet {

// Named views of a model's learnable tensors and persistent buffers (BN
// running statistics).  Tensors share storage with the model; buffer pointers
// are valid only for the lifetime of the model object they were taken from,
// so maps are built on demand rather than stored.
template <class S>
struct ParamMap {
    std::vector<std::pair<std::string, Tensor<S>>> params;
    std::vector<std::pair<std::string, std::vector<S>*>> buffers;

    void add_param(const std::string& name, const Tensor<S>& t) { params.emplace_back(name, t); }
    void add_buffer(const std::string& name, std::vector<S>* v) { buffers.emplace_back(name, v); }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : params) n += t.numel();
        return n;
    }
    void zero_grad() {
        for (auto& [name, t] : params) t.zero_grad();
    }
};

template <class S>
struct Conv2dLayer {
    Tensor<S> w, b;
    int stride = 1, pad = 0, groups = 1;

    Conv2dLayer() = default;
    Conv2dLayer(int in, int out, int k, int stride_, int pad_, int groups_, bool bias,
                RngState& rng)
        : stride(stride_), pad(pad_), groups(groups_) {
        const int fan_in = (in / groups_) * k * k;
        const S std = std::sqrt(S(2) / static_cast<S>(fan_in));
        w = Tensor<S>::from(rng.template normal_vec<S>(static_cast<size_t>(out) * (in / groups_) * k * k, std),
                            {out, in / groups_, k, k});
        w.set_requires_grad(true);
        if (bias) {
            b = Tensor<S>::zeros({out});
            b.set_requires_grad(true);
        }
    }
    Tensor<S> forward(const Tensor<S>& x) const { return conv2d(x, w, b, stride, pad, groups); }
    void register_state(ParamMap<S>& m, const std::string& prefix) {
        m.add_param(prefix + ".w", w);
        if (b.defined()) m.add_param(prefix + ".b", b);
    }
};

template <class S>
struct BatchNorm2dLayer {
    Tensor<S> gamma, beta;
    std::vector<S> running_mean, running_var;
    S momentum = S(0.1), eps = S(1e-5);

    BatchNorm2dLayer() = default;
    explicit BatchNorm2dLayer(int c)
        : gamma(Tensor<S>::ones({c})),
          beta(Tensor<S>::zeros({c})),
          running_mean(static_cast<size_t>(c), S(0)),
          running_var(static_cast<size_t>(c), S(1)) {
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
    }
    Tensor<S> forward(const Tensor<S>& x, bool training) {
        return batchnorm2d(x, gamma, beta, running_mean, running_var, training, momentum, eps);
    }
    void register_state(ParamMap<S>& m, const std::string& prefix) {
        m.add_param(prefix + ".gamma", gamma);
        m.add_param(prefix + ".beta", beta);
        m.add_buffer(prefix + ".running_mean", &running_mean);
        m.add_buffer(prefix + ".running_var", &running_var);
    }
};

template <class S>
struct LinearLayer {
    Tensor<S> w, b;

    LinearLayer() = default;
    LinearLayer(int in, int out, bool bias, RngState& rng) {
        const S std = std::sqrt(S(1) / static_cast<S>(in));
        w = Tensor<S>::from(rng.template normal_vec<S>(static_cast<size_t>(out) * in, std),
                            {out, in});
        w.set_requires_grad(true);
        if (bias) {
            b = Tensor<S>::zeros({out});
            b.set_requires_grad(true);
        }
    }
    Tensor<S> forward(const Tensor<S>& x) const { return linear(x, w, b); }
    void register_state(ParamMap<S>& m, const std::string& prefix) {
        m.add_param(prefix + ".w", w);
        if (b.defined()) m.add_param(prefix + ".b", b);
    }
};

}  // namespace afnet
