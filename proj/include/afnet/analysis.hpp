#pragma once

#include "afnet/stage.hpp"

namespace afnet {

struct DegenerateInputError : Error {
    using Error::Error;
};

// Per-element multiplicative coefficients accumulated across a
// shape-preserving stage: ample_product = prod_n (1 + dva_n) and
// focal_product = prod_n (1 + L_n * dvf_n), where dv_n = F_n(v_{n-1}) / v_{n-1}
// elementwise.  With these, the stage output factors as
// [theta * ample_product + (1-theta) * focal_product] * input.
template <class S>
struct EffectiveWeights {
    std::vector<S> ample_product, focal_product;  // shape of the stage input
    std::vector<S> theta;                         // realized fusion weights [N*C]
};

constexpr double kDivisionGuard = 1e-6;

namespace detail {

// Runs the stage under pinned masks/theta with capture and checks the
// geometry assumptions the factorization needs.
template <class S>
StageTrace<S> captured_run(AFStage<S>& stage, const Tensor<S>& input,
                           const std::vector<std::vector<S>>& masks, const std::vector<S>& theta,
                           Tensor<S>* direct_out) {
    AFNET_CHECK(stage.cfg.shape_preserving && stage.cfg.post_act == PostAct::None,
                "effective_weights: stage must be shape-preserving with no post-add activation");
    NoGradGuard ng;
    StageCtx<S> ctx;
    ctx.training = false;
    ctx.exec = ExecMode::MaskMultiply;
    ctx.capture = true;
    ctx.forced_masks = &masks;
    ctx.forced_theta = &theta;
    auto [out, trace] = stage.forward(input, ctx);
    if (direct_out) *direct_out = out;
    return trace;
}

template <class S>
void guarded_divide(const std::vector<S>& num, const std::vector<S>& den, std::vector<S>& out,
                    const char* what) {
    for (size_t i = 0; i < den.size(); ++i) {
        if (std::abs(static_cast<double>(den[i])) <= kDivisionGuard)
            throw DegenerateInputError(cat("effective_weights: ", what, " entry ", i,
                                           " has magnitude <= ", kDivisionGuard,
                                           "; resample the input"));
        out[i] = num[i] / den[i];
    }
}

}  // namespace detail

// masks: per block, per frame-row hard values; theta: [N*C] fusion weights.
template <class S>
EffectiveWeights<S> effective_weights(AFStage<S>& stage, const Tensor<S>& input,
                                      const std::vector<std::vector<S>>& masks,
                                      const std::vector<S>& theta) {
    StageTrace<S> trace = detail::captured_run(stage, input, masks, theta,
                                               static_cast<Tensor<S>*>(nullptr));
    const size_t n = input.data().size();
    EffectiveWeights<S> ew;
    ew.ample_product.assign(n, S(1));
    ew.focal_product.assign(n, S(1));
    ew.theta = trace.theta;

    std::vector<S> a_prev = input.data(), f_prev = input.data();
    std::vector<S> dv(n);
    for (size_t b = 0; b < trace.ample_main.size(); ++b) {
        detail::guarded_divide(trace.ample_main[b], a_prev, dv, "ample feature");
        for (size_t i = 0; i < n; ++i) {
            ew.ample_product[i] *= S(1) + dv[i];
            a_prev[i] += trace.ample_main[b][i];
        }
        detail::guarded_divide(trace.focal_main[b], f_prev, dv, "focal feature");
        const int64_t row = static_cast<int64_t>(n) / input.dim(0);
        for (size_t i = 0; i < n; ++i) {
            const S l = masks[b][static_cast<size_t>(static_cast<int64_t>(i) / row)];
            ew.focal_product[i] *= S(1) + l * dv[i];
            f_prev[i] += l * trace.focal_main[b][i];
        }
    }
    return ew;
}

struct IdentityReport {
    double max_rel_err = 0;
    double tol = 0;
    bool pass = false;
};

// Compares the direct stage output against the product-form reconstruction
// built from EffectiveWeights.  theta is broadcast per (video, channel) over
// frames and spatial positions, matching the fusion's channel-wise multiply.
template <class S>
IdentityReport verify_product_form(AFStage<S>& stage, const Tensor<S>& input,
                                   const std::vector<std::vector<S>>& masks,
                                   const std::vector<S>& theta, double tol) {
    Tensor<S> direct;
    detail::captured_run(stage, input, masks, theta, &direct);
    EffectiveWeights<S> ew = effective_weights(stage, input, masks, theta);

    const int f = input.dim(0), c = input.dim(1);
    const int64_t plane = static_cast<int64_t>(input.dim(2)) * input.dim(3);
    const int t = stage.t;
    IdentityReport rep;
    rep.tol = tol;
    for (int fr = 0; fr < f; ++fr) {
        const int v = fr / t;
        for (int ch = 0; ch < c; ++ch) {
            const S th = theta[static_cast<size_t>(v) * c + ch];
            const int64_t base = (static_cast<int64_t>(fr) * c + ch) * plane;
            for (int64_t p = 0; p < plane; ++p) {
                const S w = th * ew.ample_product[base + p] +
                            (S(1) - th) * ew.focal_product[base + p];
                const double hat = static_cast<double>(w * input.data()[base + p]);
                const double d = static_cast<double>(direct.data()[base + p]);
                const double rel = std::abs(d - hat) / std::max(std::abs(d), kDivisionGuard);
                rep.max_rel_err = std::max(rep.max_rel_err, rel);
            }
        }
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace afnet
