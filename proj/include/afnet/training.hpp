#pragma once

#include <functional>
#include <map>

#include "afnet/model.hpp"
#include "afnet/synthetic.hpp"

namespace afnet {

struct NumericError : Error {
    using Error::Error;
};

enum class Policy { Navigation, Random, Uniform, Normal, CenterCrop };

inline Policy policy_from_string(const std::string& s) {
    if (s == "navigation") return Policy::Navigation;
    if (s == "random") return Policy::Random;
    if (s == "uniform") return Policy::Uniform;
    if (s == "normal") return Policy::Normal;
    if (s == "center_crop") return Policy::CenterCrop;
    throw Error(cat("unknown policy '", s,
                    "' (expected navigation|random|uniform|normal|center_crop)"));
}

inline std::string to_string(Policy p) {
    switch (p) {
        case Policy::Navigation: return "navigation";
        case Policy::Random: return "random";
        case Policy::Uniform: return "uniform";
        case Policy::Normal: return "normal";
        case Policy::CenterCrop: return "center_crop";
    }
    return "?";
}

// One video's fixed temporal selection pattern.  random: uniform k-subset;
// uniform: equal-step indices; normal: k Gumbel-top-k draws from a discrete
// mid-sequence Gaussian (without replacement).  k = round(ratio * T).
template <class S>
std::vector<S> fixed_policy_frames(Policy policy, int t, double ratio, RngState& rng) {
    AFNET_CHECK(ratio > 0.0 && ratio <= 1.0, "policy: ratio must be in (0,1], got ", ratio);
    const int k = static_cast<int>(std::lround(ratio * t));
    std::vector<S> mask(static_cast<size_t>(t), S(0));
    switch (policy) {
        case Policy::Random: {
            std::vector<int> order(static_cast<size_t>(t));
            for (int j = 0; j < t; ++j) order[j] = j;
            for (int j = 0; j < k; ++j) {
                const int pick = j + static_cast<int>(rng.next_u64() % (t - j));
                std::swap(order[j], order[pick]);
            }
            for (int j = 0; j < k; ++j) mask[order[j]] = S(1);
            break;
        }
        case Policy::Uniform: {
            for (int j = 0; j < k; ++j) mask[j * t / k] = S(1);
            break;
        }
        case Policy::Normal: {
            const double mid = (t - 1) / 2.0, scale = (t - 1) / 4.0;
            std::vector<std::pair<double, int>> score(static_cast<size_t>(t));
            for (int j = 0; j < t; ++j) {
                const double z = scale > 0 ? (j - mid) / scale : 0.0;
                score[j] = {-0.5 * z * z + rng.next_gumbel(), j};
            }
            std::partial_sort(score.begin(), score.begin() + k, score.end(),
                              [](const auto& a, const auto& b) { return a.first > b.first; });
            for (int j = 0; j < k; ++j) mask[score[j].second] = S(1);
            break;
        }
        default:
            throw Error(cat("fixed_policy_frames: ", to_string(policy),
                            " is not a temporal policy"));
    }
    return mask;
}

// Batch version: one independent draw per video, concatenated to [N*T].
template <class S>
std::vector<S> policy_mask_batch(Policy policy, int n_videos, int t, double ratio,
                                 RngState& rng) {
    std::vector<S> out;
    out.reserve(static_cast<size_t>(n_videos) * t);
    for (int v = 0; v < n_videos; ++v) {
        std::vector<S> m = fixed_policy_frames<S>(policy, t, ratio, rng);
        out.insert(out.end(), m.begin(), m.end());
    }
    return out;
}

// Central ratio-fraction of grid cells, deterministic: the round(ratio*G*G)
// cells whose centers are nearest the grid center, ties broken by row-major
// index.
template <class S>
std::vector<S> center_crop_cells(int grid, double ratio) {
    AFNET_CHECK(grid >= 1 && ratio > 0.0 && ratio <= 1.0, "center_crop: bad grid/ratio");
    const int cells = grid * grid;
    const int k = static_cast<int>(std::lround(ratio * cells));
    std::vector<std::pair<double, int>> dist(static_cast<size_t>(cells));
    const double mid = grid / 2.0;
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
            const double dy = (i + 0.5) - mid, dx = (j + 0.5) - mid;
            dist[i * grid + j] = {dy * dy + dx * dx, i * grid + j};
        }
    std::sort(dist.begin(), dist.end());
    std::vector<S> mask(static_cast<size_t>(cells), S(0));
    for (int c = 0; c < k; ++c) mask[dist[c].second] = S(1);
    return mask;
}

struct LossBreakdown {
    double cross_entropy = 0;
    std::vector<double> block_ratios;  // soft select ratio per AF block
    double ratio_penalty = 0;          // penalty term as it enters the loss
    double lambda = 0;
    double total = 0;
};

// CE on the averaged video logits plus the ratio regularizer: each gated
// block contributes its own squared deviation, total = CE + λ·Σ_n (r_n − RT)²
// with r_n the batch-mean soft select ratio at block n.  Per-block deviations
// keep every gate individually pulled to the target; a pooled ratio would let
// early blocks over-select while late blocks starve.  Spatial masks, when
// present, are pulled toward rs_target the same way.
template <class S>
std::pair<Tensor<S>, LossBreakdown> total_loss(const Prediction<S>& pred,
                                               const std::vector<int>& labels,
                                               const std::vector<StageTrace<S>>& traces,
                                               double rt, double lambda,
                                               double rs_target = 1.0) {
    LossBreakdown bd;
    bd.lambda = lambda;
    Tensor<S> loss = cross_entropy(pred.video_logits, labels);
    bd.cross_entropy = static_cast<double>(loss.item());
    int blocks = 0;
    for (const auto& tr : traces) {
        for (const auto& m : tr.masks) {
            Tensor<S> r = mean(m.soft);
            bd.block_ratios.push_back(static_cast<double>(r.item()));
            Tensor<S> d = add_scalar(r, S(-rt));
            Tensor<S> p = scale(d * d, S(lambda));
            bd.ratio_penalty += static_cast<double>(p.item());
            loss = loss + p;
            ++blocks;
        }
        for (const auto& sm : tr.spatial) {
            Tensor<S> d = add_scalar(mean(sm.soft), S(-rs_target));
            Tensor<S> p = scale(d * d, S(lambda));
            bd.ratio_penalty += static_cast<double>(p.item());
            loss = loss + p;
        }
    }
    AFNET_CHECK(!(lambda > 0 && blocks == 0), "total_loss: ratio penalty with no masks");
    bd.total = static_cast<double>(loss.item());
    return {std::move(loss), std::move(bd)};
}

// Classical momentum SGD with L2 weight decay folded into the gradient.
// Parameters whose gradient was never touched this step are left unchanged.
template <class S>
struct SGD {
    double lr = 0.02, momentum = 0.9, weight_decay = 1e-4;
    std::map<std::string, std::vector<S>> velocity;

    void step(ParamMap<S>& pm) {
        for (auto& [name, t] : pm.params) {
            if (t.impl()->grad.empty()) continue;
            auto& v = velocity[name];
            v.resize(static_cast<size_t>(t.numel()), S(0));
            auto& w = t.data();
            const auto& g = t.impl()->grad;
            for (size_t i = 0; i < w.size(); ++i) {
                const S eff = g[i] + static_cast<S>(weight_decay) * w[i];
                v[i] = static_cast<S>(momentum) * v[i] + eff;
                w[i] -= static_cast<S>(lr) * v[i];
            }
        }
    }
};

struct TrainConfig {
    double rt = 0.5;
    double rs = 1.0;
    double lambda = 1.0;
    double lr = 0.02, momentum = 0.9, weight_decay = 1e-4;
    int epochs = 30, batch = 32;
    int train_videos = 384, eval_videos = 128;
    Policy policy = Policy::Navigation;
    GateMode gate = GateMode::GumbelST;
    uint64_t seed = 0;
    TauMode tau_mode = TauMode::Exponential;
    double tau_start = 1.0, tau_end = 0.01;
    // Gate-training schedule.  The backbone first trains under a random frame
    // policy so the gate head later reads mature features; the ratio target
    // then ramps from the head's native initial ratio (0.5) down to rt so the
    // penalty never crushes selection before content signal exists; gate-head
    // gradients are boosted because their loss path is orders of magnitude
    // shallower than the backbone's.
    int nav_warmup_epochs = 6;
    int rt_warmup_epochs = 6;
    double nav_grad_scale = 10.0;
};

struct EpochMetrics {
    int epoch = 0;
    std::string split;
    double accuracy = 0, ce = 0, ratio_penalty = 0;
    std::vector<double> rt_blocks;  // hard-mask mean per AF block
    double tau = 0;
    double precision_salient = 0;
};

// Fraction of hard-selected frames that are planted-salient, averaged over
// every (video, block) pair with a nonempty selection.
template <class S>
double selection_precision(const std::vector<StageTrace<S>>& traces, const VideoBatch<S>& batch,
                           int t) {
    double sum = 0;
    int cells = 0;
    for (const auto& tr : traces)
        for (const auto& m : tr.masks)
            for (int v = 0; v < batch.videos(); ++v) {
                int sel = 0, hit = 0;
                for (int fr = 0; fr < t; ++fr)
                    if (m.hard[static_cast<size_t>(v) * t + fr] > S(0.5)) {
                        ++sel;
                        if (std::find(batch.salient[v].begin(), batch.salient[v].end(), fr) !=
                            batch.salient[v].end())
                            ++hit;
                    }
                if (sel > 0) {
                    sum += static_cast<double>(hit) / sel;
                    ++cells;
                }
            }
    return cells > 0 ? sum / cells : 0.0;
}

// Deterministic training driver.  Every random draw derives from
// (seed, purpose, step) rather than call history, so a run can be resumed
// from (parameters, optimizer state, step count) bit-exactly.
template <class S>
class Trainer {
  public:
    // Derivation tags for the per-purpose RNG streams.
    static constexpr uint64_t kInitTag = 0, kTrainDataTag = 1, kEvalDataTag = 2,
                              kGumbelTag = 3, kPolicyTag = 4, kShuffleTag = 5, kEvalPolicyTag = 6;

    Model<S>& model;
    TrainConfig cfg;
    SyntheticVideoSpec spec;
    SGD<S> opt;
    TemperatureSchedule sched;
    int64_t step = 0;
    int epochs_done = 0;
    std::vector<EpochMetrics> history;
    // Called per eval batch: (first video index, traces, batch).
    std::function<void(int, const std::vector<StageTrace<S>>&, const VideoBatch<S>&)>
        eval_observer;

    Trainer(Model<S>& m, const TrainConfig& c, const SyntheticVideoSpec& s)
        : model(m), cfg(c), spec(s) {
        AFNET_CHECK(cfg.batch >= 1 && cfg.train_videos >= cfg.batch,
                    "trainer: need at least one full batch");
        opt.lr = cfg.lr;
        opt.momentum = cfg.momentum;
        opt.weight_decay = cfg.weight_decay;
        sched = {cfg.tau_start, cfg.tau_end,
                 static_cast<int64_t>(steps_per_epoch()) * std::max(cfg.epochs, 1), cfg.tau_mode};
    }

    int steps_per_epoch() const { return cfg.train_videos / cfg.batch; }
    RngState base() const { return RngState{cfg.seed, 0}; }

    double lr_at(int epoch) const {
        double lr = cfg.lr;
        if (epoch >= cfg.epochs * 6 / 10) lr *= 0.1;
        if (epoch >= cfg.epochs * 9 / 10) lr *= 0.1;
        return lr;
    }
    double tau_at(int64_t s) const { return temperature_at(std::min(s, sched.total_steps), sched); }

    // Effective temporal ratio target: holds at the zero-init head's native
    // ratio (0.5) through the policy warmup, then ramps linearly to cfg.rt.
    double rt_target_at(int64_t s) const {
        const int64_t start = static_cast<int64_t>(cfg.nav_warmup_epochs) * steps_per_epoch();
        const int64_t warm = static_cast<int64_t>(cfg.rt_warmup_epochs) * steps_per_epoch();
        if (warm <= 0) return cfg.rt;
        const int64_t ns = s - start;
        if (ns <= 0) return 0.5;
        if (ns >= warm) return cfg.rt;
        return 0.5 + (cfg.rt - 0.5) * static_cast<double>(ns) / static_cast<double>(warm);
    }

    EpochMetrics train_epoch() {
        const int epoch = epochs_done;
        opt.lr = lr_at(epoch);
        const int nb = steps_per_epoch();

        // Epoch-local shuffle of sample indices; sample content is index-keyed.
        std::vector<int> perm(static_cast<size_t>(cfg.train_videos));
        for (int i = 0; i < cfg.train_videos; ++i) perm[i] = i;
        RngState shuffle_rng = base().derive(kShuffleTag).derive(static_cast<uint64_t>(epoch));
        for (int i = cfg.train_videos - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.next_u64() % (i + 1));
            std::swap(perm[i], perm[j]);
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.split = "train";
        std::vector<double> rt_sum;
        double prec_sum = 0;
        int correct = 0, seen = 0;
        double ce_sum = 0, pen_sum = 0;

        for (int b = 0; b < nb; ++b) {
            const std::vector<int> idx(perm.begin() + static_cast<int64_t>(b) * cfg.batch,
                                       perm.begin() + static_cast<int64_t>(b + 1) * cfg.batch);
            VideoBatch<S> batch = make_synthetic_batch<S>(spec, base().derive(kTrainDataTag), idx);
            const double tau = tau_at(step);
            RngState gumbel = base().derive(kGumbelTag).derive(static_cast<uint64_t>(step));
            RngState policy_rng = base().derive(kPolicyTag).derive(static_cast<uint64_t>(step));

            ModelCtx<S> ctx;
            ctx.training = true;
            ctx.tau = tau;
            ctx.gate_mode = cfg.gate;
            ctx.rng = &gumbel;
            std::vector<S> forced, forced_sp;
            const bool warm = cfg.policy == Policy::Navigation && epoch < cfg.nav_warmup_epochs;
            if (warm) {
                forced = policy_mask_batch<S>(Policy::Random, cfg.batch, spec.frames, cfg.rt,
                                              policy_rng);
                ctx.forced_mask = &forced;
            } else {
                setup_policy(ctx, forced, forced_sp, cfg.batch, policy_rng);
            }
            const double rt_eff = rt_target_at(step);
            const double rs_eff =
                rs_at(step, cfg.rs,
                      static_cast<int64_t>(cfg.rt_warmup_epochs) * steps_per_epoch());

            auto [pred, traces] = model.forward(batch.frames, ctx);
            auto [loss, bd] = total_loss(pred, batch.labels, traces, rt_eff, cfg.lambda, rs_eff);
            if (!std::isfinite(static_cast<double>(loss.item())))
                throw NumericError(cat("non-finite loss at step ", step, " (epoch ", epoch, ")"));

            ParamMap<S> pm = model.state();
            pm.zero_grad();
            loss.backward();
            if (cfg.nav_grad_scale != 1.0)
                for (auto& [name, t] : pm.params)
                    if (name.find(".nav.") != std::string::npos)
                        for (auto& g : t.grad())
                            g *= static_cast<S>(cfg.nav_grad_scale);
            opt.step(pm);
            ++step;

            accumulate(rt_sum, prec_sum, correct, seen, ce_sum, pen_sum, pred, batch, traces,
                       bd);
        }
        finalize(em, rt_sum, prec_sum, correct, seen, ce_sum, pen_sum, nb);
        em.tau = tau_at(step);
        ++epochs_done;
        history.push_back(em);
        return em;
    }

    EpochMetrics evaluate() {
        NoGradGuard ng;
        EpochMetrics em;
        em.epoch = epochs_done;
        em.split = "eval";
        std::vector<double> rt_sum;
        double prec_sum = 0;
        int correct = 0, seen = 0;
        double ce_sum = 0, pen_sum = 0;
        int nb = 0;

        for (int first = 0; first < cfg.eval_videos; first += cfg.batch) {
            const int count = std::min(cfg.batch, cfg.eval_videos - first);
            std::vector<int> idx(static_cast<size_t>(count));
            for (int i = 0; i < count; ++i) idx[i] = first + i;
            VideoBatch<S> batch = make_synthetic_batch<S>(spec, base().derive(kEvalDataTag), idx);
            RngState policy_rng =
                base().derive(kEvalPolicyTag).derive(static_cast<uint64_t>(first));

            ModelCtx<S> ctx;
            ctx.training = false;
            ctx.exec = ExecMode::Gather;
            ctx.tau = tau_at(step);
            ctx.gate_mode = cfg.gate;
            std::vector<S> forced, forced_sp;
            setup_policy(ctx, forced, forced_sp, count, policy_rng);

            auto [pred, traces] = model.forward(batch.frames, ctx);
            auto [loss, bd] = total_loss(pred, batch.labels, traces, cfg.rt, cfg.lambda, cfg.rs);
            accumulate(rt_sum, prec_sum, correct, seen, ce_sum, pen_sum, pred, batch, traces,
                       bd);
            if (eval_observer) eval_observer(first, traces, batch);
            ++nb;
        }
        finalize(em, rt_sum, prec_sum, correct, seen, ce_sum, pen_sum, nb);
        em.tau = tau_at(step);
        history.push_back(em);
        return em;
    }

    void run_all() {
        while (epochs_done < cfg.epochs) {
            train_epoch();
            evaluate();
        }
    }

  private:
    void setup_policy(ModelCtx<S>& ctx, std::vector<S>& forced, std::vector<S>& forced_sp,
                      int n_videos, RngState& rng) {
        if (cfg.policy == Policy::Navigation) return;
        if (cfg.policy == Policy::CenterCrop) {
            forced.assign(static_cast<size_t>(n_videos) * spec.frames, S(1));
            forced_sp = center_crop_cells<S>(model.cfg.spatial_grid, cfg.rs);
            ctx.forced_mask = &forced;
            ctx.forced_spatial = &forced_sp;
            return;
        }
        forced = policy_mask_batch<S>(cfg.policy, n_videos, spec.frames, cfg.rt, rng);
        ctx.forced_mask = &forced;
    }

    void accumulate(std::vector<double>& rt_sum, double& prec_sum, int& correct, int& seen,
                    double& ce_sum, double& pen_sum, const Prediction<S>& pred,
                    const VideoBatch<S>& batch, const std::vector<StageTrace<S>>& traces,
                    const LossBreakdown& bd) {
        const std::vector<int> guess = argmax_rows(pred.video_logits);
        for (int v = 0; v < batch.videos(); ++v) correct += guess[v] == batch.labels[v];
        seen += batch.videos();
        ce_sum += bd.cross_entropy;
        pen_sum += bd.ratio_penalty;
        size_t bi = 0;
        for (const auto& tr : traces)
            for (const auto& m : tr.masks) {
                if (rt_sum.size() <= bi) rt_sum.resize(bi + 1, 0.0);
                rt_sum[bi++] += m.hard_ratio();
            }
        prec_sum += selection_precision(traces, batch, spec.frames);
    }

    void finalize(EpochMetrics& em, const std::vector<double>& rt_sum, double prec_sum,
                  int correct, int seen, double ce_sum, double pen_sum, int nb) {
        em.accuracy = seen > 0 ? static_cast<double>(correct) / seen : 0.0;
        em.ce = nb > 0 ? ce_sum / nb : 0.0;
        em.ratio_penalty = nb > 0 ? pen_sum / nb : 0.0;
        for (double s : rt_sum) em.rt_blocks.push_back(nb > 0 ? s / nb : 0.0);
        em.precision_salient = nb > 0 ? prec_sum / nb : 0.0;
    }
};

}  // namespace afnet
