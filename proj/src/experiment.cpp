#include "afnet/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "afnet/analysis.hpp"
#include "afnet/checkpoint.hpp"
#include "afnet/cost_model.hpp"
#include "afnet/csv.hpp"

namespace afnet {

namespace fs = std::filesystem;

namespace {

using HardMasks = std::vector<std::vector<std::vector<double>>>;  // [sample][block][frame]

template <class S>
Model<S> fresh_model(const ExperimentConfig& cfg) {
    RngState rng = RngState{cfg.seed, 0}.derive(Trainer<S>::kInitTag);
    return build_model<S>(cfg.model, rng);
}

// Streams per-sample per-block hard selections (and ground truth) out of the
// eval loop, keyed by global sample id.
template <class S>
auto mask_collector(HardMasks& hard, std::vector<std::vector<int>>* salient, int t) {
    return [&hard, salient, t](int first, const std::vector<StageTrace<S>>& traces,
                               const VideoBatch<S>& batch) {
        for (int v = 0; v < batch.videos(); ++v) {
            std::vector<std::vector<double>> blocks;
            for (const auto& tr : traces)
                for (const auto& m : tr.masks) {
                    std::vector<double> row(static_cast<size_t>(t));
                    for (int fr = 0; fr < t; ++fr)
                        row[fr] = m.hard[static_cast<size_t>(v) * t + fr] > S(0.5) ? 1.0 : 0.0;
                    blocks.push_back(std::move(row));
                }
            const size_t sid = static_cast<size_t>(first) + v;
            if (hard.size() <= sid) hard.resize(sid + 1);
            hard[sid] = std::move(blocks);
            if (salient) {
                if (salient->size() <= sid) salient->resize(sid + 1);
                (*salient)[sid] = batch.salient[v];
            }
        }
    };
}

const EpochMetrics* last_eval_row(const std::vector<EpochMetrics>& history) {
    for (auto it = history.rbegin(); it != history.rend(); ++it)
        if (it->split == "eval") return &*it;
    return nullptr;
}

std::string ratio_list(const std::vector<double>& rts) {
    std::string out = "[";
    for (size_t i = 0; i < rts.size(); ++i) {
        if (i) out += " ";
        out += csv_num(rts[i]);
    }
    return out + "]";
}

}  // namespace

int worker_limit(int cells) {
    int cap = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("AFNET_THREADS")) {
        try {
            cap = std::stoi(env);
        } catch (const std::exception&) {
            throw ConfigError(cat("AFNET_THREADS='", env, "' is not an integer"));
        }
    }
    return std::clamp(cap, 1, std::max(cells, 1));
}

int run_train(const ExperimentConfig& cfg, const std::string& resume_checkpoint) {
    fs::create_directories(cfg.out_dir);
    const fs::path out(cfg.out_dir);

    Model<float> model = fresh_model<float>(cfg);
    Trainer<float> tr(model, cfg.training, cfg.dataset);
    if (!resume_checkpoint.empty()) {
        const TrainState ts = load_checkpoint<float>(resume_checkpoint, model, &tr.opt);
        tr.step = ts.step;
        tr.epochs_done = ts.epochs;
    }

    HardMasks hard;
    while (tr.epochs_done < cfg.training.epochs) {
        tr.train_epoch();
        if (tr.epochs_done == cfg.training.epochs)
            tr.eval_observer = mask_collector<float>(hard, nullptr, cfg.model.frames);
        tr.evaluate();
    }

    write_file((out / "metrics.csv").string(),
               metrics_csv(tr.history, cfg.model.af_block_count()));
    write_file((out / "selection.csv").string(), selection_csv(selection_records(hard)));
    write_file((out / "config.json").string(), config_to_json(cfg));
    save_checkpoint((out / "checkpoint.afnet").string(), model, &tr.opt,
                    TrainState{tr.step, tr.epochs_done, cfg.seed, 0});

    if (const EpochMetrics* em = last_eval_row(tr.history))
        std::cout << "train: epochs=" << tr.epochs_done << " steps=" << tr.step
                  << " eval_accuracy=" << csv_num(em->accuracy)
                  << " rt=" << ratio_list(em->rt_blocks) << " out=" << cfg.out_dir << "\n";
    else
        std::cout << "train: epochs=0, wrote initial checkpoint to " << cfg.out_dir << "\n";
    return 0;
}

int run_eval(const ExperimentConfig& cfg, const std::string& checkpoint) {
    if (checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
    fs::create_directories(cfg.out_dir);

    Model<float> model = fresh_model<float>(cfg);
    Trainer<float> tr(model, cfg.training, cfg.dataset);
    const TrainState ts = load_checkpoint<float>(checkpoint, model, nullptr);
    tr.step = ts.step;
    tr.epochs_done = ts.epochs;

    const EpochMetrics em = tr.evaluate();
    write_file((fs::path(cfg.out_dir) / "eval_metrics.csv").string(),
               metrics_csv({em}, cfg.model.af_block_count()));
    std::cout << "eval: accuracy=" << csv_num(em.accuracy) << " ce=" << csv_num(em.ce)
              << " rt=" << ratio_list(em.rt_blocks)
              << " precision_salient=" << csv_num(em.precision_salient) << "\n";
    return 0;
}

int run_ablate(const ExperimentConfig& cfg, const std::vector<std::string>& policies,
               const std::vector<double>& ratios, const std::vector<uint64_t>& seeds) {
    if (policies.empty() || ratios.empty() || seeds.empty())
        throw ConfigError("ablate: need at least one policy, ratio, and seed");
    for (const auto& p : policies) {
        try {
            policy_from_string(p);
        } catch (const Error& e) {
            throw ConfigError(cat("ablate: ", e.what()));
        }
    }
    for (double r : ratios)
        if (!(r > 0.0 && r <= 1.0))
            throw ConfigError(cat("ablate: ratio ", csv_num(r), " outside (0, 1]"));

    std::vector<AblateCell> cells;
    for (const auto& p : policies)
        for (double r : ratios)
            for (uint64_t s : seeds) cells.push_back({p, r, s, 0.0, 0.0});

    const int workers = worker_limit(static_cast<int>(cells.size()));
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    auto work = [&](int wi) {
        try {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                AblateCell& cell = cells[i];
                ExperimentConfig c = cfg;
                c.seed = cell.seed;
                c.training.seed = cell.seed;
                const Policy pol = policy_from_string(cell.policy);
                c.training.policy = pol;
                if (pol == Policy::CenterCrop) {
                    c.training.rs = cell.ratio;
                    c.training.rt = 1.0;
                } else {
                    c.training.rt = cell.ratio;
                }
                Model<float> model = fresh_model<float>(c);
                Trainer<float> tr(model, c.training, c.dataset);
                tr.run_all();
                const EpochMetrics em = tr.evaluate();
                cell.accuracy = em.accuracy;
                double rt = 0;
                for (double b : em.rt_blocks) rt += b;
                cell.rt_mean = em.rt_blocks.empty() ? 0 : rt / em.rt_blocks.size();
            }
        } catch (...) {
            errors[static_cast<size_t>(wi)] = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work, w);
    work(0);
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::string csv = csv_row({"policy", "ratio", "seed", "accuracy", "rt_mean", "accuracy_std"});
    for (const auto& c : cells)
        csv += csv_row({c.policy, csv_num(c.ratio), csv_num(c.seed), csv_num(c.accuracy),
                        csv_num(c.rt_mean), ""});
    for (const auto& p : policies)
        for (double r : ratios) {
            double mean = 0, rt = 0;
            for (const auto& c : cells)
                if (c.policy == p && c.ratio == r) {
                    mean += c.accuracy;
                    rt += c.rt_mean;
                }
            const double n = static_cast<double>(seeds.size());
            mean /= n;
            rt /= n;
            double var = 0;
            for (const auto& c : cells)
                if (c.policy == p && c.ratio == r) var += (c.accuracy - mean) * (c.accuracy - mean);
            csv += csv_row({p, csv_num(r), "summary", csv_num(mean), csv_num(rt),
                            csv_num(std::sqrt(var / n))});
            std::cout << "ablate: policy=" << p << " ratio=" << csv_num(r)
                      << " mean_accuracy=" << csv_num(mean)
                      << " std=" << csv_num(std::sqrt(var / n)) << "\n";
        }
    fs::create_directories(cfg.out_dir);
    write_file((fs::path(cfg.out_dir) / "comparison.csv").string(), csv);
    return 0;
}

int run_analyze(const ExperimentConfig& cfg, const std::string& checkpoint) {
    if (checkpoint.empty()) throw ConfigError("analyze: --checkpoint is required");
    fs::create_directories(cfg.out_dir);
    const fs::path out(cfg.out_dir);

    Model<float> model = fresh_model<float>(cfg);
    Trainer<float> tr(model, cfg.training, cfg.dataset);
    const TrainState ts = load_checkpoint<float>(checkpoint, model, nullptr);
    tr.step = ts.step;
    tr.epochs_done = ts.epochs;

    HardMasks hard;
    std::vector<std::vector<int>> salient;
    tr.eval_observer = mask_collector<float>(hard, &salient, cfg.model.frames);
    tr.evaluate();

    const SelectionStats stats = selection_stats(hard, salient);
    const CostReport cost = count_flops(cfg.model, cfg.training.rt, cfg.training.rs);
    write_file((out / "stats.csv").string(), stats_csv(stats));
    write_file((out / "cost.csv").string(), cost_csv(cost));
    write_file((out / "selection.csv").string(), selection_csv(selection_records(hard)));

    std::cout << "analyze: rt_mean=" << ratio_list(stats.rt_mean)
              << " trend_avg_slope=" << csv_num(stats.avg_slope)
              << " precision=" << csv_num(stats.precision) << " recall="
              << csv_num(stats.recall) << "\n";
    std::cout << "analyze: full_macs=" << csv_num(cost.full_macs)
              << " expected_macs=" << csv_num(cost.expected_total())
              << " vs_baseline=" << csv_num(cost.ratio_vs_baseline()) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

namespace {

std::vector<double> gaussian_vec(RngState& rng, size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.next_normal();
    return v;
}

// Product-form identity on a 3-block shape-preserving stage, 10 seeds.
VerifyItem check_product_form() {
    VerifyItem item{"product_form_identity", false, 0, 1e-6};
    const int t = 4, n_videos = 2, c = 6, hw = 5, blocks = 3;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        AFStageConfig sc;
        sc.in_channels = c;
        sc.out_channels = c;
        sc.num_blocks = blocks;
        sc.focal_groups = 2;
        sc.post_act = PostAct::None;
        sc.shape_preserving = true;
        RngState init{seed, 77};
        AFStage<double> stage(sc, t, init);

        RngState data = RngState{seed, 991}.derive(1);
        const int f = n_videos * t;
        std::vector<std::vector<double>> masks(blocks);
        for (auto& m : masks) {
            m.resize(static_cast<size_t>(f));
            for (auto& x : m) x = (data.next_u64() & 1) ? 1.0 : 0.0;
        }
        std::vector<double> theta(static_cast<size_t>(n_videos) * c);
        for (auto& x : theta) x = 0.2 + 0.6 * data.next_uniform();

        for (int attempt = 0;; ++attempt) {
            Tensor<double> input =
                Tensor<double>::from(gaussian_vec(data, static_cast<size_t>(f) * c * hw * hw),
                                     {f, c, hw, hw});
            try {
                const IdentityReport rep = verify_product_form(stage, input, masks, theta,
                                                               item.tol);
                item.measured = std::max(item.measured, rep.max_rel_err);
                break;
            } catch (const DegenerateInputError&) {
                AFNET_CHECK(attempt < 50, "product form check: persistent degenerate inputs");
            }
        }
    }
    item.pass = item.measured < item.tol;
    return item;
}

// Gather vs mask-multiply eval forward on the configured model.
VerifyItem check_mode_equivalence(const ExperimentConfig& cfg) {
    VerifyItem item{"execution_mode_equivalence", false, 0, 1e-5};
    Model<double> model = build_model<double>(cfg.model, RngState{cfg.seed, 0}.derive(0));
    const int t = cfg.model.frames, n_videos = 2, f = n_videos * t;
    SyntheticVideoSpec spec = cfg.dataset;
    VideoBatch<double> batch =
        make_synthetic_batch<double>(spec, RngState{cfg.seed, 5}, 0, n_videos);

    RngState mask_rng{cfg.seed, 17};
    NoGradGuard ng;
    for (int pattern = 0; pattern < 10; ++pattern) {
        std::vector<double> forced(static_cast<size_t>(f));
        for (auto& x : forced)
            x = pattern == 0 ? 0.0 : (pattern == 1 ? 1.0 : ((mask_rng.next_u64() & 1) ? 1.0 : 0.0));
        ModelCtx<double> ctx;
        ctx.training = false;
        ctx.forced_mask = &forced;
        ctx.exec = ExecMode::MaskMultiply;
        auto [pm, tm] = model.forward(batch.frames, ctx);
        ctx.exec = ExecMode::Gather;
        auto [pg, tg] = model.forward(batch.frames, ctx);
        for (size_t i = 0; i < pm.frame_logits.data().size(); ++i)
            item.measured = std::max(
                item.measured, std::abs(pm.frame_logits.data()[i] - pg.frame_logits.data()[i]));
    }
    item.pass = item.measured < item.tol;
    return item;
}

// Central finite differences on a small full model (f64, h = 1e-5).
//
// The model is nudged to a generic point first: freshly built nets hold exact
// zeros (relu outputs through bias-free convs, zero-mean running stats, zero
// shift params), which park later relus exactly on their kinks where the two
// one-sided slopes disagree and central differences measure neither.
VerifyItem check_gradients() {
    VerifyItem item{"gradient_finite_difference", false, 0, 1e-4};
    ModelConfig mc;
    mc.frames = 4;
    mc.resolution = 8;
    mc.classes = 3;
    mc.stem_channels = 6;
    mc.stages = {{StageSpec::Kind::AF, 8, 1, 2}};
    RngState init{3, 0};
    Model<double> model = build_model<double>(mc, init);
    {
        RngState jitter{3, 77};
        ParamMap<double> pm = model.state();
        for (auto& [name, param] : pm.params)
            for (auto& v : param.data()) v += 0.05 * jitter.next_normal();
        for (auto& [name, buf] : pm.buffers) {
            const bool variance = name.ends_with("running_var");
            for (auto& v : *buf) {
                v += 0.05 * jitter.next_normal();
                if (variance) v = std::max(std::abs(v), 0.25);
            }
        }
    }

    SyntheticVideoSpec spec;
    spec.frames = mc.frames;
    spec.resolution = mc.resolution;
    spec.classes = mc.classes;
    VideoBatch<double> batch = make_synthetic_batch<double>(spec, RngState{3, 9}, 0, 2);
    std::vector<double> forced(static_cast<size_t>(batch.frames.dim(0)), 1.0);

    auto loss_value = [&]() {
        ModelCtx<double> ctx;
        ctx.training = false;
        ctx.forced_mask = &forced;
        auto [pred, traces] = model.forward(batch.frames, ctx);
        return cross_entropy(pred.video_logits, batch.labels);
    };

    ParamMap<double> pm = model.state();
    pm.zero_grad();
    Tensor<double> loss = loss_value();
    loss.backward();

    const double h = 1e-5;
    for (auto& [name, param] : pm.params) {
        if (param.impl()->grad.empty()) continue;  // unused under forced masks
        const size_t n = param.data().size();
        for (size_t probe : {size_t(0), n / 2, n - 1}) {
            if (probe >= n) continue;
            const double saved = param.data()[probe];
            double fd = 0;
            {
                NoGradGuard ng;
                param.data()[probe] = saved + h;
                const double up = loss_value().item();
                param.data()[probe] = saved - h;
                const double dn = loss_value().item();
                param.data()[probe] = saved;
                fd = (up - dn) / (2 * h);
            }
            const double an = param.impl()->grad[probe];
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
            item.measured = std::max(item.measured, rel);
        }
    }
    item.pass = item.measured < item.tol;
    return item;
}

// Instrumented multiply-add count must equal the analytic model exactly.
VerifyItem check_cost_exactness(const ExperimentConfig& cfg) {
    VerifyItem item{"cost_model_exactness", false, 0, 0};
    Model<float> model = build_model<float>(cfg.model, RngState{cfg.seed, 0}.derive(0));
    SyntheticVideoSpec spec = cfg.dataset;
    VideoBatch<float> batch = make_synthetic_batch<float>(spec, RngState{cfg.seed, 5}, 0, 1);

    NoGradGuard ng;
    ModelCtx<float> ctx;  // eval + mask-multiply: full compute on every branch
    uint64_t counted = 0;
    {
        MacCounter mc;
        model.forward(batch.frames, ctx);
        counted = mc.macs();
    }
    const CostReport report = count_flops(cfg.model, 1.0, 1.0);
    item.measured = std::abs(static_cast<double>(counted) - static_cast<double>(report.full_macs));
    item.pass = counted == report.full_macs;
    return item;
}

// Save/load must reproduce parameters, buffers, and momenta bit-exactly.
VerifyItem check_checkpoint_roundtrip(const ExperimentConfig& cfg) {
    VerifyItem item{"checkpoint_roundtrip", false, 0, 0};
    const std::string path =
        (fs::path(fs::temp_directory_path()) / "afnet_verify_ckpt.afnet").string();

    Model<float> a = build_model<float>(cfg.model, RngState{cfg.seed, 0}.derive(0));
    SGD<float> opt_a;
    ParamMap<float> pa = a.state();
    RngState vel{cfg.seed, 123};
    for (size_t i = 0; i < std::min<size_t>(3, pa.params.size()); ++i) {
        std::vector<float> v(pa.params[i].second.data().size());
        for (auto& x : v) x = static_cast<float>(vel.next_normal());
        opt_a.velocity.emplace(pa.params[i].first, std::move(v));
    }
    save_checkpoint(path, a, &opt_a, TrainState{41, 7, cfg.seed, 9});

    Model<float> b = build_model<float>(cfg.model, RngState{cfg.seed + 1, 0}.derive(0));
    SGD<float> opt_b;
    const TrainState ts = load_checkpoint<float>(path, b, &opt_b);

    uint64_t mismatches = 0;
    ParamMap<float> pb = b.state();
    for (size_t i = 0; i < pa.params.size(); ++i) {
        const auto& va = pa.params[i].second.data();
        const auto& vb = pb.params[i].second.data();
        for (size_t j = 0; j < va.size(); ++j)
            mismatches += std::bit_cast<uint32_t>(va[j]) != std::bit_cast<uint32_t>(vb[j]);
    }
    for (size_t i = 0; i < pa.buffers.size(); ++i) {
        const auto& va = *pa.buffers[i].second;
        const auto& vb = *pb.buffers[i].second;
        for (size_t j = 0; j < va.size(); ++j)
            mismatches += std::bit_cast<uint32_t>(va[j]) != std::bit_cast<uint32_t>(vb[j]);
    }
    mismatches += opt_a.velocity.size() != opt_b.velocity.size();
    for (const auto& [name, va] : opt_a.velocity) {
        auto it = opt_b.velocity.find(name);
        if (it == opt_b.velocity.end() || it->second != va) ++mismatches;
    }
    mismatches += ts.step != 41 || ts.epochs != 7 || ts.seed != cfg.seed || ts.rng_counter != 9;
    fs::remove(path);

    item.measured = static_cast<double>(mismatches);
    item.pass = mismatches == 0;
    return item;
}

}  // namespace

std::string VerifyReport::render() const {
    std::string out;
    for (const auto& it : items)
        out += cat(it.pass ? "[PASS] " : "[FAIL] ", it.name, " measured=", csv_num(it.measured),
                   " tol=", csv_num(it.tol), "\n");
    out += cat(all_pass() ? "verification passed" : "verification FAILED", " (",
               static_cast<int>(items.size()), " checks)\n");
    return out;
}

VerifyReport verify_suite(const ExperimentConfig& cfg) {
    VerifyReport rep;
    rep.items.push_back(check_product_form());
    rep.items.push_back(check_mode_equivalence(cfg));
    rep.items.push_back(check_gradients());
    rep.items.push_back(check_cost_exactness(cfg));
    rep.items.push_back(check_checkpoint_roundtrip(cfg));
    return rep;
}

int run_verify(const ExperimentConfig& cfg) {
    const VerifyReport rep = verify_suite(cfg);
    std::cout << rep.render();
    return rep.all_pass() ? 0 : 4;
}

}  // namespace afnet
