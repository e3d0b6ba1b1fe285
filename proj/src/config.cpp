#include "afnet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace afnet {

using nlohmann::json;

std::string to_string(FusionKind f) { return f == FusionKind::Dynamic ? "dynamic" : "addition"; }
std::string to_string(BlockKind b) { return b == BlockKind::Bottleneck ? "bottleneck" : "basic"; }
std::string to_string(GateMode g) { return g == GateMode::GumbelST ? "gumbel_st" : "soft_weights"; }
std::string to_string(TauMode m) {
    switch (m) {
        case TauMode::Exponential: return "exponential";
        case TauMode::Cosine: return "cosine";
        case TauMode::Linear: return "linear";
    }
    return "?";
}
std::string to_string(StageSpec::Kind k) { return k == StageSpec::Kind::AF ? "af" : "plain"; }

namespace {

[[noreturn]] void fail(const std::string& origin, const std::string& path,
                       const std::string& what) {
    throw ConfigError(cat(origin, ": ", path.empty() ? "<root>" : path, ": ", what));
}

// Wraps one JSON object; reads mark keys as consumed and `finish()` rejects
// whatever was not recognized, so typos cannot silently fall back to defaults.
class Section {
  public:
    Section(const json& j, std::string origin, std::string path)
        : j_(j), origin_(std::move(origin)), path_(std::move(path)) {
        if (!j_.is_object()) fail(origin_, path_, "expected a JSON object");
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <class T>
    void get(const char* key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            fail(origin_, sub(key), cat("wrong type (", e.what(), ")"));
        }
    }

    void get_enum(const char* key, std::string& out, const std::set<std::string>& allowed) {
        get(key, out);
        if (!allowed.count(out)) {
            std::ostringstream os;
            os << "invalid value '" << out << "' (expected one of:";
            for (const auto& a : allowed) os << " " << a;
            os << ")";
            fail(origin_, sub(key), os.str());
        }
    }

    const json* child(const char* key) { return has(key) ? &j_.at(key) : nullptr; }

    std::string sub(const char* key) const { return path_.empty() ? key : cat(path_, ".", key); }

    void finish() {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                fail(origin_, sub(it.key().c_str()), "unknown key");
    }

  private:
    const json& j_;
    std::string origin_, path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& origin, const std::string& path,
             const std::string& what) {
    if (!ok) fail(origin, path, what);
}

void parse_model(const json& j, const std::string& origin, ModelConfig& m) {
    Section s(j, origin, "model");
    s.get("frames", m.frames);
    s.get("in_channels", m.in_channels);
    s.get("resolution", m.resolution);
    s.get("classes", m.classes);
    s.get("stem_channels", m.stem_channels);
    std::string v;
    v = to_string(m.fusion);
    s.get_enum("fusion", v, {"dynamic", "addition"});
    m.fusion = v == "dynamic" ? FusionKind::Dynamic : FusionKind::Addition;
    v = to_string(m.block);
    s.get_enum("block", v, {"bottleneck", "basic"});
    m.block = v == "bottleneck" ? BlockKind::Bottleneck : BlockKind::Basic;
    s.get("focal_groups", m.focal_groups);
    s.get("shift_enabled", m.shift_enabled);
    s.get("shift_fraction", m.shift_fraction);
    s.get("spatial_enabled", m.spatial_enabled);
    s.get("spatial_grid", m.spatial_grid);
    if (const json* stages = s.child("stages")) {
        require(stages->is_array() && !stages->empty(), origin, "model.stages",
                "expected a non-empty array");
        m.stages.clear();
        int i = 0;
        for (const auto& sj : *stages) {
            const std::string p = cat("model.stages[", i, "]");
            Section st(sj, origin, p);
            StageSpec spec;
            std::string kind = to_string(spec.kind);
            st.get_enum("kind", kind, {"af", "plain"});
            spec.kind = kind == "af" ? StageSpec::Kind::AF : StageSpec::Kind::Plain;
            st.get("channels", spec.out_channels);
            st.get("blocks", spec.num_blocks);
            st.get("stride", spec.stride);
            st.finish();
            require(spec.out_channels >= 1 && spec.num_blocks >= 1 && spec.stride >= 1, origin,
                    p, "channels, blocks, stride must all be >= 1");
            m.stages.push_back(spec);
            ++i;
        }
    }
    s.finish();
    require(m.frames >= 1, origin, "model.frames", "must be >= 1");
    require(m.in_channels >= 1, origin, "model.in_channels", "must be >= 1");
    require(m.resolution >= 1, origin, "model.resolution", "must be >= 1");
    require(m.classes >= 2, origin, "model.classes", "must be >= 2");
    require(m.stem_channels >= 1, origin, "model.stem_channels", "must be >= 1");
    require(m.focal_groups >= 1, origin, "model.focal_groups", "must be >= 1");
    require(m.shift_fraction > 0.0 && m.shift_fraction <= 0.5, origin, "model.shift_fraction",
            "must be in (0, 0.5]");
    require(m.spatial_grid >= 1, origin, "model.spatial_grid", "must be >= 1");
}

void parse_dataset(const json& j, const std::string& origin, SyntheticVideoSpec& d) {
    Section s(j, origin, "dataset");
    s.get("salient", d.salient);
    s.get("noise", d.noise);
    s.get("bg_noise", d.bg_noise);
    s.get("amplitude", d.amplitude);
    s.finish();
    require(d.salient >= 1, origin, "dataset.salient", "must be >= 1");
    require(d.noise >= 0.0, origin, "dataset.noise", "must be >= 0");
    require(d.amplitude > 0.0, origin, "dataset.amplitude", "must be > 0");
}

void parse_training(const json& j, const std::string& origin, TrainConfig& t) {
    Section s(j, origin, "training");
    s.get("rt", t.rt);
    s.get("rs", t.rs);
    s.get("lambda", t.lambda);
    s.get("lr", t.lr);
    s.get("momentum", t.momentum);
    s.get("weight_decay", t.weight_decay);
    s.get("epochs", t.epochs);
    s.get("batch", t.batch);
    s.get("train_videos", t.train_videos);
    s.get("eval_videos", t.eval_videos);
    std::string v = to_string(t.policy);
    s.get_enum("policy", v, {"navigation", "random", "uniform", "normal", "center_crop"});
    t.policy = policy_from_string(v);
    v = to_string(t.gate);
    s.get_enum("gate", v, {"gumbel_st", "soft_weights"});
    t.gate = v == "gumbel_st" ? GateMode::GumbelST : GateMode::SoftWeights;
    v = to_string(t.tau_mode);
    s.get_enum("tau_mode", v, {"exponential", "cosine", "linear"});
    t.tau_mode = v == "exponential" ? TauMode::Exponential
                 : v == "cosine"    ? TauMode::Cosine
                                    : TauMode::Linear;
    s.get("tau_start", t.tau_start);
    s.get("tau_end", t.tau_end);
    s.get("nav_warmup_epochs", t.nav_warmup_epochs);
    s.get("rt_warmup_epochs", t.rt_warmup_epochs);
    s.get("nav_grad_scale", t.nav_grad_scale);
    s.finish();
    require(t.rt > 0.0 && t.rt <= 1.0, origin, "training.rt", "must be in (0, 1]");
    require(t.rs > 0.0 && t.rs <= 1.0, origin, "training.rs", "must be in (0, 1]");
    require(t.lambda >= 0.0, origin, "training.lambda", "must be >= 0");
    require(t.lr > 0.0, origin, "training.lr", "must be > 0");
    require(t.momentum >= 0.0 && t.momentum < 1.0, origin, "training.momentum",
            "must be in [0, 1)");
    require(t.weight_decay >= 0.0, origin, "training.weight_decay", "must be >= 0");
    require(t.epochs >= 0, origin, "training.epochs", "must be >= 0");
    require(t.batch >= 1, origin, "training.batch", "must be >= 1");
    require(t.train_videos >= 1, origin, "training.train_videos", "must be >= 1");
    require(t.eval_videos >= 1, origin, "training.eval_videos", "must be >= 1");
    require(t.batch <= t.train_videos, origin, "training.batch",
            "must be <= training.train_videos");
    require(t.tau_start > 0.0 && t.tau_end > 0.0 && t.tau_end <= t.tau_start, origin,
            "training.tau_end", "need tau_start >= tau_end > 0");
    require(t.nav_warmup_epochs >= 0, origin, "training.nav_warmup_epochs", "must be >= 0");
    require(t.rt_warmup_epochs >= 0, origin, "training.rt_warmup_epochs", "must be >= 0");
    require(t.nav_grad_scale > 0.0, origin, "training.nav_grad_scale", "must be > 0");
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(cat(origin, ": ", e.what()));
    }

    ExperimentConfig cfg;
    Section root(j, origin, "");
    root.get("seed", cfg.seed);
    root.get("out", cfg.out_dir);
    if (const json* m = root.child("model")) parse_model(*m, origin, cfg.model);
    if (const json* d = root.child("dataset")) parse_dataset(*d, origin, cfg.dataset);
    if (const json* t = root.child("training")) parse_training(*t, origin, cfg.training);
    root.finish();

    cfg.sync_dataset();
    cfg.training.seed = cfg.seed;
    require(cfg.dataset.salient <= cfg.model.frames, origin, "dataset.salient",
            "must be <= model.frames");
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f.good()) throw ConfigError(cat(path, ": cannot open config file"));
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_json(ss.str(), path);
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json stages = json::array();
    for (const auto& s : cfg.model.stages)
        stages.push_back({{"kind", to_string(s.kind)},
                          {"channels", s.out_channels},
                          {"blocks", s.num_blocks},
                          {"stride", s.stride}});
    json j = {
        {"seed", cfg.seed},
        {"out", cfg.out_dir},
        {"model",
         {{"frames", cfg.model.frames},
          {"in_channels", cfg.model.in_channels},
          {"resolution", cfg.model.resolution},
          {"classes", cfg.model.classes},
          {"stem_channels", cfg.model.stem_channels},
          {"fusion", to_string(cfg.model.fusion)},
          {"block", to_string(cfg.model.block)},
          {"focal_groups", cfg.model.focal_groups},
          {"shift_enabled", cfg.model.shift_enabled},
          {"shift_fraction", cfg.model.shift_fraction},
          {"spatial_enabled", cfg.model.spatial_enabled},
          {"spatial_grid", cfg.model.spatial_grid},
          {"stages", stages}}},
        {"dataset",
         {{"salient", cfg.dataset.salient},
          {"noise", cfg.dataset.noise},
          {"bg_noise", cfg.dataset.bg_noise},
          {"amplitude", cfg.dataset.amplitude}}},
        {"training",
         {{"rt", cfg.training.rt},
          {"rs", cfg.training.rs},
          {"lambda", cfg.training.lambda},
          {"lr", cfg.training.lr},
          {"momentum", cfg.training.momentum},
          {"weight_decay", cfg.training.weight_decay},
          {"epochs", cfg.training.epochs},
          {"batch", cfg.training.batch},
          {"train_videos", cfg.training.train_videos},
          {"eval_videos", cfg.training.eval_videos},
          {"policy", to_string(cfg.training.policy)},
          {"gate", to_string(cfg.training.gate)},
          {"tau_mode", to_string(cfg.training.tau_mode)},
          {"tau_start", cfg.training.tau_start},
          {"tau_end", cfg.training.tau_end},
          {"nav_warmup_epochs", cfg.training.nav_warmup_epochs},
          {"rt_warmup_epochs", cfg.training.rt_warmup_epochs},
          {"nav_grad_scale", cfg.training.nav_grad_scale}}},
    };
    return j.dump(2) + "\n";
}

}  // namespace afnet
