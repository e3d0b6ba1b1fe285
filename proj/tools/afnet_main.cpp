#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "afnet/experiment.hpp"

namespace {

struct Flags {
    std::string config, out, checkpoint, policy;
    uint64_t seed = 0;
    double rt = -1, rs = -1;
    std::vector<CLI::Option*> seed_opts;

    void add_common(CLI::App* cmd, bool with_checkpoint = true) {
        cmd->add_option("--config", config, "JSON experiment config file");
        cmd->add_option("--out", out, "output directory (overrides config)");
        seed_opts.push_back(cmd->add_option("--seed", seed, "RNG seed (overrides config)"));
        cmd->add_option("--rt", rt, "temporal selection ratio target in (0,1]");
        cmd->add_option("--rs", rs, "spatial selection ratio target in (0,1]");
        cmd->add_option("--policy", policy,
                        "selection policy: navigation|random|uniform|normal|center_crop");
        if (with_checkpoint) cmd->add_option("--checkpoint", checkpoint, "checkpoint path");
    }

    bool seed_given() const {
        for (const auto* o : seed_opts)
            if (o->count()) return true;
        return false;
    }

    afnet::ExperimentConfig resolve() const {
        afnet::ExperimentConfig cfg;
        if (!config.empty()) cfg = afnet::parse_config_file(config);
        if (seed_given()) {
            cfg.seed = seed;
            cfg.training.seed = seed;
        }
        if (!out.empty()) cfg.out_dir = out;
        if (rt >= 0) {
            if (!(rt > 0 && rt <= 1))
                throw afnet::ConfigError(afnet::cat("--rt ", rt, " outside (0, 1]"));
            cfg.training.rt = rt;
        }
        if (rs >= 0) {
            if (!(rs > 0 && rs <= 1))
                throw afnet::ConfigError(afnet::cat("--rs ", rs, " outside (0, 1]"));
            cfg.training.rs = rs;
        }
        if (!policy.empty()) {
            try {
                cfg.training.policy = afnet::policy_from_string(policy);
            } catch (const afnet::Error& e) {
                throw afnet::ConfigError(e.what());
            }
        }
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"afnet: conditional two-branch video recognition at desk scale"};
    app.require_subcommand(1);

    Flags flags;
    CLI::App* train = app.add_subcommand("train", "train a model and export metrics");
    flags.add_common(train);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the eval split");
    flags.add_common(eval);
    CLI::App* analyze =
        app.add_subcommand("analyze", "export selection/cost/stats tables for a checkpoint");
    flags.add_common(analyze);
    CLI::App* verify =
        app.add_subcommand("verify", "run the identity/gradient/cost/persistence checks");
    flags.add_common(verify);

    CLI::App* ablate = app.add_subcommand("ablate", "train a policy x ratio x seed grid");
    std::vector<std::string> policies = {"navigation", "random", "uniform", "normal"};
    std::vector<double> ratios = {0.25, 0.5, 0.75};
    std::vector<uint64_t> seeds = {0, 1, 2};
    ablate->add_option("--config", flags.config, "JSON experiment config file");
    ablate->add_option("--out", flags.out, "output directory (overrides config)");
    ablate->add_option("--policy", policies, "policies to compare (repeatable)");
    ablate->add_option("--rt", ratios, "selection ratios to sweep (repeatable)");
    ablate->add_option("--seed", seeds, "seeds per cell (repeatable)");

    try {
        app.parse(argc, argv);
        if (ablate->parsed()) {
            afnet::ExperimentConfig cfg;
            if (!flags.config.empty()) cfg = afnet::parse_config_file(flags.config);
            if (!flags.out.empty()) cfg.out_dir = flags.out;
            return afnet::run_ablate(cfg, policies, ratios, seeds);
        }
        const afnet::ExperimentConfig cfg = flags.resolve();
        if (train->parsed()) return afnet::run_train(cfg, flags.checkpoint);
        if (eval->parsed()) return afnet::run_eval(cfg, flags.checkpoint);
        if (analyze->parsed()) return afnet::run_analyze(cfg, flags.checkpoint);
        if (verify->parsed()) return afnet::run_verify(cfg);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const afnet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const afnet::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
