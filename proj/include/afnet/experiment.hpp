#pragma once

#include <string>
#include <vector>

#include "afnet/config.hpp"

namespace afnet {

// One architecture/numerics check that must hold on any model, trained or
// not.  `measured` is the observed error (or mismatch count) against `tol`.
struct VerifyItem {
    std::string name;
    bool pass = false;
    double measured = 0;
    double tol = 0;
};

struct VerifyReport {
    std::vector<VerifyItem> items;

    bool all_pass() const {
        for (const auto& it : items)
            if (!it.pass) return false;
        return true;
    }
    std::string render() const;
};

// Identity, equivalence, gradient, cost, and persistence checks; none of
// these depend on training outcomes.
VerifyReport verify_suite(const ExperimentConfig& cfg);

struct AblateCell {
    std::string policy;
    double ratio = 0;
    uint64_t seed = 0;
    double accuracy = 0;
    double rt_mean = 0;  // mean over blocks of the hard selection ratio
};

// AFNET_THREADS (when set) caps the ablation worker pool; otherwise the
// hardware concurrency does.  Always in [1, cells].
int worker_limit(int cells);

// Exit-code-returning subcommand bodies.  Configuration problems throw
// ConfigError (exit 2), non-finite losses NumericError (exit 3); run_verify
// returns 4 when a check fails.
int run_train(const ExperimentConfig& cfg, const std::string& resume_checkpoint);
int run_eval(const ExperimentConfig& cfg, const std::string& checkpoint);
int run_ablate(const ExperimentConfig& cfg, const std::vector<std::string>& policies,
               const std::vector<double>& ratios, const std::vector<uint64_t>& seeds);
int run_analyze(const ExperimentConfig& cfg, const std::string& checkpoint);
int run_verify(const ExperimentConfig& cfg);

}  // namespace afnet
