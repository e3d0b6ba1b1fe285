#pragma once

#include "afnet/model.hpp"
#include "afnet/synthetic.hpp"
#include "afnet/training.hpp"

namespace afnet {

// Raised for anything wrong with user-supplied configuration: unreadable or
// malformed JSON, unknown keys, wrong types, out-of-range values.  The CLI
// maps this to exit code 2.
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Everything one run needs.  The dataset geometry (frames, channels,
// resolution, classes) is always derived from the model section, so the two
// cannot disagree; the dataset JSON section carries only the noise knobs.
struct ExperimentConfig {
    uint64_t seed = 0;
    std::string out_dir = "afnet-out";
    ModelConfig model = ModelConfig::desk_default();
    SyntheticVideoSpec dataset;
    TrainConfig training;

    ExperimentConfig() { sync_dataset(); }
    void sync_dataset() {
        dataset.frames = model.frames;
        dataset.channels = model.in_channels;
        dataset.resolution = model.resolution;
        dataset.classes = model.classes;
    }
};

// Strict parse: every key must be recognized, types must match, core knobs
// must be in range.  `origin` names the source (file path) in diagnostics.
ExperimentConfig parse_config_json(const std::string& text, const std::string& origin);
ExperimentConfig parse_config_file(const std::string& path);

// Serializes every field `parse_config_json` reads; parse(to_json(c)) == c.
std::string config_to_json(const ExperimentConfig& cfg);

std::string to_string(FusionKind f);
std::string to_string(BlockKind b);
std::string to_string(GateMode g);
std::string to_string(TauMode m);
std::string to_string(StageSpec::Kind k);

}  // namespace afnet
