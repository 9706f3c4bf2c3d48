#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgar/common.hpp"

namespace cgar {

// All knobs of a training run. Field names double as config-file and
// --set keys. Defaults are the desk-scale CGAR setup.
struct TrainConfig {
    // data / model geometry
    int grid = 4;
    int d_model = 64;
    int heads = 4;
    int d_ffn = 256;

    // optimization
    long epochs = 2000;        // one optimizer step per epoch
    int batch_size = 16;
    double lr = 5e-4;
    long warmup_steps = 100;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    std::uint64_t seed = 42;

    // supervision and recursion
    double lambda = 0.7;
    double beta = 0.5;
    int n_sup = 4;
    std::string schedule = "default";
    bool early_halt = true;               // stop supervision once the rule fires
    bool bce_inside_normalizer = false;
    std::string train_halt_rule = "max";  // fire when max q > 0.5
    std::string eval_halt_rule = "all";   // fire when every q > 0.5

    // bookkeeping
    long checkpoint_every = 0;  // 0: only the final checkpoint
    long eval_every = 0;        // 0: only the final eval
    int eval_subset = 64;       // in-training eval sample cap, 0 for full set
    int threads = 1;

    std::string train_data;
    std::string test_data;
};

// Presets bundle the run styles used in the experiments:
//   cgar-default  curriculum + exponential supervision weights (the defaults)
//   trm-baseline  fixed full depth, uniform weights
//   pdc-only      curriculum, uniform weights
//   hsw-only      fixed full depth, exponential weights
//   lambda-0.5 / lambda-0.7 / lambda-0.9  cgar-default at that lambda
void apply_preset(TrainConfig& cfg, const std::string& name);
std::vector<std::string> preset_names();

// key=value lines; '#' starts a comment. Unknown keys and unparsable
// values are collected and reported together.
void apply_config_file(TrainConfig& cfg, const std::string& path);
// One "key=value" assignment (the CLI --set flag).
void apply_assignment(TrainConfig& cfg, const std::string& key,
                      const std::string& value);

// Every violated invariant at once, empty when the config is usable.
std::vector<std::string> validate_config(const TrainConfig& cfg);
void validate_config_or_throw(const TrainConfig& cfg);

// Sorted key=value serialization; two configs are equivalent iff these
// match, and the hash is FNV-1a over this text.
std::string serialize_config(const TrainConfig& cfg);
std::map<std::string, std::string> config_kv(const TrainConfig& cfg);
std::string config_hash(const TrainConfig& cfg);

// Rebuild a config from its serialized form (checkpoint echo).
TrainConfig parse_config_text(const std::string& text);

}  // namespace cgar
