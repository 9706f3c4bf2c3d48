#pragma once

#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cgar/checkpoint.hpp"
#include "cgar/config.hpp"
#include "cgar/curriculum.hpp"
#include "cgar/model.hpp"
#include "cgar/optimizer.hpp"
#include "cgar/sudoku.hpp"
#include "cgar/supervision.hpp"

namespace cgar {

enum class HaltRule {
    max_position,  // fire when the largest halt probability exceeds 0.5
    all_positions, // fire when every halt probability exceeds 0.5
};

HaltRule parse_halt_rule(const std::string& name);
bool halt_fired(HaltRule rule, std::span<const real> q);

struct SupervisionOpts {
    DepthConfig depth;
    SupervisionWeights weights;
    double beta = 0.5;
    bool bce_inside_normalizer = false;
    HaltRule rule = HaltRule::max_position;
    bool early_halt = true;  // when false, all n_sup steps always run
};

// One supervision step's diagnostics.
struct StepRecord {
    double ce = 0;
    double weighted_ce = 0;
    double bce = 0;
    std::vector<real> q;
    bool exact_match = false;
    bool halt_fired = false;
};

// Full multi-step pass over one puzzle. `loss` is live on the active tape
// when one is recording; the value fields are plain numbers either way.
struct SupervisionRun {
    Tensor loss;
    std::vector<StepRecord> steps;
    int steps_executed = 0;
    int halt_step = 0;  // first step where the rule fired; steps_executed if never
    long block_apps = 0;
    long grad_block_apps = 0;
    std::vector<int> prediction;  // argmax decode at the last executed step
    bool exact_match = false;
    int correct_tokens = 0;
    double weighted_ce_total = 0;
    double bce_total = 0;  // beta-scaled halting loss contribution
};

// Per-step states entering the recorded recursion cycle. Captured once,
// then replayed so finite differences probe the same truncated function
// the tape differentiates (no-grad cycles and detached carries are
// constants to backward).
struct SupervisionTrace {
    std::vector<RecursionState> inputs;
};

// Runs up to n_sup supervised recursion steps: deep recursion, one loss
// per step, carried state detached between steps. With early_halt the loop
// stops after the step where the halting rule fires.
SupervisionRun run_supervision(const Model& model, const PuzzleInstance& puzzle,
                               const SupervisionOpts& opts,
                               SupervisionTrace* trace = nullptr,
                               const SupervisionTrace* replay = nullptr);

// One JSONL line per epoch.
struct MetricsRecord {
    long epoch = 0;
    double rho = 0;
    int n = 0, T = 0;
    double lr = 0;
    double loss = 0;        // batch-mean weighted loss
    double ce_loss = 0;     // batch-mean weighted cross-entropy part
    double halt_loss = 0;   // batch-mean halting part
    double train_exact = 0; // batch fraction solved at the last executed step
    double train_token = 0;
    double grad_norm = 0;   // pre-clip global norm
    double sup_steps = 0;   // mean executed supervision steps
    long cum_block_apps = 0;
    double steps_per_sec = 0;
    std::optional<double> eval_exact;
    std::optional<double> eval_token;

    std::string to_json() const;
    static MetricsRecord from_json(const std::string& line);
};

// Field-wise equality ignoring wall-clock throughput; the determinism
// guarantee covers everything except timing.
bool metrics_equal_ignoring_timing(const MetricsRecord& a, const MetricsRecord& b,
                                   double tol = 0.0);

class Trainer {
  public:
    // Validates the config and builds a fresh model. Dataset vectors are
    // taken by value; every puzzle must match the configured grid.
    Trainer(const TrainConfig& cfg, std::vector<PuzzleInstance> train,
            std::vector<PuzzleInstance> test);

    // Restores model parameters, optimizer moments, RNG stream and epoch
    // counter; the next run() continues from rec.epoch + 1.
    void restore(const CheckpointRecord& rec);

    // One optimizer step on a freshly sampled batch. Throws NumericError
    // if the loss is not finite.
    MetricsRecord run_epoch(long epoch);

    struct Sinks {
        std::function<void(const MetricsRecord&)> on_metrics;
        std::function<void(long, const CheckpointRecord&)> on_checkpoint;
        std::function<void(long)> on_progress;  // occasional heartbeat
    };
    // Runs from the current epoch to cfg.epochs, evaluating every
    // eval_every epochs (and at the end) and checkpointing every
    // checkpoint_every epochs (and at the end).
    void run(const Sinks& sinks = {});

    Model& model() { return model_; }
    const Model& model() const { return model_; }
    const TrainConfig& config() const { return cfg_; }
    long cumulative_block_apps() const { return cum_block_apps_; }
    long next_epoch() const { return next_epoch_; }
    CheckpointRecord make_checkpoint(long epoch) const;
    SupervisionOpts supervision_opts(const DepthConfig& depth) const;

  private:
    TrainConfig cfg_;
    CurriculumSchedule schedule_;
    SupervisionWeights weights_;
    Model model_;
    OptimizerState opt_;
    std::mt19937_64 rng_;
    std::vector<PuzzleInstance> train_;
    std::vector<PuzzleInstance> test_;
    long cum_block_apps_ = 0;
    long next_epoch_ = 1;
};

// Global gradient norm of each supervision step's unweighted
// cross-entropy, averaged over the given puzzles, with every step forced
// to run. Feeds gradient_decay_profile.
std::vector<double> measure_step_gradient_norms(const Model& model,
                                                std::span<const PuzzleInstance> batch,
                                                const DepthConfig& depth, int n_sup);

}  // namespace cgar
