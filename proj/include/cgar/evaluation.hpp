#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgar/training.hpp"

namespace cgar {

struct EvalOptions {
    DepthConfig depth{6, 3};
    int n_sup = 4;
    double lambda = 0.7;  // only affects the reported loss, not predictions
    double beta = 0.5;
    bool bce_inside_normalizer = false;
    HaltRule rule = HaltRule::all_positions;
    bool early_halt = true;
    // Additionally decode after every supervision step and record the first
    // step whose decode is fully correct (0 when none is).
    bool per_step_decode = false;
    int threads = 1;
};

EvalOptions eval_options_from(const TrainConfig& cfg);

struct EvalReport {
    long n_test = 0;
    long solved = 0;          // == round(exact_acc * n_test) by construction
    double exact_acc = 0;
    double token_acc = 0;
    double mean_loss = 0;     // mean weighted supervision loss per puzzle
    double avg_halt_steps = 0;
    std::vector<long> halt_histogram;  // index t-1: puzzles halting at step t
    double q_halt_acc = 0;    // halt decision agreement with exact match, per step
    long block_apps = 0;
    double puzzles_per_sec = 0;
    // Only with per_step_decode: distribution of the first fully-correct
    // step, index 0 counting puzzles never correct.
    std::optional<std::vector<long>> first_correct_histogram;

    std::string to_json() const;
};

// Inference over a held-out set: no tape, halting rule active. Puzzles are
// processed in index order regardless of thread count.
EvalReport evaluate(const Model& model, std::span<const PuzzleInstance> puzzles,
                    const EvalOptions& opts);

double exact_accuracy(std::span<const bool> solved);
double token_accuracy(long correct_tokens, long total_tokens);
double generalization_gap(double train_acc, double test_acc);

struct HaltingStats {
    double avg_steps = 0;
    std::vector<long> histogram;
    double q_halt_acc = 0;
};

// halt_steps: realized stopping step per puzzle (1-based). decisions: one
// (halt_fired, exact_match) pair per executed supervision step, pooled.
HaltingStats halting_metrics(std::span<const int> halt_steps, int n_sup,
                             std::span<const std::pair<bool, bool>> decisions);

struct FlopsReport {
    long counted = 0;         // block applications actually executed
    long counterfactual = 0;  // applications a fixed-depth run would need
    double measured_reduction = 0;
    double predicted_reduction = 0;
};

// Compares counted work in a metrics series against the same number of
// epochs at a fixed baseline depth with no early halting.
FlopsReport flops_report(std::span<const MetricsRecord> metrics,
                         const DepthConfig& baseline, int batch_size, int n_sup,
                         const CurriculumSchedule& schedule);

struct RunSeries {
    std::string name;
    std::vector<MetricsRecord> records;
};

RunSeries load_metrics_file(const std::string& path, const std::string& name = "");

struct RunSummary {
    std::string name;
    long epochs = 0;
    double final_loss = 0;
    std::optional<double> final_eval_exact;
    std::optional<double> final_eval_token;
    long total_block_apps = 0;
    // Per threshold: cumulative block applications when eval token accuracy
    // first reached it (nullopt when never reached).
    std::vector<std::optional<long>> flops_to_threshold;
    // Per threshold: first run's flops-to-threshold divided by this run's.
    std::vector<std::optional<double>> speedup_vs_first;
};

// Pre: at least two runs; every run must contain eval records. The first
// run is the speedup baseline.
std::vector<RunSummary> compare_runs(std::span<const RunSeries> runs,
                                     std::span<const double> token_thresholds);

}  // namespace cgar
