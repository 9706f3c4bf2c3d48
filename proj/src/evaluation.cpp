#include "cgar/evaluation.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>

#include "cgar/parallel.hpp"

namespace cgar {

using nlohmann::json;

EvalOptions eval_options_from(const TrainConfig& cfg) {
    EvalOptions o;
    o.depth = resolve_schedule(cfg.schedule).stages.back().depth;
    o.n_sup = cfg.n_sup;
    o.lambda = cfg.lambda;
    o.beta = cfg.beta;
    o.bce_inside_normalizer = cfg.bce_inside_normalizer;
    o.rule = parse_halt_rule(cfg.eval_halt_rule);
    o.threads = cfg.threads;
    return o;
}

std::string EvalReport::to_json() const {
    json j;
    j["n_test"] = n_test;
    j["solved"] = solved;
    j["exact_acc"] = exact_acc;
    j["token_acc"] = token_acc;
    j["mean_loss"] = mean_loss;
    j["avg_halt_steps"] = avg_halt_steps;
    j["halt_histogram"] = halt_histogram;
    j["q_halt_acc"] = q_halt_acc;
    j["block_apps"] = block_apps;
    j["puzzles_per_sec"] = puzzles_per_sec;
    if (first_correct_histogram) j["first_correct_histogram"] = *first_correct_histogram;
    return j.dump();
}

EvalReport evaluate(const Model& model, std::span<const PuzzleInstance> puzzles,
                    const EvalOptions& opts) {
    if (puzzles.empty()) throw ValidationError("evaluate: empty puzzle set");
    const auto t0 = std::chrono::steady_clock::now();

    SupervisionOpts sup;
    sup.depth = opts.depth;
    sup.weights = compute_weights(opts.lambda, opts.n_sup);
    sup.beta = opts.beta;
    sup.bce_inside_normalizer = opts.bce_inside_normalizer;
    sup.rule = opts.rule;
    sup.early_halt = opts.early_halt;

    struct PerPuzzle {
        bool exact = false;
        int correct_tokens = 0;
        int halt_step = 0;
        int first_correct = 0;
        double loss = 0;
        long apps = 0;
        std::vector<std::pair<bool, bool>> decisions;
    };
    std::vector<PerPuzzle> rows(puzzles.size());
    parallel_for(static_cast<long>(puzzles.size()), opts.threads, [&](long i) {
        SupervisionRun run = run_supervision(model, puzzles[i], sup);
        auto& r = rows[i];
        r.exact = run.exact_match;
        r.correct_tokens = run.correct_tokens;
        r.halt_step = run.halt_step;
        r.loss = static_cast<double>(run.loss.item());
        r.apps = run.block_apps;
        for (std::size_t s = 0; s < run.steps.size(); ++s) {
            r.decisions.emplace_back(run.steps[s].halt_fired, run.steps[s].exact_match);
            if (opts.per_step_decode && r.first_correct == 0 && run.steps[s].exact_match)
                r.first_correct = static_cast<int>(s) + 1;
        }
    });

    EvalReport rep;
    rep.n_test = static_cast<long>(puzzles.size());
    const long L = puzzles[0].seq_len();
    std::vector<int> halt_steps;
    std::vector<std::pair<bool, bool>> decisions;
    long correct_tokens = 0;
    for (const auto& r : rows) {
        rep.solved += r.exact ? 1 : 0;
        correct_tokens += r.correct_tokens;
        rep.mean_loss += r.loss / static_cast<double>(puzzles.size());
        rep.block_apps += r.apps;
        halt_steps.push_back(r.halt_step);
        decisions.insert(decisions.end(), r.decisions.begin(), r.decisions.end());
    }
    rep.exact_acc = static_cast<double>(rep.solved) / static_cast<double>(rep.n_test);
    rep.token_acc = token_accuracy(correct_tokens, L * rep.n_test);
    HaltingStats hs = halting_metrics(halt_steps, opts.n_sup, decisions);
    rep.avg_halt_steps = hs.avg_steps;
    rep.halt_histogram = std::move(hs.histogram);
    rep.q_halt_acc = hs.q_halt_acc;
    if (opts.per_step_decode) {
        std::vector<long> hist(opts.n_sup + 1, 0);
        for (const auto& r : rows) ++hist[r.first_correct];
        rep.first_correct_histogram = std::move(hist);
    }
    const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);
    rep.puzzles_per_sec = dt.count() > 0 ? rep.n_test / dt.count() : 0.0;
    return rep;
}

double exact_accuracy(std::span<const bool> solved) {
    if (solved.empty()) throw ValidationError("exact_accuracy: empty input");
    long n = 0;
    for (bool b : solved) n += b ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(solved.size());
}

double token_accuracy(long correct_tokens, long total_tokens) {
    if (total_tokens <= 0) throw ValidationError("token_accuracy: no tokens");
    if (correct_tokens < 0 || correct_tokens > total_tokens)
        throw ValidationError("token_accuracy: correct count out of range");
    return static_cast<double>(correct_tokens) / static_cast<double>(total_tokens);
}

double generalization_gap(double train_acc, double test_acc) {
    return train_acc - test_acc;
}

HaltingStats halting_metrics(std::span<const int> halt_steps, int n_sup,
                             std::span<const std::pair<bool, bool>> decisions) {
    if (halt_steps.empty()) throw ValidationError("halting_metrics: no halt steps");
    if (n_sup < 1) throw ValidationError("halting_metrics: n_sup must be positive");
    HaltingStats out;
    out.histogram.assign(n_sup, 0);
    for (int s : halt_steps) {
        if (s < 1 || s > n_sup)
            throw ValidationError("halting_metrics: halt step out of range [1, n_sup]");
        ++out.histogram[s - 1];
        out.avg_steps += static_cast<double>(s) / static_cast<double>(halt_steps.size());
    }
    if (!decisions.empty()) {
        long agree = 0;
        for (const auto& [fired, correct] : decisions) agree += fired == correct ? 1 : 0;
        out.q_halt_acc = static_cast<double>(agree) / static_cast<double>(decisions.size());
    }
    return out;
}

FlopsReport flops_report(std::span<const MetricsRecord> metrics,
                         const DepthConfig& baseline, int batch_size, int n_sup,
                         const CurriculumSchedule& schedule) {
    if (metrics.empty()) throw ValidationError("flops_report: no metrics records");
    if (batch_size < 1 || n_sup < 1)
        throw ValidationError("flops_report: batch_size and n_sup must be positive");
    FlopsReport rep;
    rep.counted = metrics.back().cum_block_apps;
    const long per_step = static_cast<long>(baseline.T) * (baseline.n + 1);
    rep.counterfactual =
        static_cast<long>(metrics.size()) * batch_size * n_sup * per_step;
    rep.measured_reduction =
        1.0 - static_cast<double>(rep.counted) / static_cast<double>(rep.counterfactual);
    rep.predicted_reduction = flops_reduction(schedule, baseline);
    return rep;
}

RunSeries load_metrics_file(const std::string& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics file '" + path + "'");
    RunSeries series;
    series.name = name.empty() ? path : name;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        series.records.push_back(MetricsRecord::from_json(line));
    }
    if (series.records.empty()) throw IoError("metrics file '" + path + "' is empty");
    return series;
}

std::vector<RunSummary> compare_runs(std::span<const RunSeries> runs,
                                     std::span<const double> token_thresholds) {
    if (runs.size() < 2) throw ValidationError("compare_runs: need at least two runs");
    for (const auto& run : runs) {
        bool any_eval = false;
        for (const auto& r : run.records) any_eval = any_eval || r.eval_token.has_value();
        if (!any_eval)
            throw ValidationError("compare_runs: run '" + run.name +
                                  "' has no eval records; rerun with eval_every > 0");
    }
    std::vector<RunSummary> out;
    for (const auto& run : runs) {
        RunSummary s;
        s.name = run.name;
        s.epochs = run.records.back().epoch;
        s.final_loss = run.records.back().loss;
        s.total_block_apps = run.records.back().cum_block_apps;
        for (auto it = run.records.rbegin(); it != run.records.rend(); ++it)
            if (it->eval_token) {
                s.final_eval_token = it->eval_token;
                s.final_eval_exact = it->eval_exact;
                break;
            }
        for (double thr : token_thresholds) {
            std::optional<long> flops;
            for (const auto& r : run.records)
                if (r.eval_token && *r.eval_token >= thr) {
                    flops = r.cum_block_apps;
                    break;
                }
            s.flops_to_threshold.push_back(flops);
        }
        out.push_back(std::move(s));
    }
    for (std::size_t t = 0; t < token_thresholds.size(); ++t) {
        const auto& base = out[0].flops_to_threshold[t];
        for (auto& s : out) {
            const auto& own = s.flops_to_threshold[t];
            if (base && own && *own > 0)
                s.speedup_vs_first.push_back(static_cast<double>(*base) /
                                             static_cast<double>(*own));
            else
                s.speedup_vs_first.push_back(std::nullopt);
        }
    }
    return out;
}

}  // namespace cgar
