#include "cgar/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cgar/checkpoint.hpp"
#include "cgar/curriculum.hpp"
#include "cgar/evaluation.hpp"
#include "cgar/sudoku.hpp"
#include "cgar/training.hpp"

namespace cgar {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string join_args(int argc, const char* const* argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (i) out += ' ';
        out += argv[i];
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("write to '" + path + "' failed");
}

// Every run directory gets a manifest tying outputs to the exact inputs
// that produced them.
void write_manifest(const std::string& path, const std::string& command,
                    std::uint64_t seed, const json& config, const std::string& hash,
                    const json& artifacts) {
    json j;
    j["tool_version"] = kToolVersion;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    j["config_hash"] = hash;
    j["artifacts"] = artifacts;
    write_text_file(path, j.dump(2) + "\n");
}

json config_json(const TrainConfig& cfg) {
    json j;
    for (const auto& [k, v] : config_kv(cfg)) j[k] = v;
    return j;
}

struct SetFlag {
    std::vector<std::string> assignments;
    void apply(TrainConfig& cfg) const {
        for (const auto& a : assignments) {
            auto eq = a.find('=');
            if (eq == std::string::npos)
                throw ValidationError("--set expects key=value, got '" + a + "'");
            apply_assignment(cfg, a.substr(0, eq), a.substr(eq + 1));
        }
    }
};

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const GenConfig& gen, const std::string& out_prefix,
                 const std::string& command) {
    DatasetSplit split = generate_dataset(gen);
    const std::string train_path = out_prefix + ".train.txt";
    const std::string test_path = out_prefix + ".test.txt";
    save_dataset(split.train, train_path);
    if (!split.test.empty()) save_dataset(split.test, test_path);

    json cfg;
    cfg["grid"] = gen.grid;
    cfg["count"] = gen.count;
    cfg["holes_min"] = gen.holes_min;
    cfg["holes_max"] = gen.holes_max;
    cfg["require_unique"] = gen.require_unique;
    cfg["augment"] = gen.augment;
    cfg["test_fraction"] = gen.test_fraction;
    cfg["seed"] = gen.seed;
    json artifacts;
    artifacts["train"] = train_path;
    if (!split.test.empty()) artifacts["test"] = test_path;
    write_manifest(out_prefix + ".manifest.json", command, gen.seed, cfg,
                   std::to_string(fnv1a64(cfg.dump())), artifacts);

    std::cout << "wrote " << split.train.size() << " train / " << split.test.size()
              << " test puzzles to " << out_prefix << ".{train,test}.txt\n";
    return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(TrainConfig cfg, const std::string& out_dir,
              const std::string& resume_path, const SetFlag& sets,
              const std::string& command, bool quiet) {
    CheckpointRecord resume;
    const bool resuming = !resume_path.empty();
    if (resuming) {
        resume = load_checkpoint(resume_path);
        // The checkpoint echo is authoritative on resume so the continued
        // run cannot silently diverge from the original; --set still wins.
        cfg = parse_config_text(resume.config_echo);
        sets.apply(cfg);
    }
    validate_config_or_throw(cfg);
    if (cfg.train_data.empty())
        throw ValidationError("train: train_data must be set (file of puzzles)");

    auto train_set = load_dataset(cfg.train_data);
    std::vector<PuzzleInstance> test_set;
    if (!cfg.test_data.empty()) test_set = load_dataset(cfg.test_data);

    fs::create_directories(out_dir);
    json artifacts;
    artifacts["metrics"] = out_dir + "/metrics.jsonl";
    artifacts["checkpoints"] = out_dir;
    write_manifest(out_dir + "/manifest.json", command, cfg.seed, config_json(cfg),
                   config_hash(cfg), artifacts);

    std::ofstream metrics(out_dir + "/metrics.jsonl", std::ios::app);
    if (!metrics) throw IoError("cannot open metrics file in '" + out_dir + "'");

    Trainer trainer(cfg, std::move(train_set), std::move(test_set));
    if (resuming) trainer.restore(resume);

    MetricsRecord last;
    Trainer::Sinks sinks;
    sinks.on_metrics = [&](const MetricsRecord& rec) {
        metrics << rec.to_json() << '\n';
        metrics.flush();
        last = rec;
    };
    sinks.on_checkpoint = [&](long epoch, const CheckpointRecord& rec) {
        save_checkpoint(out_dir + "/ckpt_" + std::to_string(epoch) + ".bin", rec);
    };
    if (!quiet)
        sinks.on_progress = [&](long epoch) {
            std::cerr << "epoch " << epoch << "/" << cfg.epochs << "  loss "
                      << std::setprecision(4) << last.loss << "  train_exact "
                      << last.train_exact;
            if (last.eval_exact) std::cerr << "  eval_exact " << *last.eval_exact;
            std::cerr << "\n";
        };
    trainer.run(sinks);

    std::cout << "run complete: " << cfg.epochs << " epochs, final loss " << last.loss
              << ", block applications " << trainer.cumulative_block_apps() << "\n";
    if (last.eval_exact)
        std::cout << "final eval: exact " << *last.eval_exact << ", token "
                  << *last.eval_token << "\n";
    return 0;
}

// -------------------------------------------------------------------- eval

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& train_data_path, const std::string& halting,
             int n_sup_override, bool per_step_decode, bool as_json,
             const std::string& out_path, int threads) {
    CheckpointRecord rec = load_checkpoint(ckpt_path);
    Model model(rec.dims, rec.params);
    TrainConfig cfg =
        rec.config_echo.empty() ? TrainConfig{} : parse_config_text(rec.config_echo);

    EvalOptions opts = eval_options_from(cfg);
    if (!halting.empty()) opts.rule = parse_halt_rule(halting);
    if (n_sup_override > 0) opts.n_sup = n_sup_override;
    opts.per_step_decode = per_step_decode;
    opts.threads = threads;

    auto puzzles = load_dataset(data_path);
    for (const auto& p : puzzles)
        if (p.seq_len() != rec.dims.seq_len || p.grid + 1 != rec.dims.vocab)
            throw ValidationError(
                "eval: dataset grid does not match checkpoint dims (puzzle grid " +
                std::to_string(p.grid) + ")");
    EvalReport report = evaluate(model, puzzles, opts);

    std::optional<double> gap;
    if (!train_data_path.empty()) {
        auto train_puzzles = load_dataset(train_data_path);
        EvalReport train_report = evaluate(model, train_puzzles, opts);
        gap = generalization_gap(train_report.exact_acc, report.exact_acc);
    }

    std::ostringstream out;
    if (as_json) {
        json j = json::parse(report.to_json());
        j["checkpoint"] = ckpt_path;
        j["epoch"] = rec.epoch;
        if (gap) j["generalization_gap"] = *gap;
        out << j.dump(2) << "\n";
    } else {
        out << "checkpoint      " << ckpt_path << " (epoch " << rec.epoch << ")\n"
            << "puzzles         " << report.n_test << "\n"
            << "exact accuracy  " << report.exact_acc << " (" << report.solved
            << " solved)\n"
            << "token accuracy  " << report.token_acc << "\n"
            << "mean loss       " << report.mean_loss << "\n"
            << "avg halt steps  " << report.avg_halt_steps << "\n"
            << "halt histogram  ";
        for (std::size_t i = 0; i < report.halt_histogram.size(); ++i)
            out << (i ? " " : "") << i + 1 << ":" << report.halt_histogram[i];
        out << "\nq-halt accuracy " << report.q_halt_acc << "\n"
            << "block apps      " << report.block_apps << "\n";
        if (report.first_correct_histogram) {
            out << "first correct   never:" << (*report.first_correct_histogram)[0];
            for (std::size_t i = 1; i < report.first_correct_histogram->size(); ++i)
                out << " " << i << ":" << (*report.first_correct_histogram)[i];
            out << "\n";
        }
        if (gap) out << "generalization gap (exact, train - test) " << *gap << "\n";
    }
    std::cout << out.str();
    if (!out_path.empty()) write_text_file(out_path, out.str());
    return 0;
}

// -------------------------------------------------------- inspect-schedule

int cmd_inspect_schedule(const std::string& spec, const std::string& baseline_str,
                         bool as_json) {
    CurriculumSchedule schedule = resolve_schedule(spec);
    validate_schedule_or_throw(schedule);
    DepthConfig baseline{6, 3};
    if (!baseline_str.empty()) {
        auto comma = baseline_str.find(',');
        if (comma == std::string::npos)
            throw ValidationError("--baseline expects 'n,T'");
        try {
            baseline.n = std::stoi(baseline_str.substr(0, comma));
            baseline.T = std::stoi(baseline_str.substr(comma + 1));
        } catch (const std::exception&) {
            throw ValidationError("--baseline expects 'n,T'");
        }
        validate_depth(baseline);
    }

    const double expected = expected_effective_depth(schedule);
    const double speedup = predicted_speedup(schedule, baseline);
    const double reduction = flops_reduction(schedule, baseline);

    if (as_json) {
        json j;
        j["stages"] = json::array();
        double lo = 0;
        for (const auto& st : schedule.stages) {
            json s;
            s["from"] = lo;
            s["to"] = st.tau_hi;
            s["n"] = st.depth.n;
            s["T"] = st.depth.T;
            s["effective_depth"] = effective_depth(st.depth);
            j["stages"].push_back(s);
            lo = st.tau_hi;
        }
        j["expected_effective_depth"] = expected;
        j["baseline"] = {{"n", baseline.n}, {"T", baseline.T},
                         {"effective_depth", effective_depth(baseline)}};
        j["predicted_speedup"] = speedup;
        j["flops_reduction"] = reduction;
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "stage  progress        (n,T)  effective depth\n";
        double lo = 0;
        for (std::size_t i = 0; i < schedule.stages.size(); ++i) {
            const auto& st = schedule.stages[i];
            std::ostringstream range;
            range << "[" << lo << ", " << st.tau_hi << ")";
            std::cout << std::left << std::setw(7) << i + 1 << std::setw(16)
                      << range.str() << "(" << st.depth.n << "," << st.depth.T << ")  "
                      << effective_depth(st.depth) << "\n";
            lo = st.tau_hi;
        }
        std::cout << "expected effective depth  " << expected << "\n"
                  << "baseline depth (" << baseline.n << "," << baseline.T << ")      "
                  << effective_depth(baseline) << "\n"
                  << "predicted speedup         " << speedup << "x\n"
                  << "compute reduction         " << reduction * 100 << "%\n";
    }
    return 0;
}

// -------------------------------------------------------------- grad-check

int cmd_grad_check(int grid, int d_model, int heads, int d_ffn, int n, int T,
                   int n_sup, double eps, double tol, std::uint64_t seed,
                   bool corrupt) {
    ModelDims dims;
    dims.seq_len = grid * grid;
    dims.vocab = grid + 1;
    dims.d_model = d_model;
    dims.heads = heads;
    dims.d_ffn = d_ffn;
    validate_dims(dims);

    Model model(dims, seed);
    auto solved = generate_solved_grid(grid, mix_seed(seed, 1));
    PuzzleInstance puzzle = punch_holes(solved, grid, grid, mix_seed(seed, 2));

    SupervisionOpts opts;
    opts.depth = {n, T};
    validate_depth(opts.depth);
    opts.weights = compute_weights(0.7, n_sup);
    opts.beta = 0.5;
    opts.early_halt = false;  // the loss must be a fixed function of the params

    // Capture the no-grad prefix states once; replaying them makes the
    // probe differentiate exactly what backward records.
    SupervisionTrace trace;
    (void)run_supervision(model, puzzle, opts, &trace);
    auto loss_fn = [&]() {
        return run_supervision(model, puzzle, opts, nullptr, &trace).loss;
    };
    std::vector<std::pair<std::string, Tensor>> params(model.params().begin(),
                                                       model.params().end());
    GradCheckReport report = finite_diff_check(loss_fn, params, eps, corrupt);

    std::cout << "parameters checked   " << model.params().scalar_count() << "\n"
              << "max relative error   " << report.max_rel_err << "\n"
              << "worst parameter      " << report.worst_param << "[" << report.worst_index
              << "] analytic=" << report.analytic_at_worst
              << " numeric=" << report.numeric_at_worst << "\n";
    if (!(report.max_rel_err <= tol))
        throw NumericError("gradient check failed: max relative error " +
                           std::to_string(report.max_rel_err) + " exceeds tolerance " +
                           std::to_string(tol));
    std::cout << "gradient check passed (tolerance " << tol << ")\n";
    return 0;
}

// ----------------------------------------------------------------- compare

int cmd_compare(const std::vector<std::string>& metric_files,
                std::vector<double> thresholds, bool as_json) {
    if (thresholds.empty()) thresholds = {0.9};
    std::vector<RunSeries> runs;
    for (const auto& path : metric_files)
        runs.push_back(load_metrics_file(path, fs::path(path).parent_path().filename()));
    auto summaries = compare_runs(runs, thresholds);

    if (as_json) {
        json j = json::array();
        for (const auto& s : summaries) {
            json r;
            r["name"] = s.name;
            r["epochs"] = s.epochs;
            r["final_loss"] = s.final_loss;
            if (s.final_eval_exact) r["final_eval_exact"] = *s.final_eval_exact;
            if (s.final_eval_token) r["final_eval_token"] = *s.final_eval_token;
            r["total_block_apps"] = s.total_block_apps;
            for (std::size_t t = 0; t < thresholds.size(); ++t) {
                json th;
                th["token_threshold"] = thresholds[t];
                if (s.flops_to_threshold[t]) th["block_apps"] = *s.flops_to_threshold[t];
                if (s.speedup_vs_first[t]) th["speedup_vs_first"] = *s.speedup_vs_first[t];
                r["thresholds"].push_back(th);
            }
            j.push_back(r);
        }
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << std::left << std::setw(24) << "run" << std::setw(10) << "epochs"
                  << std::setw(12) << "eval_exact" << std::setw(12) << "eval_token"
                  << std::setw(16) << "block_apps";
        for (double t : thresholds) {
            std::ostringstream h;
            h << "to>=" << t;
            std::cout << std::setw(14) << h.str() << std::setw(10) << "speedup";
        }
        std::cout << "\n";
        for (const auto& s : summaries) {
            auto fmt_opt = [](const auto& o) {
                std::ostringstream os;
                if (o) os << *o; else os << "n/a";
                return os.str();
            };
            std::cout << std::setw(24) << s.name << std::setw(10) << s.epochs
                      << std::setw(12) << fmt_opt(s.final_eval_exact) << std::setw(12)
                      << fmt_opt(s.final_eval_token) << std::setw(16)
                      << s.total_block_apps;
            for (std::size_t t = 0; t < thresholds.size(); ++t)
                std::cout << std::setw(14) << fmt_opt(s.flops_to_threshold[t])
                          << std::setw(10) << fmt_opt(s.speedup_vs_first[t]);
            std::cout << "\n";
        }
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"tiny recursive reasoner: data generation, training, evaluation"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    const std::string command = join_args(argc, argv);

    // gen-data
    GenConfig gen;
    std::string gen_out = "dataset";
    auto* sc_gen = app.add_subcommand("gen-data", "generate a puzzle dataset");
    sc_gen->add_option("--grid", gen.grid, "grid side, 4 or 9");
    sc_gen->add_option("--count", gen.count, "base puzzles before augmentation");
    sc_gen->add_option("--holes-min", gen.holes_min, "minimum blanked cells");
    sc_gen->add_option("--holes-max", gen.holes_max, "maximum blanked cells");
    sc_gen->add_flag("--no-unique", [&gen](std::int64_t) { gen.require_unique = false; },
                     "allow puzzles with multiple solutions");
    sc_gen->add_option("--augment", gen.augment,
                       "train instances per base puzzle (symmetry transforms)");
    sc_gen->add_option("--test-fraction", gen.test_fraction,
                       "fraction of base puzzles held out");
    sc_gen->add_option("--seed", gen.seed, "generation seed");
    sc_gen->add_option("--out", gen_out, "output path prefix");

    // train
    TrainConfig train_cfg;
    std::string train_out = "run";
    std::string train_preset, train_config_file, train_resume;
    SetFlag train_sets;
    bool train_quiet = false;
    auto* sc_train = app.add_subcommand("train", "train a model");
    sc_train->add_option("--preset", train_preset,
                         "config preset (cgar-default, trm-baseline, pdc-only, "
                         "hsw-only, lambda-<x>)");
    sc_train->add_option("--config", train_config_file, "key=value config file");
    sc_train->add_option("--set", train_sets.assignments,
                         "override a single config key, key=value");
    sc_train->add_option("--out", train_out, "run directory");
    sc_train->add_option("--resume", train_resume, "checkpoint to continue from");
    sc_train->add_flag("--quiet", train_quiet, "suppress progress output");

    // eval
    std::string eval_ckpt, eval_data, eval_train_data, eval_halting, eval_out;
    int eval_n_sup = 0, eval_threads = 1;
    bool eval_per_step = false, eval_json = false;
    auto* sc_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    sc_eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    sc_eval->add_option("--data", eval_data, "puzzle file")->required();
    sc_eval->add_option("--train-data", eval_train_data,
                        "also evaluate here and report the generalization gap");
    sc_eval->add_option("--halting", eval_halting, "halt rule: max or all");
    sc_eval->add_option("--n-sup", eval_n_sup, "override supervision steps");
    sc_eval->add_flag("--per-step-decode", eval_per_step,
                      "record the first fully-correct step per puzzle");
    sc_eval->add_flag("--json", eval_json, "machine-readable output");
    sc_eval->add_option("--out", eval_out, "also write the report here");
    sc_eval->add_option("--threads", eval_threads, "evaluation worker threads");

    // inspect-schedule
    std::string is_schedule = "default", is_baseline;
    bool is_json = false;
    auto* sc_is = app.add_subcommand("inspect-schedule",
                                     "print a curriculum schedule and its cost");
    sc_is->add_option("--schedule", is_schedule, "preset name or 'tau:n,T;...' spec");
    sc_is->add_option("--baseline", is_baseline, "fixed-depth baseline as 'n,T'");
    sc_is->add_flag("--json", is_json, "machine-readable output");

    // grad-check
    int gc_grid = 4, gc_d = 16, gc_heads = 2, gc_ffn = 32, gc_n = 2, gc_T = 2,
        gc_nsup = 2;
    double gc_eps = 1e-5, gc_tol = 1e-4;
    std::uint64_t gc_seed = 7;
    bool gc_corrupt = false;
    auto* sc_gc = app.add_subcommand(
        "grad-check", "finite-difference check of the full training loss");
    sc_gc->add_option("--grid", gc_grid, "grid side");
    sc_gc->add_option("--d-model", gc_d, "model width");
    sc_gc->add_option("--heads", gc_heads, "attention heads");
    sc_gc->add_option("--d-ffn", gc_ffn, "feed-forward width");
    sc_gc->add_option("--n", gc_n, "latent updates per cycle");
    sc_gc->add_option("--T", gc_T, "answer cycles");
    sc_gc->add_option("--n-sup", gc_nsup, "supervision steps");
    sc_gc->add_option("--eps", gc_eps, "finite-difference step");
    sc_gc->add_option("--tol", gc_tol, "max relative error tolerance");
    sc_gc->add_option("--seed", gc_seed, "init seed");
    sc_gc->add_flag("--self-test-corrupt", gc_corrupt,
                    "perturb one analytic gradient; the check must then fail");

    // compare
    std::vector<std::string> cmp_files;
    std::vector<double> cmp_thresholds;
    bool cmp_json = false;
    auto* sc_cmp = app.add_subcommand("compare", "compare metrics across runs");
    sc_cmp->add_option("--metrics", cmp_files, "metrics.jsonl files (two or more)")
        ->required()
        ->expected(2, -1);
    sc_cmp->add_option("--threshold", cmp_thresholds,
                       "token accuracy thresholds for speedup measurement");
    sc_cmp->add_flag("--json", cmp_json, "machine-readable output");

    try {
        app.parse(argc, argv);
        if (sc_gen->parsed()) return cmd_gen_data(gen, gen_out, command);
        if (sc_train->parsed()) {
            if (!train_resume.empty() && (!train_preset.empty() || !train_config_file.empty()))
                throw ValidationError(
                    "train: --resume takes its config from the checkpoint; use --set "
                    "to override");
            if (!train_preset.empty()) apply_preset(train_cfg, train_preset);
            if (!train_config_file.empty()) apply_config_file(train_cfg, train_config_file);
            train_sets.apply(train_cfg);
            return cmd_train(train_cfg, train_out, train_resume, train_sets, command,
                             train_quiet);
        }
        if (sc_eval->parsed())
            return cmd_eval(eval_ckpt, eval_data, eval_train_data, eval_halting,
                            eval_n_sup, eval_per_step, eval_json, eval_out,
                            eval_threads);
        if (sc_is->parsed()) return cmd_inspect_schedule(is_schedule, is_baseline, is_json);
        if (sc_gc->parsed())
            return cmd_grad_check(gc_grid, gc_d, gc_heads, gc_ffn, gc_n, gc_T, gc_nsup,
                                  gc_eps, gc_tol, gc_seed, gc_corrupt);
        if (sc_cmp->parsed()) return cmd_compare(cmp_files, cmp_thresholds, cmp_json);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    }
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.push_back("cgar");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const auto& s : full) argv.push_back(s.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cgar
