#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cgar/evaluation.hpp"

using namespace cgar;

namespace {

Model tiny_model(std::uint64_t seed = 3) {
    ModelDims d;
    d.seq_len = 16;
    d.vocab = 5;
    d.d_model = 16;
    d.heads = 2;
    d.d_ffn = 32;
    return Model(d, seed);
}

DatasetSplit tiny_data(std::uint64_t seed = 5, int count = 15) {
    GenConfig g;
    g.grid = 4;
    g.count = count;
    g.holes_min = 4;
    g.holes_max = 6;
    g.seed = seed;
    return generate_dataset(g);
}

EvalOptions tiny_opts() {
    EvalOptions o;
    o.depth = {2, 1};
    o.n_sup = 2;
    return o;
}

}  // namespace

TEST_CASE("accuracy helpers") {
    const bool solved[] = {true, false, true, true};
    CHECK(exact_accuracy(solved) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(token_accuracy(30, 40) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(generalization_gap(0.9, 0.8) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK_THROWS_AS((void)exact_accuracy(std::span<const bool>{}), ValidationError);
    CHECK_THROWS_AS((void)token_accuracy(1, 0), ValidationError);
}

TEST_CASE("evaluation is deterministic and self-consistent") {
    Model m = tiny_model();
    DatasetSplit data = tiny_data();
    EvalReport a = evaluate(m, data.test, tiny_opts());
    EvalReport b = evaluate(m, data.test, tiny_opts());

    CHECK(a.n_test == static_cast<long>(data.test.size()));
    CHECK(a.exact_acc == b.exact_acc);
    CHECK(a.token_acc == b.token_acc);
    CHECK(a.mean_loss == b.mean_loss);
    CHECK(a.block_apps == b.block_apps);

    // Token accuracy dominates exact accuracy.
    CHECK(a.token_acc >= a.exact_acc);
    CHECK(a.solved == std::lround(a.exact_acc * double(a.n_test)));

    // Histogram covers every puzzle.
    long hist_total = 0;
    for (long c : a.halt_histogram) hist_total += c;
    CHECK(hist_total == a.n_test);
    CHECK(a.avg_halt_steps >= 1.0);
    CHECK(a.avg_halt_steps <= 2.0);

    CHECK_THROWS_AS((void)evaluate(m, {}, tiny_opts()), ValidationError);
}

TEST_CASE("multithreaded evaluation matches single-threaded bitwise") {
    Model m = tiny_model(7);
    DatasetSplit data = tiny_data(9, 20);
    EvalOptions o1 = tiny_opts();
    EvalOptions o4 = tiny_opts();
    o4.threads = 4;
    EvalReport a = evaluate(m, data.train, o1);
    EvalReport b = evaluate(m, data.train, o4);
    CHECK(a.exact_acc == b.exact_acc);
    CHECK(a.token_acc == b.token_acc);
    CHECK(a.mean_loss == b.mean_loss);
    CHECK(a.block_apps == b.block_apps);
    CHECK(a.halt_histogram == b.halt_histogram);
}

TEST_CASE("per-step decode records the first fully-correct step") {
    Model m = tiny_model();
    DatasetSplit data = tiny_data();
    EvalOptions o = tiny_opts();
    o.per_step_decode = true;
    EvalReport rep = evaluate(m, data.test, o);
    REQUIRE(rep.first_correct_histogram.has_value());
    // Index 0 counts never-correct puzzles; bins 1..n_sup count first hits.
    CHECK(rep.first_correct_histogram->size() ==
          static_cast<std::size_t>(o.n_sup) + 1);
    long total = 0;
    for (long c : *rep.first_correct_histogram) total += c;
    CHECK(total == rep.n_test);
}

TEST_CASE("halting metrics aggregate decisions") {
    // Three puzzles halting at steps 1, 2, 2 with n_sup=3.
    const std::vector<int> steps{1, 2, 2};
    const std::vector<std::pair<bool, bool>> decisions{
        {true, true},    // agree
        {false, false},  // agree
        {true, false},   // disagree
        {false, true},   // disagree
    };
    HaltingStats hs = halting_metrics(steps, 3, decisions);
    CHECK(hs.avg_steps == doctest::Approx(5.0 / 3).epsilon(1e-12));
    REQUIRE(hs.histogram.size() == 3);
    CHECK(hs.histogram[0] == 1);
    CHECK(hs.histogram[1] == 2);
    CHECK(hs.histogram[2] == 0);
    CHECK(hs.q_halt_acc == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS((void)halting_metrics({}, 3, decisions), ValidationError);
    const std::vector<int> bad{0};
    CHECK_THROWS_AS((void)halting_metrics(bad, 3, decisions), ValidationError);
}

TEST_CASE("flops report compares counted against fixed-depth work") {
    // Synthetic two-epoch series at (2,1): 4 puzzles x 2 sup steps x 3 apps.
    std::vector<MetricsRecord> ms(2);
    ms[0].epoch = 1;
    ms[0].cum_block_apps = 24;
    ms[1].epoch = 2;
    ms[1].cum_block_apps = 48;
    CurriculumSchedule sched = resolve_schedule("fixed:2,1");
    FlopsReport fr = flops_report(ms, {6, 3}, 4, 2, sched);
    CHECK(fr.counted == 48);
    CHECK(fr.counterfactual == 2L * 4 * 2 * 21);
    CHECK(fr.measured_reduction ==
          doctest::Approx(1.0 - 48.0 / (2 * 4 * 2 * 21)).epsilon(1e-12));
    CHECK(fr.predicted_reduction ==
          doctest::Approx(1.0 - 6.0 / 42.0).epsilon(1e-12));
    CHECK_THROWS_AS(
        (void)flops_report({}, {6, 3}, 4, 2, sched), ValidationError);
}

TEST_CASE("run comparison reports flops-to-threshold speedups") {
    auto mk = [](const std::string& name, std::vector<double> tokens,
                 long apps_per_epoch) {
        RunSeries rs;
        rs.name = name;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            MetricsRecord m;
            m.epoch = static_cast<long>(i) + 1;
            m.cum_block_apps = apps_per_epoch * (static_cast<long>(i) + 1);
            m.loss = 1.0;
            m.eval_token = tokens[i];
            m.eval_exact = tokens[i] / 2;
            rs.records.push_back(m);
        }
        return rs;
    };
    // Baseline reaches 0.9 on epoch 3 (3000 apps); fast run on epoch 2 (600).
    std::vector<RunSeries> runs{
        mk("baseline", {0.5, 0.8, 0.95}, 1000),
        mk("fast", {0.6, 0.92, 0.97}, 300),
    };
    const std::vector<double> thresholds{0.9, 0.99};
    auto sums = compare_runs(runs, thresholds);
    REQUIRE(sums.size() == 2);
    CHECK(sums[0].name == "baseline");
    REQUIRE(sums[0].flops_to_threshold.size() == 2);
    CHECK(sums[0].flops_to_threshold[0].value() == 3000);
    CHECK_FALSE(sums[0].flops_to_threshold[1].has_value());  // never reaches 0.99
    CHECK(sums[1].flops_to_threshold[0].value() == 600);
    CHECK(sums[1].speedup_vs_first[0].value() == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(sums[0].speedup_vs_first[0].value() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sums[1].final_eval_token.value() == doctest::Approx(0.97).epsilon(1e-12));

    // Single run or missing evals are rejected.
    std::vector<RunSeries> one{runs[0]};
    CHECK_THROWS_AS((void)compare_runs(one, thresholds), ValidationError);
    RunSeries no_eval;
    no_eval.name = "none";
    no_eval.records.push_back(MetricsRecord{});
    std::vector<RunSeries> with_bad{runs[0], no_eval};
    CHECK_THROWS_AS((void)compare_runs(with_bad, thresholds), ValidationError);
}

TEST_CASE("eval options derive from training config") {
    TrainConfig cfg;
    cfg.schedule = "0.5:2,1;1.0:4,2";
    cfg.n_sup = 6;
    cfg.lambda = 0.9;
    cfg.eval_halt_rule = "max";
    EvalOptions o = eval_options_from(cfg);
    CHECK(o.depth.n == 4);   // deepest stage
    CHECK(o.depth.T == 2);
    CHECK(o.n_sup == 6);
    CHECK(o.lambda == 0.9);
    CHECK(o.rule == HaltRule::max_position);
}
