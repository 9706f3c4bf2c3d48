#include "cgar/training.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <sstream>

#include "cgar/evaluation.hpp"
#include "cgar/parallel.hpp"

namespace cgar {

using nlohmann::json;

HaltRule parse_halt_rule(const std::string& name) {
    if (name == "max") return HaltRule::max_position;
    if (name == "all") return HaltRule::all_positions;
    throw ValidationError("halt rule must be 'max' or 'all', got '" + name + "'");
}

bool halt_fired(HaltRule rule, std::span<const real> q) {
    if (q.empty()) throw ValidationError("halt_fired: empty halt vector");
    if (rule == HaltRule::max_position) {
        real mx = q[0];
        for (real v : q) mx = std::max(mx, v);
        return mx > real(0.5);
    }
    for (real v : q)
        if (!(v > real(0.5))) return false;
    return true;
}

SupervisionRun run_supervision(const Model& model, const PuzzleInstance& puzzle,
                               const SupervisionOpts& opts,
                               SupervisionTrace* trace,
                               const SupervisionTrace* replay) {
    const auto& dims = model.dims();
    if (puzzle.seq_len() != dims.seq_len || puzzle.grid + 1 != dims.vocab)
        throw ValidationError("run_supervision: puzzle grid does not match model dims");

    SupervisionRun run;
    Tensor x_emb = model.embed_input(puzzle.input);
    RecursionState state{x_emb, Tensor::zeros({dims.seq_len, dims.d_model})};
    run.loss = Tensor::scalar(0);
    std::vector<int> last_pred;

    for (int t = 1; t <= opts.weights.n_sup; ++t) {
        RecursionStats stats;
        const RecursionState* step_replay = nullptr;
        // At t=1 with T=1 the recorded cycle reads the live embedding, so
        // there is no constant prefix to substitute.
        if (replay && !(t == 1 && opts.depth.T == 1)) {
            if (static_cast<std::size_t>(t) > replay->inputs.size())
                throw ValidationError(
                    "run_supervision: replay trace shorter than execution");
            step_replay = &replay->inputs[t - 1];
        }
        RecursionState traced;
        state = model.deep_recursion(state, x_emb, opts.depth, &stats,
                                     trace ? &traced : nullptr, step_replay);
        if (trace) trace->inputs.push_back(traced);
        run.block_apps += stats.block_applications;
        run.grad_block_apps += stats.grad_applications;

        Tensor logits = model.output_logits(state.y);
        Tensor q = model.halt_probability(state.y);
        StepLoss sl = cgar_step_loss(logits, puzzle.solution, q, opts.weights, t,
                                     opts.beta, opts.bce_inside_normalizer);
        run.loss = add(run.loss, sl.total);

        StepRecord rec;
        rec.ce = sl.ce;
        rec.weighted_ce = sl.weighted_ce;
        rec.bce = sl.bce;
        rec.q.assign(q.values().begin(), q.values().end());
        rec.exact_match = sl.exact_match;
        rec.halt_fired = halt_fired(opts.rule, q.values());
        run.weighted_ce_total += sl.weighted_ce;
        run.bce_total += (opts.bce_inside_normalizer ? opts.beta / opts.weights.z
                                                     : opts.beta) *
                         sl.bce;
        last_pred = argmax_rows(logits);

        // Carried state never leaks gradients across supervision steps.
        state = {detach(state.y), detach(state.z)};

        const bool fired = rec.halt_fired;
        run.steps.push_back(std::move(rec));
        if (run.halt_step == 0 && fired) run.halt_step = t;
        if (opts.early_halt && fired) break;
    }

    run.steps_executed = static_cast<int>(run.steps.size());
    if (run.halt_step == 0) run.halt_step = run.steps_executed;
    run.prediction = std::move(last_pred);
    run.exact_match = run.steps.back().exact_match;
    for (int i = 0; i < puzzle.seq_len(); ++i)
        if (run.prediction[i] == puzzle.solution[i]) ++run.correct_tokens;
    return run;
}

std::string MetricsRecord::to_json() const {
    json j;
    j["epoch"] = epoch;
    j["rho"] = rho;
    j["n"] = n;
    j["T"] = T;
    j["lr"] = lr;
    j["loss"] = loss;
    j["ce_loss"] = ce_loss;
    j["halt_loss"] = halt_loss;
    j["train_exact"] = train_exact;
    j["train_token"] = train_token;
    j["grad_norm"] = grad_norm;
    j["sup_steps"] = sup_steps;
    j["cum_block_apps"] = cum_block_apps;
    j["steps_per_sec"] = steps_per_sec;
    if (eval_exact) j["eval_exact"] = *eval_exact;
    if (eval_token) j["eval_token"] = *eval_token;
    return j.dump();
}

MetricsRecord MetricsRecord::from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed metrics line: ") + e.what());
    }
    MetricsRecord r;
    try {
        r.epoch = j.at("epoch").get<long>();
        r.rho = j.at("rho").get<double>();
        r.n = j.at("n").get<int>();
        r.T = j.at("T").get<int>();
        r.lr = j.at("lr").get<double>();
        r.loss = j.at("loss").get<double>();
        r.ce_loss = j.at("ce_loss").get<double>();
        r.halt_loss = j.at("halt_loss").get<double>();
        r.train_exact = j.at("train_exact").get<double>();
        r.train_token = j.at("train_token").get<double>();
        r.grad_norm = j.at("grad_norm").get<double>();
        r.sup_steps = j.at("sup_steps").get<double>();
        r.cum_block_apps = j.at("cum_block_apps").get<long>();
        r.steps_per_sec = j.at("steps_per_sec").get<double>();
        if (j.contains("eval_exact")) r.eval_exact = j["eval_exact"].get<double>();
        if (j.contains("eval_token")) r.eval_token = j["eval_token"].get<double>();
    } catch (const json::exception& e) {
        throw IoError(std::string("metrics line missing fields: ") + e.what());
    }
    return r;
}

bool metrics_equal_ignoring_timing(const MetricsRecord& a, const MetricsRecord& b,
                                   double tol) {
    auto close = [tol](double x, double y) {
        return tol == 0.0 ? x == y : std::abs(x - y) <= tol;
    };
    auto opt_close = [&](const std::optional<double>& x, const std::optional<double>& y) {
        if (x.has_value() != y.has_value()) return false;
        return !x || close(*x, *y);
    };
    return a.epoch == b.epoch && close(a.rho, b.rho) && a.n == b.n && a.T == b.T &&
           close(a.lr, b.lr) && close(a.loss, b.loss) && close(a.ce_loss, b.ce_loss) &&
           close(a.halt_loss, b.halt_loss) && close(a.train_exact, b.train_exact) &&
           close(a.train_token, b.train_token) && close(a.grad_norm, b.grad_norm) &&
           close(a.sup_steps, b.sup_steps) && a.cum_block_apps == b.cum_block_apps &&
           opt_close(a.eval_exact, b.eval_exact) && opt_close(a.eval_token, b.eval_token);
}

namespace {

ModelDims dims_from_config(const TrainConfig& cfg) {
    ModelDims d;
    d.seq_len = cfg.grid * cfg.grid;
    d.vocab = cfg.grid + 1;
    d.d_model = cfg.d_model;
    d.heads = cfg.heads;
    d.d_ffn = cfg.d_ffn;
    return d;
}

std::string rng_to_string(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& s) {
    std::istringstream is(s);
    is >> rng;
    if (!is) throw IoError("checkpoint RNG state is malformed");
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, std::vector<PuzzleInstance> train,
                 std::vector<PuzzleInstance> test)
    : cfg_(cfg),
      schedule_(resolve_schedule(cfg.schedule)),
      weights_(compute_weights(cfg.lambda, cfg.n_sup)),
      model_(dims_from_config(cfg), cfg.seed),
      rng_(mix_seed(cfg.seed, 0x7261696e)),
      train_(std::move(train)),
      test_(std::move(test)) {
    validate_config_or_throw(cfg_);
    if (train_.empty()) throw ValidationError("trainer: training set is empty");
    for (const auto* set : {&train_, &test_})
        for (const auto& p : *set)
            if (p.grid != cfg_.grid)
                throw ValidationError("trainer: dataset grid size does not match config");
}

void Trainer::restore(const CheckpointRecord& rec) {
    const ModelDims expect = dims_from_config(cfg_);
    if (rec.dims.seq_len != expect.seq_len || rec.dims.vocab != expect.vocab ||
        rec.dims.d_model != expect.d_model || rec.dims.n_layers != expect.n_layers ||
        rec.dims.heads != expect.heads || rec.dims.d_ffn != expect.d_ffn)
        throw ValidationError("resume: checkpoint dims do not match config");
    model_ = Model(rec.dims, rec.params);
    opt_ = rec.opt;
    rng_from_string(rng_, rec.rng_state);
    next_epoch_ = rec.epoch + 1;
    cum_block_apps_ = rec.cum_block_apps;
}

SupervisionOpts Trainer::supervision_opts(const DepthConfig& depth) const {
    SupervisionOpts o;
    o.depth = depth;
    o.weights = weights_;
    o.beta = cfg_.beta;
    o.bce_inside_normalizer = cfg_.bce_inside_normalizer;
    o.rule = parse_halt_rule(cfg_.train_halt_rule);
    o.early_halt = cfg_.early_halt;
    return o;
}

MetricsRecord Trainer::run_epoch(long epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double rho = static_cast<double>(epoch) / static_cast<double>(cfg_.epochs);
    const DepthConfig depth = lookup(schedule_, std::min(rho, 1.0));
    const SupervisionOpts opts = supervision_opts(depth);
    const int B = cfg_.batch_size;

    std::vector<int> batch(B);
    for (int b = 0; b < B; ++b)
        batch[b] = rand_index(rng_, static_cast<int>(train_.size()));

    struct SampleOut {
        GradMap grads;
        double loss = 0, wce = 0, bce = 0;
        long apps = 0;
        int steps = 0, correct_tokens = 0;
        bool exact = false;
    };
    std::vector<SampleOut> outs(B);
    const real inv_b = real(1) / static_cast<real>(B);
    parallel_for(B, cfg_.threads, [&](long b) {
        Tape tape;
        TapeGuard guard(tape);
        SupervisionRun run = run_supervision(model_, train_[batch[b]], opts);
        Tensor loss = scale(run.loss, inv_b);
        if (!loss.all_finite())
            throw NumericError("train: loss is not finite at epoch " +
                               std::to_string(epoch));
        auto& o = outs[b];
        o.grads = tape.backward(loss);
        o.loss = static_cast<double>(loss.item());
        o.wce = run.weighted_ce_total;
        o.bce = run.bce_total;
        o.apps = run.block_apps;
        o.steps = run.steps_executed;
        o.exact = run.exact_match;
        o.correct_tokens = run.correct_tokens;
    });

    // Per-sample gradients are already scaled by 1/B; summing in parameter
    // order gives the batch-mean gradient deterministically.
    GradMap total;
    for (const auto& [name, param] : model_.params()) {
        Tensor acc;
        for (const auto& o : outs) {
            const Tensor* g = o.grads.find(param);
            if (!g) continue;
            if (!acc.defined()) {
                acc = detach(*g);
            } else {
                auto av = acc.values();
                auto gv = g->values();
                for (long i = 0; i < acc.size(); ++i) av[i] += gv[i];
            }
        }
        if (acc.defined()) total.add(param.id(), std::move(acc));
    }

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.rho = rho;
    rec.n = depth.n;
    rec.T = depth.T;
    rec.lr = lr_at(epoch, cfg_.epochs, cfg_.warmup_steps, cfg_.lr);
    rec.grad_norm = clip_gradients(total, cfg_.clip_norm);
    adamw_step(model_.params(), total, opt_, rec.lr, cfg_.weight_decay);

    const double L = static_cast<double>(model_.dims().seq_len);
    for (const auto& o : outs) {
        rec.loss += o.loss;
        rec.ce_loss += o.wce / B;
        rec.halt_loss += o.bce / B;
        rec.train_exact += o.exact ? 1.0 / B : 0.0;
        rec.train_token += o.correct_tokens / (L * B);
        rec.sup_steps += static_cast<double>(o.steps) / B;
        cum_block_apps_ += o.apps;
    }
    rec.cum_block_apps = cum_block_apps_;
    const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);
    rec.steps_per_sec = dt.count() > 0 ? 1.0 / dt.count() : 0.0;
    return rec;
}

CheckpointRecord Trainer::make_checkpoint(long epoch) const {
    return snapshot(model_, opt_, epoch, cum_block_apps_, rng_to_string(rng_),
                    serialize_config(cfg_));
}

void Trainer::run(const Sinks& sinks) {
    const long progress_every = std::max<long>(1, cfg_.epochs / 20);
    for (long e = next_epoch_; e <= cfg_.epochs; ++e) {
        MetricsRecord rec = run_epoch(e);
        const bool last = e == cfg_.epochs;
        if (!test_.empty() && (last || (cfg_.eval_every > 0 && e % cfg_.eval_every == 0))) {
            const std::size_t cap = cfg_.eval_subset > 0
                                        ? std::min<std::size_t>(cfg_.eval_subset, test_.size())
                                        : test_.size();
            EvalReport er = evaluate(
                model_, std::span<const PuzzleInstance>(test_.data(), cap),
                eval_options_from(cfg_));
            rec.eval_token = er.token_acc;
            rec.eval_exact = er.exact_acc;
        }
        if (sinks.on_metrics) sinks.on_metrics(rec);
        if (sinks.on_checkpoint &&
            (last || (cfg_.checkpoint_every > 0 && e % cfg_.checkpoint_every == 0)))
            sinks.on_checkpoint(e, make_checkpoint(e));
        if (sinks.on_progress && (last || e % progress_every == 0)) sinks.on_progress(e);
        next_epoch_ = e + 1;
    }
}

std::vector<double> measure_step_gradient_norms(const Model& model,
                                                std::span<const PuzzleInstance> batch,
                                                const DepthConfig& depth, int n_sup) {
    if (batch.empty())
        throw ValidationError("measure_step_gradient_norms: empty batch");
    if (n_sup < 1)
        throw ValidationError("measure_step_gradient_norms: n_sup must be positive");

    std::vector<double> norms(n_sup, 0.0);
    const auto& dims = model.dims();
    for (int t = 1; t <= n_sup; ++t) {
        // Cross-entropy of step t alone, re-run per step so each tape holds
        // exactly the recursion prefix that feeds this step's loss.
        std::vector<GradMap> per_sample(batch.size());
        for (std::size_t s = 0; s < batch.size(); ++s) {
            Tape tape;
            TapeGuard guard(tape);
            const auto& p = batch[s];
            Tensor x_emb = model.embed_input(p.input);
            RecursionState state{x_emb, Tensor::zeros({dims.seq_len, dims.d_model})};
            Tensor ce;
            for (int step = 1; step <= t; ++step) {
                state = model.deep_recursion(state, x_emb, depth);
                if (step == t) {
                    ce = cross_entropy_sum(model.output_logits(state.y), p.solution);
                } else {
                    state = {detach(state.y), detach(state.z)};
                }
            }
            per_sample[s] = tape.backward(scale(ce, real(1.0 / batch.size())));
        }
        // Sum over samples first, then take the norm: this is the batch
        // gradient the optimizer would see.
        double sq = 0;
        for (const auto& [name, param] : model.params()) {
            const long nvals = param.size();
            std::vector<double> acc(nvals, 0.0);
            bool any = false;
            for (std::size_t s = 0; s < batch.size(); ++s) {
                const Tensor* g = per_sample[s].find(param);
                if (!g) continue;
                any = true;
                for (long i = 0; i < nvals; ++i) acc[i] += static_cast<double>(g->values()[i]);
            }
            if (any)
                for (double v : acc) sq += v * v;
        }
        norms[t - 1] = std::sqrt(sq);
    }
    return norms;
}

}  // namespace cgar
