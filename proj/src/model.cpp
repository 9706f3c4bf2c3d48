#include "cgar/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace cgar {

void validate_dims(const ModelDims& d) {
    std::vector<std::string> errs;
    if (d.seq_len < 1) errs.push_back("seq_len must be positive");
    if (d.vocab < 2) errs.push_back("vocab must be at least 2");
    if (d.d_model < 1) errs.push_back("d_model must be positive");
    if (d.n_layers < 1) errs.push_back("n_layers must be positive");
    if (d.heads < 1 || (d.d_model >= 1 && d.d_model % d.heads != 0))
        errs.push_back("heads must divide d_model");
    if (d.d_ffn < 1) errs.push_back("d_ffn must be positive");
    if (!errs.empty()) {
        std::string msg = "model dims:";
        for (const auto& e : errs) msg += " " + e + ";";
        msg.pop_back();
        throw ValidationError(msg);
    }
}

Tensor& ParamList::add(std::string name, Tensor t) {
    if (index_.count(name))
        throw ValidationError("parameter '" + name + "' registered twice");
    index_.emplace(name, items_.size());
    items_.emplace_back(std::move(name), std::move(t));
    return items_.back().second;
}

Tensor& ParamList::at(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
        throw ValidationError("unknown parameter '" + std::string(name) + "'");
    return items_[it->second].second;
}

const Tensor& ParamList::at(std::string_view name) const {
    return const_cast<ParamList*>(this)->at(name);
}

bool ParamList::contains(std::string_view name) const {
    return index_.count(std::string(name)) > 0;
}

long ParamList::scalar_count() const {
    long n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
}

namespace {

Tensor init_normal(Shape shape, double sigma, std::mt19937_64& rng) {
    std::vector<real> v(shape_numel(shape));
    for (real& x : v) x = static_cast<real>(rand_trunc_normal(rng, sigma));
    return Tensor::param(std::move(shape), std::move(v));
}

Tensor init_const(Shape shape, real value) {
    Tensor t = Tensor::full(std::move(shape), value);
    t.set_requires_grad(true);
    return t;
}

enum class Init { normal, zero, one };

// Registration order defines the parameter traversal order everywhere.
// Weights draw from the initializer; biases, norm offsets and the whole
// halt head start at zero (an untrained model must not commit to halting);
// norm gains start at one.
void build_params(ParamList& out, const ModelDims& d,
                  const std::function<Tensor(Shape, Init)>& make) {
    auto w = [&](std::string name, Shape shape) {
        out.add(std::move(name), make(std::move(shape), Init::normal));
    };
    auto zero = [&](std::string name, Shape shape) {
        out.add(std::move(name), make(std::move(shape), Init::zero));
    };
    auto one = [&](std::string name, Shape shape) {
        out.add(std::move(name), make(std::move(shape), Init::one));
    };

    w("tok_emb", {d.vocab, d.d_model});
    w("pos_emb", {d.seq_len, d.d_model});
    for (int k = 1; k <= 3; ++k) {
        std::string base = "proj_in" + std::to_string(k);
        w(base + ".w", {k * d.d_model, d.d_model});
        zero(base + ".b", {d.d_model});
    }
    for (int l = 0; l < d.n_layers; ++l) {
        std::string base = "block.l" + std::to_string(l) + ".";
        one(base + "ln1.g", {d.d_model});
        zero(base + "ln1.b", {d.d_model});
        w(base + "attn.wq", {d.d_model, d.d_model});
        zero(base + "attn.bq", {d.d_model});
        w(base + "attn.wk", {d.d_model, d.d_model});
        zero(base + "attn.bk", {d.d_model});
        w(base + "attn.wv", {d.d_model, d.d_model});
        zero(base + "attn.bv", {d.d_model});
        w(base + "attn.wo", {d.d_model, d.d_model});
        zero(base + "attn.bo", {d.d_model});
        one(base + "ln2.g", {d.d_model});
        zero(base + "ln2.b", {d.d_model});
        w(base + "ffn.w1", {d.d_model, d.d_ffn});
        zero(base + "ffn.b1", {d.d_ffn});
        w(base + "ffn.w2", {d.d_ffn, d.d_model});
        zero(base + "ffn.b2", {d.d_model});
    }
    one("block.lnf.g", {d.d_model});
    zero("block.lnf.b", {d.d_model});
    w("head.out.w", {d.d_model, d.vocab});
    zero("head.out.b", {d.vocab});
    zero("head.halt.w", {d.d_model, 1});
    zero("head.halt.b", {1});
}

}  // namespace

Model::Model(const ModelDims& dims, std::uint64_t seed) : dims_(dims) {
    validate_dims(dims_);
    std::mt19937_64 rng(seed);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(dims_.d_model));
    build_params(params_, dims_, [&](Shape shape, Init kind) {
        switch (kind) {
            case Init::normal: return init_normal(std::move(shape), sigma, rng);
            case Init::one: return init_const(std::move(shape), real(1));
            default: return init_const(std::move(shape), real(0));
        }
    });
}

Model::Model(const ModelDims& dims,
             std::span<const std::pair<std::string, Tensor>> params)
    : dims_(dims) {
    validate_dims(dims_);
    build_params(params_, dims_, [&](Shape shape, Init) {
        return init_const(std::move(shape), real(0));
    });
    std::size_t used = 0;
    for (const auto& [name, t] : params) {
        if (!params_.contains(name))
            throw IoError("checkpoint parameter '" + name + "' does not exist in model");
        Tensor& dst = params_.at(name);
        if (dst.shape() != t.shape())
            throw IoError("checkpoint parameter '" + name + "' has shape " +
                          shape_str(t.shape()) + ", model expects " +
                          shape_str(dst.shape()));
        std::copy(t.values().begin(), t.values().end(), dst.values().begin());
        ++used;
    }
    if (used != params_.size())
        throw IoError("checkpoint provides " + std::to_string(used) + " of " +
                      std::to_string(params_.size()) + " model parameters");
}

Tensor Model::embed_input(std::span<const int> tokens) const {
    if (static_cast<int>(tokens.size()) != dims_.seq_len)
        throw ValidationError("embed_input: expected " + std::to_string(dims_.seq_len) +
                              " tokens, got " + std::to_string(tokens.size()));
    return add(embed_rows(p("tok_emb"), tokens), p("pos_emb"));
}

Tensor Model::attention(const Tensor& x, int layer) const {
    const std::string base = "block.l" + std::to_string(layer) + ".attn.";
    Tensor q = add_rowvec(matmul(x, p(base + "wq")), p(base + "bq"));
    Tensor k = add_rowvec(matmul(x, p(base + "wk")), p(base + "bk"));
    Tensor v = add_rowvec(matmul(x, p(base + "wv")), p(base + "bv"));
    const int hd = dims_.d_model / dims_.heads;
    const real inv_sqrt_hd = static_cast<real>(1.0 / std::sqrt(static_cast<double>(hd)));
    std::vector<Tensor> heads;
    heads.reserve(dims_.heads);
    for (int h = 0; h < dims_.heads; ++h) {
        Tensor qh = slice_cols(q, h * hd, hd);
        Tensor kh = slice_cols(k, h * hd, hd);
        Tensor vh = slice_cols(v, h * hd, hd);
        Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt_hd);
        heads.push_back(matmul(softmax_rows(scores), vh));
    }
    Tensor cat = concat_cols(heads);
    return add_rowvec(matmul(cat, p(base + "wo")), p(base + "bo"));
}

Tensor Model::feed_forward(const Tensor& x, int layer) const {
    const std::string base = "block.l" + std::to_string(layer) + ".ffn.";
    Tensor h = gelu(add_rowvec(matmul(x, p(base + "w1")), p(base + "b1")));
    return add_rowvec(matmul(h, p(base + "w2")), p(base + "b2"));
}

Tensor Model::apply_block(const Tensor& input, const Tensor& proj_w,
                          const Tensor& proj_b) const {
    Tensor h = add_rowvec(matmul(input, proj_w), proj_b);
    for (int l = 0; l < dims_.n_layers; ++l) {
        const std::string base = "block.l" + std::to_string(l) + ".";
        h = add(h, attention(layer_norm(h, p(base + "ln1.g"), p(base + "ln1.b")), l));
        h = add(h, feed_forward(layer_norm(h, p(base + "ln2.g"), p(base + "ln2.b")), l));
    }
    return layer_norm(h, p("block.lnf.g"), p("block.lnf.b"));
}

Tensor Model::latent_update(const Tensor& x_emb, const Tensor& y, const Tensor& z) const {
    return apply_block(concat_cols(x_emb, y, z), p("proj_in3.w"), p("proj_in3.b"));
}

Tensor Model::answer_update(const Tensor& y, const Tensor& z) const {
    return apply_block(concat_cols(y, z), p("proj_in2.w"), p("proj_in2.b"));
}

RecursionState Model::deep_recursion(const RecursionState& state, const Tensor& x_emb,
                                     const DepthConfig& depth,
                                     RecursionStats* stats,
                                     RecursionState* trace_out,
                                     const RecursionState* replay_in) const {
    validate_depth(depth);
    Tensor y = state.y;
    Tensor z = state.z;
    auto one_cycle = [&] {
        for (int k = 0; k < depth.n; ++k) z = latent_update(x_emb, y, z);
        y = answer_update(y, z);
        if (!y.all_finite() || !z.all_finite())
            throw NumericError("deep_recursion: state diverged to NaN/inf");
    };
    if (replay_in) {
        y = replay_in->y;
        z = replay_in->z;
    } else {
        NoGradGuard no_grad;
        for (int j = 0; j < depth.T - 1; ++j) one_cycle();
    }
    if (trace_out) *trace_out = {y, z};
    const bool recorded = Tape::recording();
    one_cycle();
    if (stats) {
        stats->block_applications += static_cast<long>(depth.T) * (depth.n + 1);
        if (recorded) stats->grad_applications += depth.n + 1;
    }
    return {y, z};
}

Tensor Model::output_logits(const Tensor& y) const {
    return add_rowvec(matmul(y, p("head.out.w")), p("head.out.b"));
}

Tensor Model::halt_probability(const Tensor& y) const {
    Tensor logit = add_rowvec(matmul(y, p("head.halt.w")), p("head.halt.b"));
    return reshape(sigmoid(logit), {dims_.seq_len});
}

}  // namespace cgar
