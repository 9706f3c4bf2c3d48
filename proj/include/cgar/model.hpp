#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cgar/depth.hpp"
#include "cgar/ops.hpp"

namespace cgar {

struct ModelDims {
    int seq_len = 16;   // L
    int vocab = 5;      // V
    int d_model = 64;   // D
    int n_layers = 2;
    int heads = 4;
    int d_ffn = 256;
};

void validate_dims(const ModelDims& d);

// Ordered, named parameter registry. Order is fixed at construction and
// drives gradient accumulation, clipping and optimizer traversal, so runs
// are reproducible.
class ParamList {
  public:
    Tensor& add(std::string name, Tensor t);
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }
    std::size_t size() const { return items_.size(); }
    long scalar_count() const;

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Carried recursion state: y is the answer embedding read by the output
// heads, z is the latent scratch state.
struct RecursionState {
    Tensor y;
    Tensor z;
};

struct RecursionStats {
    long block_applications = 0;  // total block calls, T * (n + 1)
    long grad_applications = 0;   // block calls recorded on the tape
};

// One small transformer reused everywhere: two pre-norm layers of
// multi-head self-attention (full, unmasked) and a GELU feed-forward, with
// a final layer norm, behind width-specific input projections so the same
// trunk consumes D, 2D and 3D wide concatenations.
class Model {
  public:
    Model(const ModelDims& dims, std::uint64_t seed);
    // Rebuild from checkpointed tensors; names and shapes must match the
    // freshly-initialized layout exactly.
    Model(const ModelDims& dims,
          std::span<const std::pair<std::string, Tensor>> params);

    const ModelDims& dims() const { return dims_; }
    ParamList& params() { return params_; }
    const ParamList& params() const { return params_; }

    // Token + learned absolute position embeddings. Tokens must lie in
    // [0, V) and fill the full sequence.
    Tensor embed_input(std::span<const int> tokens) const;

    // z <- block(x ++ y ++ z)
    Tensor latent_update(const Tensor& x_emb, const Tensor& y, const Tensor& z) const;
    // y <- block(y ++ z)
    Tensor answer_update(const Tensor& y, const Tensor& z) const;

    // Runs T answer cycles of n latent updates each. The first T - 1
    // cycles execute under a no-grad scope; only the last is recorded.
    // Throws NumericError if the state stops being finite.
    //
    // trace_out, when set, receives the state entering the recorded cycle.
    // replay_in substitutes a previously traced state for the no-grad
    // cycles, so a finite-difference probe sees exactly the function the
    // tape differentiates (the no-grad prefix is a constant to backward).
    RecursionState deep_recursion(const RecursionState& state, const Tensor& x_emb,
                                  const DepthConfig& depth,
                                  RecursionStats* stats = nullptr,
                                  RecursionState* trace_out = nullptr,
                                  const RecursionState* replay_in = nullptr) const;

    Tensor output_logits(const Tensor& y) const;   // (L x V)
    // Per-position halt probabilities, strictly inside (0, 1). Zero-
    // initialized head, so an untrained model answers exactly 0.5.
    Tensor halt_probability(const Tensor& y) const;

  private:
    Tensor apply_block(const Tensor& input, const Tensor& proj_w,
                       const Tensor& proj_b) const;
    Tensor attention(const Tensor& x, int layer) const;
    Tensor feed_forward(const Tensor& x, int layer) const;
    const Tensor& p(std::string_view name) const { return params_.at(name); }

    ModelDims dims_;
    ParamList params_;
};

}  // namespace cgar
