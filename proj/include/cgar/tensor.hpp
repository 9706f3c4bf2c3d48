#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cgar/common.hpp"

namespace cgar {

using Shape = std::vector<int>;

long shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

namespace detail {

struct Storage {
    Shape shape;
    std::vector<real> values;
    bool requires_grad = false;
    // Generation id of the tape whose op produced this tensor, 0 if none.
    // Compared by id rather than pointer so a dead tape's address being
    // reused can never make a stale tensor look live.
    std::uint64_t producer_gen = 0;
    std::uint64_t id;

    Storage(Shape s, std::vector<real> v);
};

}  // namespace detail

// Dense row-major tensor. Copies are shallow (shared storage); use clone()
// for an independent copy. Rank 0 with one element represents a scalar.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, real value);
    static Tensor scalar(real value);
    static Tensor from(Shape shape, std::vector<real> values);
    // Leaf with requires_grad set; gradients accumulate for it in backward().
    static Tensor param(Shape shape, std::vector<real> values);

    bool defined() const { return st_ != nullptr; }
    const Shape& shape() const { return st_->shape; }
    int rank() const { return static_cast<int>(st_->shape.size()); }
    long size() const { return static_cast<long>(st_->values.size()); }
    int rows() const;
    int cols() const;

    std::span<real> values() { return st_->values; }
    std::span<const real> values() const { return st_->values; }
    real* data() { return st_->values.data(); }
    const real* data() const { return st_->values.data(); }
    real item() const;

    bool requires_grad() const { return st_->requires_grad; }
    void set_requires_grad(bool b) { st_->requires_grad = b; }
    std::uint64_t id() const { return st_->id; }
    std::uint64_t producer_gen() const { return st_->producer_gen; }

    Tensor clone() const;
    bool all_finite() const;

    const std::shared_ptr<detail::Storage>& storage() const { return st_; }
    void mark_produced(const Tape& tape);

  private:
    explicit Tensor(std::shared_ptr<detail::Storage> st) : st_(std::move(st)) {}
    std::shared_ptr<detail::Storage> st_;
};

// Value copy with no grad flag and no tape lineage. Ops downstream of a
// detached tensor leave no entries on the tape unless another input is live.
Tensor detach(const Tensor& t);

// Gradients returned by Tape::backward, keyed by leaf tensor id. Iteration
// follows first-touch order during the backward sweep, which is
// deterministic for a fixed tape.
class GradMap {
  public:
    void add(std::uint64_t id, Tensor grad);
    const Tensor* find(const Tensor& param) const;
    const Tensor* find_id(std::uint64_t id) const;
    std::size_t size() const { return entries_.size(); }
    std::vector<std::pair<std::uint64_t, Tensor>>& entries() { return entries_; }
    const std::vector<std::pair<std::uint64_t, Tensor>>& entries() const { return entries_; }

  private:
    std::vector<std::pair<std::uint64_t, Tensor>> entries_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

// Reverse-mode tape (Wengert list). Ops record backward closures while a
// tape is installed for the current thread and recording is not suspended.
// Each thread installs its own tape, so per-sample tapes can run
// concurrently without sharing mutable state.
class Tape {
  public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Reverse sweep from a scalar loss produced on this tape. Leaves with
    // requires_grad receive accumulated gradients; everything else
    // (detached, unreachable, constant) gets no entry. Repeatable: each
    // call starts from fresh gradient buffers.
    GradMap backward(const Tensor& loss);

    std::size_t num_entries() const { return entries_.size(); }
    std::uint64_t gen() const { return gen_; }

    // Tape installed for this thread, or nullptr.
    static Tape* active();
    // True when ops should record: a tape is installed and no NoGradGuard
    // is open.
    static bool recording();

    // Called by ops.
    void record(std::function<void(Tape&)> fn);
    // Gradient buffer for a storage if one was materialized, else nullptr.
    std::vector<real>* grad_of(const detail::Storage* s);
    // Zero-initialized gradient buffer, created on first touch. Registers
    // requires_grad storages in leaf order for the final GradMap.
    std::vector<real>& grad_acc(const std::shared_ptr<detail::Storage>& s);

  private:
    std::uint64_t gen_;
    std::vector<std::function<void(Tape&)>> entries_;
    std::unordered_map<const detail::Storage*, std::vector<real>> grads_;
    std::vector<std::shared_ptr<detail::Storage>> leaves_;
};

// Installs a tape as the current thread's recording target for a scope.
class TapeGuard {
  public:
    explicit TapeGuard(Tape& tape);
    ~TapeGuard();
    TapeGuard(const TapeGuard&) = delete;
    TapeGuard& operator=(const TapeGuard&) = delete;

  private:
    Tape* prev_;
};

// Suspends recording for a scope. Nests: recording resumes when the
// outermost guard closes.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// True if the tensor participates in gradient flow on the active tape.
bool tracked(const Tensor& t);

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    long worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Compares analytic gradients of f's scalar output against central finite
// differences over every element of every listed parameter. f must be a
// deterministic function of the parameter values. The relative error is
// |analytic - numeric| / (|numeric| + eps). corrupt_one_entry is a test
// hook that perturbs one analytic value so callers can verify the check
// itself can fail.
GradCheckReport finite_diff_check(
    const std::function<Tensor()>& f,
    std::span<const std::pair<std::string, Tensor>> params, double eps = 1e-5,
    bool corrupt_one_entry = false);

}  // namespace cgar
