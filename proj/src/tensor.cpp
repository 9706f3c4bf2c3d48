#include "cgar/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace cgar {

namespace {

std::atomic<std::uint64_t> g_next_storage_id{1};
std::atomic<std::uint64_t> g_next_tape_gen{1};

thread_local Tape* t_active_tape = nullptr;
thread_local int t_no_grad_depth = 0;

}  // namespace

long shape_numel(const Shape& s) {
    long n = 1;
    for (int d : s) {
        if (d < 0) throw ValidationError("tensor shape has a negative dimension");
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

namespace detail {

Storage::Storage(Shape s, std::vector<real> v)
    : shape(std::move(s)),
      values(std::move(v)),
      id(g_next_storage_id.fetch_add(1, std::memory_order_relaxed)) {}

}  // namespace detail

Tensor Tensor::zeros(Shape shape) {
    long n = shape_numel(shape);
    return Tensor(std::make_shared<detail::Storage>(std::move(shape),
                                                    std::vector<real>(n, real(0))));
}

Tensor Tensor::full(Shape shape, real value) {
    long n = shape_numel(shape);
    return Tensor(std::make_shared<detail::Storage>(std::move(shape),
                                                    std::vector<real>(n, value)));
}

Tensor Tensor::scalar(real value) { return full({}, value); }

Tensor Tensor::from(Shape shape, std::vector<real> values) {
    if (shape_numel(shape) != static_cast<long>(values.size()))
        throw ValidationError("tensor: value count " + std::to_string(values.size()) +
                              " does not match shape " + shape_str(shape));
    return Tensor(std::make_shared<detail::Storage>(std::move(shape), std::move(values)));
}

Tensor Tensor::param(Shape shape, std::vector<real> values) {
    Tensor t = from(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    return t;
}

int Tensor::rows() const {
    if (rank() != 2) throw ValidationError("rows(): tensor is not rank 2");
    return st_->shape[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw ValidationError("cols(): tensor is not rank 2");
    return st_->shape[1];
}

real Tensor::item() const {
    if (size() != 1) throw ValidationError("item(): tensor is not a scalar");
    return st_->values[0];
}

Tensor Tensor::clone() const {
    Tensor t = from(st_->shape, st_->values);
    t.set_requires_grad(st_->requires_grad);
    return t;
}

bool Tensor::all_finite() const {
    for (real v : st_->values)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

void Tensor::mark_produced(const Tape& tape) { st_->producer_gen = tape.gen(); }

Tensor detach(const Tensor& t) {
    return Tensor::from(t.shape(), std::vector<real>(t.values().begin(), t.values().end()));
}

void GradMap::add(std::uint64_t id, Tensor grad) {
    index_.emplace(id, entries_.size());
    entries_.emplace_back(id, std::move(grad));
}

const Tensor* GradMap::find(const Tensor& param) const { return find_id(param.id()); }

const Tensor* GradMap::find_id(std::uint64_t id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
}

Tape::Tape() : gen_(g_next_tape_gen.fetch_add(1, std::memory_order_relaxed)) {}

Tape* Tape::active() { return t_active_tape; }

bool Tape::recording() { return t_active_tape != nullptr && t_no_grad_depth == 0; }

void Tape::record(std::function<void(Tape&)> fn) { entries_.push_back(std::move(fn)); }

std::vector<real>* Tape::grad_of(const detail::Storage* s) {
    auto it = grads_.find(s);
    return it == grads_.end() ? nullptr : &it->second;
}

std::vector<real>& Tape::grad_acc(const std::shared_ptr<detail::Storage>& s) {
    auto it = grads_.find(s.get());
    if (it == grads_.end()) {
        it = grads_.emplace(s.get(), std::vector<real>(s->values.size(), real(0))).first;
        if (s->requires_grad) leaves_.push_back(s);
    }
    return it->second;
}

GradMap Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ValidationError("backward: loss must be a defined scalar");
    if (loss.producer_gen() != gen_)
        throw ValidationError("backward: loss was not produced on this tape");
    grads_.clear();
    leaves_.clear();
    grad_acc(loss.storage())[0] = real(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)(*this);
    GradMap out;
    for (const auto& s : leaves_) {
        auto g = grads_.find(s.get());
        out.add(s->id, Tensor::from(s->shape, std::move(g->second)));
    }
    grads_.clear();
    leaves_.clear();
    return out;
}

TapeGuard::TapeGuard(Tape& tape) : prev_(t_active_tape) { t_active_tape = &tape; }
TapeGuard::~TapeGuard() { t_active_tape = prev_; }

NoGradGuard::NoGradGuard() { ++t_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --t_no_grad_depth; }

bool tracked(const Tensor& t) {
    if (!Tape::recording()) return false;
    return t.requires_grad() || t.producer_gen() == t_active_tape->gen();
}

GradCheckReport finite_diff_check(const std::function<Tensor()>& f,
                                  std::span<const std::pair<std::string, Tensor>> params,
                                  double eps, bool corrupt_one_entry) {
    if (eps <= 0) throw ValidationError("finite_diff_check: eps must be positive");

    // Analytic gradients from one recorded pass.
    std::vector<std::vector<double>> analytic(params.size());
    {
        Tape tape;
        TapeGuard guard(tape);
        Tensor loss = f();
        GradMap grads = tape.backward(loss);
        for (std::size_t p = 0; p < params.size(); ++p) {
            const Tensor& t = params[p].second;
            analytic[p].assign(t.size(), 0.0);
            if (const Tensor* g = grads.find(t)) {
                for (long i = 0; i < t.size(); ++i)
                    analytic[p][i] = static_cast<double>(g->values()[i]);
            }
        }
    }
    if (corrupt_one_entry && !params.empty() && !analytic[0].empty()) analytic[0][0] += 1.0;

    GradCheckReport report;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor t = params[p].second;
        auto v = t.values();
        for (long i = 0; i < t.size(); ++i) {
            const real orig = v[i];
            v[i] = orig + static_cast<real>(eps);
            const double up = static_cast<double>(f().item());
            v[i] = orig - static_cast<real>(eps);
            const double down = static_cast<double>(f().item());
            v[i] = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double rel =
                std::abs(analytic[p][i] - numeric) / (std::abs(numeric) + eps);
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params[p].first;
                report.worst_index = i;
                report.analytic_at_worst = analytic[p][i];
                report.numeric_at_worst = numeric;
            }
        }
    }
    return report;
}

}  // namespace cgar
