#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hsrmamba/errors.hpp"
#include "hsrmamba/tensor.hpp"

namespace hsr {

namespace debug {
inline std::atomic<bool> check_finite_flag{false};

/// Opt-in NaN/Inf detection on every op output. Off by default.
inline void set_check_finite(bool on) { check_finite_flag.store(on, std::memory_order_relaxed); }
inline bool check_finite() { return check_finite_flag.load(std::memory_order_relaxed); }
}  // namespace debug

template <class T>
class Tape;

/// A tensor value, optionally attached to a tape. Unattached vars are constants:
/// ops over constants run eagerly and record nothing.
template <class T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value) : value_(std::make_shared<const Tensor<T>>(std::move(value))) {}

    const Tensor<T>& value() const { return *value_; }
    const Shape& shape() const { return value_->shape(); }
    std::size_t dim(std::size_t i) const { return value_->dim(i); }
    std::size_t size() const { return value_->size(); }
    bool defined() const noexcept { return static_cast<bool>(value_); }

    bool attached() const noexcept { return tape_ != nullptr; }
    Tape<T>* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }

    std::shared_ptr<const Tensor<T>> shared() const { return value_; }

private:
    friend class Tape<T>;
    Var(std::shared_ptr<const Tensor<T>> v, Tape<T>* tape, std::size_t id)
        : value_(std::move(v)), tape_(tape), id_(id) {}

    std::shared_ptr<const Tensor<T>> value_;
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Accumulates `grad_out` into the gradients of a node's inputs. `grad_in[k]`
/// is null when input k is a constant. Implementations must add, not assign:
/// two inputs may alias the same accumulator.
template <class T>
using BackwardFn = std::function<void(const Tensor<T>& grad_out, std::span<Tensor<T>* const> grad_in)>;

/// Gradients produced by one backward pass, indexed by node id.
template <class T>
class Gradients {
public:
    explicit Gradients(std::vector<std::optional<Tensor<T>>> g) : grads_(std::move(g)) {}

    bool has(const Var<T>& v) const {
        return v.attached() && v.id() < grads_.size() && grads_[v.id()].has_value();
    }

    /// Gradient of the loss with respect to `v`; zeros when `v` is unreachable.
    Tensor<T> grad(const Var<T>& v) const {
        if (has(v)) return *grads_[v.id()];
        return Tensor<T>(v.shape());
    }

private:
    std::vector<std::optional<Tensor<T>>> grads_;
};

/// Append-only record of ops. Node ids increase in creation order, so every
/// node's inputs precede it and reverse id order is a valid backward schedule.
/// Single writer: one forward/backward pass per tape at a time.
template <class T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> leaf(Tensor<T> value) {
        nodes_.push_back(Node{std::make_shared<const Tensor<T>>(std::move(value)), {}, {}});
        return Var<T>(nodes_.back().value, this, nodes_.size() - 1);
    }

    /// Records an op result. Inputs not attached to this tape are treated as constants.
    Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn<T> fn) {
        Node n{std::make_shared<const Tensor<T>>(std::move(value)), {}, std::move(fn)};
        n.inputs.reserve(inputs.size());
        for (const auto& in : inputs)
            n.inputs.push_back(in.tape() == this ? static_cast<std::ptrdiff_t>(in.id()) : -1);
        nodes_.push_back(std::move(n));
        return Var<T>(nodes_.back().value, this, nodes_.size() - 1);
    }

    std::size_t size() const noexcept { return nodes_.size(); }

    /// Input node ids of node `id`, -1 marking constants.
    const std::vector<std::ptrdiff_t>& inputs_of(std::size_t id) const { return nodes_.at(id).inputs; }

    Gradients<T> backward(const Var<T>& loss) const {
        if (loss.tape() != this) throw ContractError("backward: loss is not attached to this tape");
        if (loss.size() != 1)
            throw ContractError("backward: loss must be scalar, got shape " + to_string(loss.shape()));

        std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
        grads[loss.id()].emplace(loss.shape(), T{1});
        std::vector<Tensor<T>*> slots;
        for (std::size_t id = loss.id() + 1; id-- > 0;) {
            const Node& n = nodes_[id];
            if (!grads[id] || !n.backward) continue;
            slots.assign(n.inputs.size(), nullptr);
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const auto in = n.inputs[k];
                if (in < 0) continue;
                auto& g = grads[static_cast<std::size_t>(in)];
                if (!g) g.emplace(nodes_[static_cast<std::size_t>(in)].value->shape());
                slots[k] = &*g;
            }
            n.backward(*grads[id], std::span<Tensor<T>* const>(slots));
        }
        return Gradients<T>(std::move(grads));
    }

private:
    struct Node {
        std::shared_ptr<const Tensor<T>> value;
        std::vector<std::ptrdiff_t> inputs;
        BackwardFn<T> backward;
    };
    std::vector<Node> nodes_;
};

/// Builds an op result: records it on the inputs' tape when any input is
/// attached, otherwise returns a constant. All attached inputs must share a tape.
template <class T>
Var<T> make_op(Tensor<T> out, std::initializer_list<Var<T>> inputs, BackwardFn<T> fn,
               const char* op_name = "op") {
    if (debug::check_finite() && !out.all_finite())
        throw NumericError(std::string("non-finite value produced by ") + op_name);
    Tape<T>* tape = nullptr;
    for (const auto& in : inputs) {
        if (!in.attached()) continue;
        if (tape && tape != in.tape()) throw ContractError(std::string(op_name) + ": inputs on different tapes");
        tape = in.tape();
    }
    if (!tape) return Var<T>(std::move(out));
    return tape->record(std::move(out), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(fn));
}

/// Same as above for a runtime-sized input list.
template <class T>
Var<T> make_op(Tensor<T> out, const std::vector<Var<T>>& inputs, BackwardFn<T> fn,
               const char* op_name = "op") {
    if (debug::check_finite() && !out.all_finite())
        throw NumericError(std::string("non-finite value produced by ") + op_name);
    Tape<T>* tape = nullptr;
    for (const auto& in : inputs) {
        if (!in.attached()) continue;
        if (tape && tape != in.tape()) throw ContractError(std::string(op_name) + ": inputs on different tapes");
        tape = in.tape();
    }
    if (!tape) return Var<T>(std::move(out));
    return tape->record(std::move(out), std::span<const Var<T>>(inputs), std::move(fn));
}

/// Denominator floor of the gradient-check error: entries below it are compared
/// absolutely, since central differences carry ~1e-10 absolute roundoff.
inline constexpr double kGradCheckFloor = 1e-6;

/// Maximum over elements of |analytic - numeric| / max(|analytic|, |numeric|, floor),
/// where numeric is the central difference with step `eps`. `f` must return a
/// scalar. Non-differentiable points (relu or abs at 0) are expected to fail.
template <class F>
double grad_check(F&& f, const Tensor<double>& x, double eps = 1e-6) {
    Tape<double> tape;
    const auto xv = tape.leaf(x);
    const auto loss = f(xv);
    const auto analytic = tape.backward(loss).grad(xv);

    double worst = 0.0;
    Tensor<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double fp = f(Var<double>(probe)).value().item();
        probe[i] = orig - eps;
        const double fm = f(Var<double>(probe)).value().item();
        probe[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace hsr
