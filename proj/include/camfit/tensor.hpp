#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "camfit/error.hpp"

namespace camfit {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    bool leaf = true;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

// Dense row-major f64 tensor with reverse-mode autodiff.
//
// A Tensor is a cheap shared handle. Values produced by ops are never mutated
// afterwards; only leaves (parameters, inputs) expose mutable storage, and
// only between steps.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    // Mutable storage, leaves only.
    std::span<double> mutable_data();
    double item() const;
    double operator[](std::size_t flat) const { return data()[flat]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Fresh leaf holding a copy of the values; no grad history.
    Tensor detach_copy() const;
    bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

    const detail::NodePtr& node() const noexcept { return node_; }
    static Tensor from_node(detail::NodePtr node);

private:
    detail::NodePtr node_;
};

// Ordered record of executed differentiable ops.
//
// Ops record a backward closure onto the thread's active tape when at least
// one input requires a gradient. backward() replays the closures in reverse
// execution order exactly once and then clears the tape.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> backward_fn);
    void backward(const Tensor& loss);
    void reset();
    std::size_t size() const noexcept { return entries_.size(); }

    static Tape* active();

private:
    friend class TapeScope;
    std::vector<std::function<void()>> entries_;
};

// Makes a tape the thread's active recording target for its lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

// Runs reverse-mode backward on a scalar loss and resets the tape.
void backward(Tape& tape, const Tensor& loss);

// Building blocks for differentiable ops (used by ops.cpp and the tokenizer).
namespace autodiff {

// Active tape if any of the inputs requires a gradient, else nullptr.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);

// Wraps op output values; marks them as a non-leaf gradient carrier when recording.
Tensor make_output(Shape shape, std::vector<double> values, bool recording);

// Gradient buffer of an input node, or nullptr when it does not need one.
inline double* grad_ptr(const detail::NodePtr& node) {
    return node->requires_grad ? node->ensure_grad().data() : nullptr;
}

}  // namespace autodiff

}  // namespace camfit
