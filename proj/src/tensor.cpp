#include "camfit/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace camfit {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
    for (auto s : shape)
        if (s == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
    if (shape_numel(shape) != values.size())
        throw ShapeError("tensor " + shape_str(shape) + " given " +
                         std::to_string(values.size()) + " values");
    node_ = std::make_shared<detail::TensorNode>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

const Shape& Tensor::shape() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::data() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->value;
}

std::span<double> Tensor::mutable_data() {
    if (!node_) throw ContractError("use of undefined tensor");
    if (!node_->leaf) throw ContractError("only leaf tensors may be mutated");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor " + shape_str(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!node_) throw ContractError("use of undefined tensor");
    if (!node_->leaf) throw ContractError("requires_grad can only be set on leaves");
    node_->requires_grad = on;
    return *this;
}

bool Tensor::is_leaf() const { return node_ && node_->leaf; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ContractError("tensor has no gradient");
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->ensure_grad();
}

void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach_copy() const { return Tensor(shape(), std::vector<double>(data().begin(), data().end())); }

Tensor Tensor::from_node(detail::NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

void Tape::record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward() needs a scalar loss");
    if (!loss.requires_grad()) {
        reset();
        return;
    }
    auto& g = loss.node()->ensure_grad();
    g[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    reset();
}

void Tape::reset() { entries_.clear(); }

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

namespace autodiff {

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* tape = Tape::active();
    if (!tape) return nullptr;
    for (const Tensor* t : inputs)
        if (t && t->requires_grad()) return tape;
    return nullptr;
}

Tensor make_output(Shape shape, std::vector<double> values, bool recording) {
    Tensor out(std::move(shape), std::move(values));
    if (recording) {
        out.node()->requires_grad = true;
        out.node()->leaf = false;
    }
    return out;
}

}  // namespace autodiff

}  // namespace camfit
