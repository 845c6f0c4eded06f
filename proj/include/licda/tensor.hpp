#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "licda/error.hpp"
#include "licda/rng.hpp"

namespace licda {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw DimError("non-positive dimension in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// One vertex of the reverse-mode graph. Holds the dense value, a lazily
// allocated gradient buffer, and a pull-style backprop closure that reads
// this node's grad and accumulates into the parents' grads.
template <class S>
struct TensorNode {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;

    TensorNode(Shape sh, std::vector<S> v) : shape(std::move(sh)), value(std::move(v)) {
        if (shape_numel(shape) != static_cast<std::int64_t>(value.size()))
            throw DimError("shape " + shape_str(shape) + " does not match value count");
    }

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), S(0));
    }
};

// Value-semantics handle over a shared graph node. All math lives in
// free functions (ops.hpp); this class is storage, shape bookkeeping and
// the backward pass.
template <class S>
class Tensor {
public:
    using Scalar = S;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode<S>> n) : n_(std::move(n)) {}

    static Tensor from(Shape shape, std::vector<S> values) {
        return Tensor(std::make_shared<TensorNode<S>>(std::move(shape), std::move(values)));
    }
    static Tensor zeros(Shape shape) {
        std::vector<S> v(static_cast<std::size_t>(shape_numel(shape)), S(0));
        return from(std::move(shape), std::move(v));
    }
    static Tensor full(Shape shape, S fill) {
        std::vector<S> v(static_cast<std::size_t>(shape_numel(shape)), fill);
        return from(std::move(shape), std::move(v));
    }
    static Tensor scalar_value(S v) { return from({1}, {v}); }
    static Tensor randn(Shape shape, Rng& rng, S stddev = S(1), S mean = S(0)) {
        std::normal_distribution<double> d(0.0, 1.0);
        std::vector<S> v(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& x : v) x = mean + stddev * static_cast<S>(d(rng));
        return from(std::move(shape), std::move(v));
    }
    static Tensor uniform(Shape shape, Rng& rng, S lo, S hi) {
        std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
        std::vector<S> v(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& x : v) x = static_cast<S>(d(rng));
        return from(std::move(shape), std::move(v));
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return node().shape; }
    int rank() const { return static_cast<int>(node().shape.size()); }
    int dim(int i) const { return node().shape.at(static_cast<std::size_t>(i)); }
    std::int64_t numel() const { return static_cast<std::int64_t>(node().value.size()); }

    std::vector<S>& values() { return node().value; }
    const std::vector<S>& values() const { return node().value; }
    std::vector<S>& grad() {
        node().ensure_grad();
        return node().grad;
    }

    S scalar() const {
        if (numel() != 1) throw ContractError("scalar() on tensor of shape " + shape_str(shape()));
        return node().value[0];
    }

    // Row-major multi-index accessor (tests and glue code, not hot paths).
    S at(std::initializer_list<int> idx) const {
        return node().value[flat_index(idx)];
    }
    S& at_mut(std::initializer_list<int> idx) { return node().value[flat_index(idx)]; }

    bool requires_grad() const { return node().requires_grad; }
    Tensor& set_requires_grad(bool b) {
        node().requires_grad = b;
        return *this;
    }

    std::shared_ptr<TensorNode<S>> node_ptr() const { return n_; }
    TensorNode<S>& node() {
        if (!n_) throw ContractError("undefined tensor");
        return *n_;
    }
    const TensorNode<S>& node() const {
        if (!n_) throw ContractError("undefined tensor");
        return *n_;
    }

    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> array() {
        return {node().value.data(), static_cast<Eigen::Index>(node().value.size())};
    }
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> array() const {
        return {node().value.data(), static_cast<Eigen::Index>(node().value.size())};
    }

private:
    std::size_t flat_index(std::initializer_list<int> idx) const {
        const Shape& sh = node().shape;
        if (idx.size() != sh.size()) throw DimError("index rank mismatch");
        std::size_t flat = 0;
        std::size_t d = 0;
        for (int i : idx) {
            if (i < 0 || i >= sh[d]) throw DimError("index out of range");
            flat = flat * static_cast<std::size_t>(sh[d]) + static_cast<std::size_t>(i);
            ++d;
        }
        return flat;
    }

    std::shared_ptr<TensorNode<S>> n_;
};

// Global switch for graph construction; inference paths disable it so no
// backward closures or parent links are retained.
struct GradMode {
    static bool& enabled() {
        static bool e = true;
        return e;
    }
};

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
    ~NoGradGuard() { GradMode::enabled() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <class S>
inline bool all_finite(const std::vector<S>& v) {
    for (S x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

template <class S>
inline void check_finite(const TensorNode<S>& n, const char* where) {
    if (!all_finite(n.value))
        throw CodecError(std::string("non-finite values after ") + where);
}

// Reverse-mode pass. Seeds d(loss)/d(loss) = 1 and walks the graph in
// reverse topological order, invoking each node's backprop closure.
// Nodes whose subtree contains no grad-requiring leaf are skipped, so a
// frozen parameter's gradient buffer is never written at all.
template <class S>
inline void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    auto root = loss.node_ptr();
    if (!root->requires_grad) return;  // loss independent of every trainable parameter

    std::vector<TensorNode<S>*> order;
    std::unordered_set<TensorNode<S>*> seen;
    std::vector<std::pair<TensorNode<S>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode<S>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<S>* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
            if (!all_finite(n->grad))
                throw CodecError(std::string("non-finite gradient at ") + n->op);
        }
    }
}

// Named, optionally trainable leaf tensor. A frozen parameter never takes
// part in the backward walk, so its accumulated gradient stays exactly zero.
template <class S>
class Parameter {
public:
    Parameter() = default;
    Parameter(std::string name, Tensor<S> t, bool trainable = true)
        : name_(std::move(name)), t_(std::move(t)), trainable_(trainable) {
        t_.set_requires_grad(trainable_);
    }

    const std::string& name() const { return name_; }
    Tensor<S>& tensor() { return t_; }
    const Tensor<S>& tensor() const { return t_; }

    bool trainable() const { return trainable_; }
    void set_trainable(bool b) {
        trainable_ = b;
        t_.set_requires_grad(b);
    }

    std::vector<S>& values() { return t_.values(); }
    const std::vector<S>& values() const { return t_.values(); }
    std::vector<S>& grad() { return t_.grad(); }
    void zero_grad() {
        auto& g = t_.grad();
        std::fill(g.begin(), g.end(), S(0));
    }

private:
    std::string name_;
    Tensor<S> t_;
    bool trainable_ = true;
};

// Gradient map over parameters, keyed by parameter name.
template <class S>
inline std::unordered_map<std::string, std::vector<S>> collect_gradients(const std::vector<Parameter<S>*>& params) {
    std::unordered_map<std::string, std::vector<S>> out;
    for (Parameter<S>* p : params) out.emplace(p->name(), p->grad());
    return out;
}

}  // namespace licda
