// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

// Dense single-precision tensors with define-by-run reverse-mode autodiff.
// The double instantiation exists for the high-precision gradient checks.
//
// Every differentiable op builds a Node whose vjp is itself expressed in
// terms of ops, so running the engine with create_graph=true yields
// gradients that are again differentiable (one level of this is exercised
// by the masked gradient-penalty term).

namespace pano {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

inline i64 numel_of(const Shape& s) {
    i64 n = 1;
    for (i64 d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

// Plain value: shape plus row-major data. No graph attached.
template <typename T>
struct TensorData {
    Shape shape;
    std::vector<T> data;

    TensorData() = default;
    TensorData(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<i64>(data.size())) {
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        }
    }

    static TensorData zeros(Shape s) {
        const i64 n = numel_of(s);
        return TensorData(std::move(s), std::vector<T>(static_cast<size_t>(n), T(0)));
    }
    static TensorData full(Shape s, T v) {
        const i64 n = numel_of(s);
        return TensorData(std::move(s), std::vector<T>(static_cast<size_t>(n), v));
    }

    i64 numel() const { return static_cast<i64>(data.size()); }
    i64 dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }
};

template <typename T>
class Tensor;

template <typename T>
using VjpFn = std::function<std::vector<Tensor<T>>(const Tensor<T>& self, const Tensor<T>& grad_out)>;

template <typename T>
struct Node {
    TensorData<T> value;
    bool requires_grad = false;  // accumulation target for backward()
    bool needs_grad = false;     // true if gradient flow can reach a requires_grad node
    std::uint64_t seq = 0;       // execution order stamp
    std::vector<Tensor<T>> parents;
    VjpFn<T> vjp;
    std::shared_ptr<TensorData<T>> grad;  // lazily allocated accumulator
};

namespace detail {
inline std::uint64_t next_seq() {
    static thread_local std::uint64_t counter = 0;
    return ++counter;
}
inline bool& grad_mode_flag() {
    static thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

struct GradModeGuard {
    bool prev;
    explicit GradModeGuard(bool enable) : prev(detail::grad_mode_flag()) { detail::grad_mode_flag() = enable; }
    ~GradModeGuard() { detail::grad_mode_flag() = prev; }
    GradModeGuard(const GradModeGuard&) = delete;
    GradModeGuard& operator=(const GradModeGuard&) = delete;
};

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(TensorData<T> value, bool requires_grad = false) : n_(std::make_shared<Node<T>>()) {
        n_->value = std::move(value);
        n_->requires_grad = requires_grad;
        n_->needs_grad = requires_grad;
        n_->seq = detail::next_seq();
    }

    static Tensor zeros(Shape s) { return Tensor(TensorData<T>::zeros(std::move(s))); }
    static Tensor full(Shape s, T v) { return Tensor(TensorData<T>::full(std::move(s), v)); }
    static Tensor ones(Shape s) { return full(std::move(s), T(1)); }
    static Tensor scalar(T v) { return Tensor(TensorData<T>({1}, {v})); }
    static Tensor from(Shape s, std::vector<T> d) { return Tensor(TensorData<T>(std::move(s), std::move(d))); }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->value.shape; }
    i64 numel() const { return n_->value.numel(); }
    i64 dim(size_t i) const { return n_->value.dim(i); }
    size_t rank() const { return n_->value.rank(); }
    const TensorData<T>& value() const { return n_->value; }
    const T* data() const { return n_->value.data.data(); }
    // Mutation is only legal on leaves between graph builds (optimizer updates).
    T* mutable_data() { return n_->value.data.data(); }
    T item() const {
        if (numel() != 1) throw std::invalid_argument("item() requires a scalar tensor, got " + shape_str(shape()));
        return n_->value.data[0];
    }

    bool requires_grad() const { return n_->requires_grad; }
    bool needs_grad() const { return n_ && n_->needs_grad; }
    void set_requires_grad(bool v) {
        n_->requires_grad = v;
        if (v) n_->needs_grad = true;
    }

    const TensorData<T>* grad() const { return n_->grad.get(); }
    void zero_grad() {
        if (n_->grad) std::fill(n_->grad->data.begin(), n_->grad->data.end(), T(0));
    }
    void clear_grad() { n_->grad.reset(); }

    Node<T>* node() const { return n_.get(); }

    // Graph construction: used by the ops layer.
    static Tensor make_op(TensorData<T> value, std::vector<Tensor> parents, VjpFn<T> vjp) {
        bool track = grad_enabled();
        if (track) {
            bool any = false;
            for (const auto& p : parents) any = any || (p.defined() && p.needs_grad());
            track = any;
        }
        Tensor out(std::move(value));
        if (track) {
            out.n_->needs_grad = true;
            out.n_->parents = std::move(parents);
            out.n_->vjp = std::move(vjp);
        }
        return out;
    }

    bool same_node(const Tensor& other) const { return n_ == other.n_; }

private:
    std::shared_ptr<Node<T>> n_;
};

// Declared here, defined in ops.hpp; the engine uses it to accumulate grads.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

namespace detail {

template <typename T>
std::unordered_map<Node<T>*, Tensor<T>> run_engine(const Tensor<T>& output, bool create_graph) {
    if (!output.defined()) throw std::invalid_argument("backward: undefined tensor");
    if (output.numel() != 1) {
        throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_str(output.shape()));
    }

    // Collect reachable grad-flow nodes.
    std::vector<Tensor<T>> order;
    std::unordered_map<Node<T>*, bool> seen;
    std::vector<Tensor<T>> stack{output};
    while (!stack.empty()) {
        Tensor<T> t = stack.back();
        stack.pop_back();
        Node<T>* n = t.node();
        if (!n->needs_grad || seen.count(n)) continue;
        seen[n] = true;
        order.push_back(t);
        for (const auto& p : n->parents) {
            if (p.defined() && p.needs_grad()) stack.push_back(p);
        }
    }
    // Reverse execution order; parents always carry smaller stamps than
    // consumers, so each node is complete before its vjp fires.
    std::sort(order.begin(), order.end(),
              [](const Tensor<T>& a, const Tensor<T>& b) { return a.node()->seq > b.node()->seq; });

    std::unordered_map<Node<T>*, Tensor<T>> grads;
    grads[output.node()] = Tensor<T>::ones({1});

    GradModeGuard guard(create_graph);
    for (const auto& t : order) {
        Node<T>* n = t.node();
        auto it = grads.find(n);
        if (it == grads.end()) continue;  // no gradient reached this node
        if (!n->vjp) continue;            // leaf
        std::vector<Tensor<T>> pgrads = n->vjp(t, it->second);
        if (pgrads.size() != n->parents.size()) {
            throw std::logic_error("vjp returned wrong number of parent gradients");
        }
        for (size_t i = 0; i < pgrads.size(); ++i) {
            if (!pgrads[i].defined()) continue;
            const Tensor<T>& parent = n->parents[i];
            if (!parent.needs_grad()) continue;
            auto pit = grads.find(parent.node());
            if (pit == grads.end()) {
                grads[parent.node()] = pgrads[i];
            } else {
                pit->second = add(pit->second, pgrads[i]);
            }
        }
    }
    return grads;
}

}  // namespace detail

// Accumulates d(loss)/d(t) into t.grad() for every reachable tensor with
// requires_grad set. Calling twice without zero_grad doubles the grads.
template <typename T>
void backward(const Tensor<T>& loss) {
    auto grads = detail::run_engine(loss, /*create_graph=*/false);
    for (auto& [node, g] : grads) {
        if (!node->requires_grad) continue;
        if (!node->grad) {
            node->grad = std::make_shared<TensorData<T>>(TensorData<T>::zeros(node->value.shape));
        }
        const auto& gd = g.value().data;
        auto& acc = node->grad->data;
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += gd[i];
    }
}

// Returns d(output)/d(inputs) without touching any .grad accumulator.
// With create_graph=true the results carry history and can be
// differentiated again.
template <typename T>
std::vector<Tensor<T>> grad(const Tensor<T>& output, const std::vector<Tensor<T>>& inputs, bool create_graph = false) {
    auto grads = detail::run_engine(output, create_graph);
    std::vector<Tensor<T>> out;
    out.reserve(inputs.size());
    for (const auto& in : inputs) {
        auto it = grads.find(in.node());
        if (it == grads.end()) {
            out.push_back(Tensor<T>::zeros(in.shape()));
        } else {
            out.push_back(it->second);
        }
    }
    return out;
}

// Central-difference gradient estimate, (f(x+eps e_i) - f(x-eps e_i)) / 2eps.
// Evaluates f forward only; independent of the reverse-mode path by
// construction.
template <typename T, typename F>
TensorData<T> finite_difference(F&& f, const Tensor<T>& x, T eps) {
    if (eps <= T(0)) throw std::invalid_argument("finite_difference: eps must be positive");
    TensorData<T> result = TensorData<T>::zeros(x.shape());
    TensorData<T> probe = x.value();
    for (size_t i = 0; i < probe.data.size(); ++i) {
        const T orig = probe.data[i];
        probe.data[i] = orig + eps;
        const T hi = f(Tensor<T>(probe));
        probe.data[i] = orig - eps;
        const T lo = f(Tensor<T>(probe));
        probe.data[i] = orig;
        result.data[i] = (hi - lo) / (T(2) * eps);
    }
    return result;
}

// Deterministic RNG helpers (mt19937-based, identical streams across
// standard libraries; std::*_distribution is implementation-defined).
inline double rng_unit(std::mt19937& g) {
    return (g() >> 6) * (1.0 / 67108864.0);  // 26 random bits in [0,1)
}

inline double rng_normal(std::mt19937& g) {
    // Box-Muller; consumes exactly two draws.
    double u1 = rng_unit(g);
    if (u1 < 1e-12) u1 = 1e-12;
    const double u2 = rng_unit(g);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

template <typename T>
TensorData<T> random_uniform(Shape s, std::mt19937& g, T lo = T(0), T hi = T(1)) {
    TensorData<T> out = TensorData<T>::zeros(std::move(s));
    for (auto& v : out.data) v = lo + (hi - lo) * static_cast<T>(rng_unit(g));
    return out;
}

template <typename T>
TensorData<T> random_normal(Shape s, std::mt19937& g, T mean = T(0), T stddev = T(1)) {
    TensorData<T> out = TensorData<T>::zeros(std::move(s));
    for (auto& v : out.data) v = mean + stddev * static_cast<T>(rng_normal(g));
    return out;
}

}  // namespace pano
