#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace dps {

namespace detail {

struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;     // allocated lazily, same length as data
    bool requires_grad = false;
    bool consumed = false;        // set once a backward pass has swept this node

    // Recorded tape edges: operands of the op that produced this node.
    // Empty for leaves and for results of ops with no grad-requiring input.
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t size() const { return data.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

}  // namespace detail

/// Dense row-major float64 tensor with an optional gradient slot.
///
/// Tensor is a cheap shared handle onto a graph node. Every op that consumes
/// at least one grad-requiring tensor records itself on the implicit tape
/// (operand links plus a backward rule); backward() topologically sweeps that
/// record once and then clears it, so a fresh forward pass is required before
/// differentiating again.
class Tensor {
public:
    Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

    static Tensor zeros(std::vector<std::size_t> shape) {
        return filled(std::move(shape), 0.0);
    }

    static Tensor filled(std::vector<std::size_t> shape, double v) {
        Tensor t;
        t.node_->data.assign(detail::shape_numel(shape), v);
        t.node_->shape = std::move(shape);
        return t;
    }

    static Tensor scalar(double v) { return filled({1}, v); }

    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values) {
        if (detail::shape_numel(shape) != values.size())
            throw std::invalid_argument("Tensor::from: shape " + detail::shape_str(shape) +
                                        " does not match " + std::to_string(values.size()) +
                                        " values");
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(values);
        return t;
    }

    /// Leaf that participates in differentiation.
    static Tensor parameter(std::vector<std::size_t> shape, std::vector<double> values) {
        Tensor t = from(std::move(shape), std::move(values));
        t.node_->requires_grad = true;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& mutable_data() { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    const std::vector<double>& grad() const {
        if (!has_grad()) throw std::runtime_error("Tensor::grad: no gradient populated");
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    double value() const {
        if (size() != 1)
            throw std::invalid_argument("Tensor::value: tensor " +
                                        detail::shape_str(shape()) + " is not scalar");
        return node_->data[0];
    }

    double at(std::size_t i) const { return node_->data.at(i); }
    double at(std::size_t r, std::size_t c) const {
        if (rank() != 2) throw std::invalid_argument("Tensor::at(r,c): tensor is not rank-2");
        return node_->data.at(r * dim(1) + c);
    }

    /// Identity check (same underlying node).
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op_result(const char*, std::vector<std::size_t>, std::vector<double>,
                                 std::vector<Tensor>,
                                 std::function<void(detail::TensorNode&)>);
};

/// Builds an op output, enforcing the finiteness contract, and records the
/// backward rule iff some operand requires grad.
inline Tensor make_op_result(const char* op_name, std::vector<std::size_t> shape,
                             std::vector<double> data, std::vector<Tensor> inputs,
                             std::function<void(detail::TensorNode&)> backward_fn) {
    for (double v : data) {
        if (!std::isfinite(v))
            throw std::runtime_error(std::string(op_name) + ": non-finite output");
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    for (const Tensor& in : inputs)
        if (in.requires_grad()) { needs = true; break; }
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (const Tensor& in : inputs) node->parents.push_back(in.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

/// Reverse-mode sweep. Populates grad on every grad-requiring leaf reachable
/// from `loss`, visiting each recorded node exactly once, then clears the
/// tape. A second backward through the same recording is an error.
inline void backward(const Tensor& loss) {
    using detail::TensorNode;
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    detail::shape_str(loss.shape()));
    TensorNode* root = loss.node().get();
    if (!root->backward_fn && root->parents.empty())
        throw std::runtime_error(root->consumed
                                     ? "backward: tape already consumed; re-run forward"
                                     : "backward: empty tape (loss is a leaf)");

    // Topological order, parents before consumers.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> done;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (done.count(n)) { stack.pop_back(); continue; }
        if (next < n->parents.size()) {
            TensorNode* p = n->parents[next++].get();
            if (!done.count(p)) stack.emplace_back(p, 0);
        } else {
            done.insert(n);
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (TensorNode* n : order) {
        if (n->consumed)
            throw std::runtime_error("backward: tape already consumed; re-run forward");
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
    // Clear the tape: interior nodes release their rules and operand links.
    for (TensorNode* n : order) {
        if (n->backward_fn) {
            n->consumed = true;
            n->backward_fn = nullptr;
            n->parents.clear();
        }
    }
}

inline void zero_grads(const std::vector<Tensor>& params) {
    for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
}

/// Plain value checksum, used to assert which parameters a phase touched.
inline double checksum(const std::vector<Tensor>& params) {
    double s = 0.0;
    std::size_t k = 1;
    for (const Tensor& p : params)
        for (double v : p.data()) s += v * static_cast<double>(k++ % 97 + 1);
    return s;
}

}  // namespace dps
