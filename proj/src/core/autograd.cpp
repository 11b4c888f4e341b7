#include "core/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace gadan {

Tensor& Node::ensure_grad() {
    if (!grad.defined()) grad = Tensor::zeros(value.shape());
    return grad;
}

void Node::accumulate(const Tensor& g) {
    Tensor& acc = ensure_grad();
    if (!acc.same_shape(g)) throw std::logic_error("gradient shape mismatch");
    double* a = acc.data();
    const double* b = g.data();
    const int64_t n = acc.numel();
#pragma omp parallel for simd schedule(static) if (n > 65536)
    for (int64_t i = 0; i < n; ++i) a[i] += b[i];
}

Variable::Variable(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Variable Variable::make(Tensor value, const char* op, std::vector<Variable> parents,
                        std::function<void(Node&)> backward_fn) {
    Variable v(std::move(value), false);
    v.node_->op = op;
    for (const Variable& p : parents) {
        if (p.defined() && p.requires_grad()) {
            v.node_->requires_grad = true;
            break;
        }
    }
    if (v.node_->requires_grad) {
        for (const Variable& p : parents)
            if (p.defined()) v.node_->parents.push_back(p.node());
        v.node_->backward_fn = std::move(backward_fn);
    }
    return v;
}

void backward(const Variable& root) {
    if (!root.defined()) throw std::logic_error("backward on empty Variable");
    if (root.value().numel() != 1) throw std::logic_error("backward root must be a scalar");
    if (!root.requires_grad()) return;

    // Iterative post-order topological sort (graphs are deep enough that
    // recursion would risk the stack).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad();
    root.node()->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->grad.defined()) node->backward_fn(*node);
    }
}

}  // namespace gadan
