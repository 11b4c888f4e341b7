#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace gadan {

class Variable;

/// One tape entry: a value plus the closure that routes its gradient to its
/// parents. Nodes form a DAG; backward() runs a reverse topological sweep.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad();
    void accumulate(const Tensor& g);
};

/// Shared handle to a tape node. Cheap to copy; a default-constructed
/// Variable is empty.
class Variable {
public:
    Variable() = default;
    explicit Variable(Tensor value, bool requires_grad = false);

    static Variable leaf(Tensor value, bool requires_grad = false) {
        return Variable(std::move(value), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.defined(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::vector<int64_t>& shape() const { return node_->value.shape(); }

    void zero_grad() { node_->grad = Tensor(); }
    /// Cut the tape: same value, no history.
    Variable detach() const { return Variable(node_->value, false); }

    std::shared_ptr<Node> node() const { return node_; }

    /// Internal: build an op result wired to its parents.
    static Variable make(Tensor value, const char* op, std::vector<Variable> parents,
                         std::function<void(Node&)> backward_fn);

private:
    std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar root (seeds d root/d root = 1).
void backward(const Variable& root);

}  // namespace gadan
