#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "frs/common.hpp"

namespace frs {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until the backward pass reaches this node
    bool requires_grad = false;
    const char* op = "leaf";

    // Graph edges: the nodes this op consumed. Populated only while grad
    // recording is enabled and at least one input requires a gradient.
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

/// Dense n-dimensional array of 64-bit floats, row-major, last dimension
/// fastest. Cheap to copy (shared handle). Immutable once created except for
/// gradient accumulation and explicit parameter updates between iterations.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(n_->data.size()); }

    std::span<const double> data() const { return n_->data; }
    /// Mutable access for parameter initialization and optimizer steps only.
    std::span<double> data_mut() { return n_->data; }

    bool requires_grad() const { return n_->requires_grad; }
    bool has_grad() const { return !n_->grad.empty(); }
    std::span<const double> grad() const { return n_->grad; }
    void zero_grad();

    double item() const;  // scalar tensors only

    /// Value at [n,c,h,w] of a rank-4 tensor.
    double at(int n, int c, int h, int w) const;

    /// Copy of the values with no graph attached and no gradient requirement.
    Tensor detach() const;

    /// Reverse-mode gradient of this scalar w.r.t. every reachable tensor
    /// with requires_grad. Equivalent to Tape(*this).backward().
    void backward() const;

    const std::shared_ptr<TensorNode>& node() const { return n_; }
    static Tensor wrap(std::shared_ptr<TensorNode> node) {
        Tensor t;
        t.n_ = std::move(node);
        return t;
    }

private:
    std::shared_ptr<TensorNode> n_;
};

/// Ordered record of the operations reachable from a root tensor, in
/// topological order. backward() seeds d(root)/d(root)=1 and replays the
/// record in reverse, visiting each node exactly once; gradients accumulate
/// additively where a tensor feeds several consumers.
class Tape {
public:
    explicit Tape(const Tensor& root);
    void backward();
    size_t recorded_ops() const { return order_.size(); }

private:
    std::shared_ptr<TensorNode> root_;
    std::vector<TensorNode*> order_;  // parents before children
};

/// Gradient recording toggle (thread-local). Teacher forward passes run
/// under NoGradGuard so they never build a graph.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Forward ops verify their outputs are finite when enabled (on by default;
/// FRS_NO_FINITE_CHECK=1 or set_finite_checks(false) disables).
bool finite_checks();
void set_finite_checks(bool enabled);

}  // namespace frs
