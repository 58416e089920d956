#include "frs/tensor.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <unordered_set>

namespace frs {

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

int analysis_threads() {
    const char* env = std::getenv("FRS_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n > 0 ? n : 1;
}

namespace {

thread_local bool g_grad_enabled = true;

bool initial_finite_checks() {
    const char* env = std::getenv("FRS_NO_FINITE_CHECK");
    return !(env && env[0] == '1');
}

thread_local bool g_finite_checks = initial_finite_checks();

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    for (int d : shape)
        if (d <= 0) throw ShapeError("tensor: non-positive dimension in shape " + shape_str(shape));
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return node;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool finite_checks() { return g_finite_checks; }
void set_finite_checks(bool enabled) { g_finite_checks = enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = numel(shape);
    return wrap(make_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0),
                          requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = numel(shape);
    return wrap(make_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), value),
                          requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    return wrap(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

void Tensor::zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item(): tensor has " + std::to_string(size()) + " elements");
    return n_->data[0];
}

double Tensor::at(int n, int c, int h, int w) const {
    const Shape& s = n_->shape;
    if (s.size() != 4) throw ShapeError("at(n,c,h,w): tensor rank is " + std::to_string(s.size()));
    size_t idx = static_cast<size_t>(((n * s[1] + c) * s[2] + h) * s[3] + w);
    return n_->data[idx];
}

Tensor Tensor::detach() const {
    return wrap(make_node(n_->shape, n_->data, false));
}

void Tensor::backward() const { Tape(*this).backward(); }

Tape::Tape(const Tensor& root) : root_(root.node()) {
    if (!root_) throw ShapeError("Tape: undefined root tensor");
    if (root_->data.size() != 1) throw ShapeError("Tape: backward root must be scalar");
    if (!root_->requires_grad) return;  // constant root: nothing to record

    // Iterative post-order DFS over parent edges; emits parents before
    // children, pruned at nodes that do not require gradients.
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(root_.get(), 0);
    visited.insert(root_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second)
                stack.emplace_back(parent, 0);
        } else {
            order_.push_back(node);
            stack.pop_back();
        }
    }
}

void Tape::backward() {
    if (order_.empty()) return;
    root_->ensure_grad();
    root_->grad[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

}  // namespace frs
