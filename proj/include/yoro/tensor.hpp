#pragma once

// Dense 64-bit tensors with tape-free reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared node state. Every op that consumes a
// tensor with requires_grad() records its inputs and a backward closure on the
// output node; backward() walks the resulting DAG in reverse topological order
// exactly once per node and then releases the recorded edges.
//
// Tensors are rank 0 (scalar), 1 or 2. Rank-1 tensors behave as 1 x n rows in
// the matrix ops.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace yoro {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    // Writable view of the value buffer. Only meaningful on leaves; the
    // optimizer uses it between steps.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t r, std::size_t c) const;
    double operator[](std::size_t i) const { return data()[i]; }

    bool requires_grad() const;
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // New leaf sharing this tensor's value storage but owning a separate
    // gradient buffer. Used to run several graphs over one parameter set.
    Tensor alias() const;
    // Value copy without gradient tracking.
    Tensor detach() const;
    // Deep copy of the values into a fresh leaf.
    Tensor clone(bool requires_grad) const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
    Shape shape;
    std::shared_ptr<std::vector<double>> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    std::span<const double> values() const { return *value; }
    // Adds src into grad, allocating on first use.
    void accumulate(std::span<const double> src);
    std::vector<double>& grad_buffer();
};

}  // namespace detail

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

struct BackwardOptions {
    bool retain_graph = false;
};

// Propagates d(loss)/d(node) into every reachable node that requires grad.
// Returns the number of node visits, which equals the number of distinct
// recorded nodes reachable from loss. Throws ContractError if loss is not a
// single element.
std::size_t backward(const Tensor& loss, BackwardOptions options = {});

// ---- matrix ops ----
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
// Natural log of max(a, floor). Gradient is zero where the floor is active.
Tensor log(const Tensor& a, double floor = 0.0);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// x[r x c] + row[c] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& row);

// ---- reductions / normalization ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// axis 1: each row sums to one; axis 0: each column sums to one.
Tensor softmax(const Tensor& x, int axis = 1);
Tensor log_softmax(const Tensor& x, int axis = 1);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

// ---- structural ----
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// Single element as a rank-0 tensor.
Tensor element(const Tensor& x, std::size_t r, std::size_t c);
Tensor reshape(const Tensor& x, Shape shape);

}  // namespace yoro
