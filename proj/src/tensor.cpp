#include "yoro/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>

#include "yoro/errors.hpp"

namespace yoro {

namespace {

thread_local bool t_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

std::size_t rows_of(const Shape& s) { return s.size() == 2 ? s[0] : 1; }
std::size_t cols_of(const Shape& s) {
    if (s.empty()) return 1;
    return s.back();
}

// ---- GEMM kernels. Row-major, accumulate into C. ----

// C[M x N] += A[M x K] * B[K x N]
void gemm_nn(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
             std::size_t N) {
    for (std::size_t i = 0; i < M; ++i) {
        double* __restrict crow = C + i * N;
        const double* arow = A + i * K;
        for (std::size_t p = 0; p < K; ++p) {
            const double a = arow[p];
            if (a == 0.0) continue;
            const double* __restrict brow = B + p * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[M x N] += A[K x M]^T * B[K x N]
void gemm_tn(const double* A, const double* B, double* C, std::size_t K, std::size_t M,
             std::size_t N) {
    for (std::size_t p = 0; p < K; ++p) {
        const double* arow = A + p * M;
        const double* __restrict brow = B + p * N;
        for (std::size_t i = 0; i < M; ++i) {
            const double a = arow[i];
            if (a == 0.0) continue;
            double* __restrict crow = C + i * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[M x N] += A[M x K] * B[N x K]^T
void gemm_nt(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
             std::size_t N) {
    std::vector<double> bt(K * N);
    for (std::size_t j = 0; j < N; ++j)
        for (std::size_t p = 0; p < K; ++p) bt[p * N + j] = B[j * K + p];
    gemm_nn(A, bt.data(), C, M, K, N);
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    if (!t_grad_enabled) return false;
    for (const Tensor* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

// Builds an output node. The backward closure is only attached when at least
// one input participates in differentiation.
Tensor make_output(Shape shape, std::vector<double> values, std::vector<NodePtr> inputs,
                   bool track, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::make_shared<std::vector<double>>(std::move(values));
    if (track) {
        node->requires_grad = true;
        node->inputs = std::move(inputs);
        node->backward = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

void require_matrix(const Tensor& a, const char* op) {
    if (!a.defined()) throw ContractError(std::string(op) + ": undefined tensor");
    if (a.rank() > 2)
        throw DimensionError(std::string(op) + ": expected rank <= 2, got " +
                             shape_str(a.shape()));
}

Shape matrix_shape(std::size_t r, std::size_t c) { return Shape{r, c}; }

// Elementwise unary op with derivative expressed through (x, y).
template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D dfdx) {
    const auto x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    const bool track = any_requires_grad({&a});
    return make_output(a.shape(), std::move(out), {a.node()}, track, [dfdx](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const auto x = in.values();
        const auto y = self.values();
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * dfdx(x[i], y[i]);
    });
}

// Elementwise binary op. Either operand may be a single element that is
// broadcast against the other.
template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA dfda, DB dfdb) {
    const bool a_scalar = a.size() == 1 && b.size() != 1;
    const bool b_scalar = b.size() == 1 && a.size() != 1;
    if (!a_scalar && !b_scalar) require_same_shape(a, b, name);
    const Shape out_shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = shape_size(out_shape);
    const auto xa = a.data();
    const auto xb = b.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(xa[a_scalar ? 0 : i], xb[b_scalar ? 0 : i]);
    const bool track = any_requires_grad({&a, &b});
    return make_output(out_shape, std::move(out), {a.node(), b.node()}, track,
                       [a_scalar, b_scalar, n, dfda, dfdb](Node& self) {
                           Node& na = *self.inputs[0];
                           Node& nb = *self.inputs[1];
                           const auto xa = na.values();
                           const auto xb = nb.values();
                           if (na.requires_grad) {
                               auto& g = na.grad_buffer();
                               for (std::size_t i = 0; i < n; ++i) {
                                   const double va = xa[a_scalar ? 0 : i];
                                   const double vb = xb[b_scalar ? 0 : i];
                                   g[a_scalar ? 0 : i] += self.grad[i] * dfda(va, vb);
                               }
                           }
                           if (nb.requires_grad) {
                               auto& g = nb.grad_buffer();
                               for (std::size_t i = 0; i < n; ++i) {
                                   const double va = xa[a_scalar ? 0 : i];
                                   const double vb = xb[b_scalar ? 0 : i];
                                   g[b_scalar ? 0 : i] += self.grad[i] * dfdb(va, vb);
                               }
                           }
                       });
}

void check_finite(std::span<const double> x, const char* op) {
    for (double v : x)
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Node ----

void detail::Node::accumulate(std::span<const double> src) {
    auto& g = grad_buffer();
    for (std::size_t i = 0; i < src.size(); ++i) g[i] += src[i];
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.empty()) grad.assign(value->size(), 0.0);
    return grad;
}

// ---- Tensor ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape.size() > 2) throw DimensionError("tensor rank must be <= 2, got " + shape_str(shape));
    for (std::size_t e : shape)
        if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape));
    if (shape_size(shape) != values.size())
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::make_shared<std::vector<double>>(std::move(values));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value->size(); }
std::size_t Tensor::rows() const { return rows_of(shape()); }
std::size_t Tensor::cols() const { return cols_of(shape()); }
std::span<const double> Tensor::data() const { return *node_->value; }
std::span<double> Tensor::mutable_data() { return *node_->value; }

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return data()[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return !node_->backward; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }
void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::alias() const {
    auto node = std::make_shared<Node>();
    node->shape = node_->shape;
    node->value = node_->value;
    node->requires_grad = node_->requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<Node>();
    node->shape = node_->shape;
    node->value = node_->value;
    return Tensor(std::move(node));
}

Tensor Tensor::clone(bool requires_grad) const {
    return from(shape(), std::vector<double>(data().begin(), data().end()), requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---- backward ----

std::size_t backward(const Tensor& loss, BackwardOptions options) {
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward() requires a single-element loss");
    if (!loss.requires_grad()) return 0;

    // Iterative post-order DFS gives a topological order; reversing it visits
    // every node after all of its consumers.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer()[0] += 1.0;
    std::size_t visits = 0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        ++visits;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
    if (!options.retain_graph) {
        for (Node* node : order) {
            if (!node->backward) continue;
            node->backward = nullptr;
            node->inputs.clear();
            if (node != loss.node().get()) {
                node->grad.clear();
                node->grad.shrink_to_fit();
            }
        }
    }
    return visits;
}

// ---- matrix ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
    if (b.rows() != K)
        throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()));
    std::vector<double> out(M * N, 0.0);
    gemm_nn(a.data().data(), b.data().data(), out.data(), M, K, N);
    const bool track = any_requires_grad({&a, &b});
    return make_output(matrix_shape(M, N), std::move(out), {a.node(), b.node()}, track,
                       [M, K, N](Node& self) {
                           Node& na = *self.inputs[0];
                           Node& nb = *self.inputs[1];
                           if (na.requires_grad)
                               gemm_nt(self.grad.data(), nb.value->data(), na.grad_buffer().data(),
                                       M, N, K);
                           if (nb.requires_grad)
                               gemm_tn(na.value->data(), self.grad.data(), nb.grad_buffer().data(),
                                       M, K, N);
                       });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const std::size_t M = a.rows(), K = a.cols(), N = b.rows();
    if (b.cols() != K)
        throw DimensionError("matmul_nt: inner extents differ " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()) + "^T");
    std::vector<double> out(M * N, 0.0);
    gemm_nt(a.data().data(), b.data().data(), out.data(), M, K, N);
    const bool track = any_requires_grad({&a, &b});
    return make_output(matrix_shape(M, N), std::move(out), {a.node(), b.node()}, track,
                       [M, K, N](Node& self) {
                           Node& na = *self.inputs[0];
                           Node& nb = *self.inputs[1];
                           if (na.requires_grad)
                               gemm_nn(self.grad.data(), nb.value->data(), na.grad_buffer().data(),
                                       M, N, K);
                           if (nb.requires_grad)
                               gemm_tn(self.grad.data(), na.value->data(), nb.grad_buffer().data(),
                                       M, N, K);
                       });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t R = a.rows(), C = a.cols();
    const auto x = a.data();
    std::vector<double> out(R * C);
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) out[j * R + i] = x[i * C + j];
    const bool track = any_requires_grad({&a});
    return make_output(matrix_shape(C, R), std::move(out), {a.node()}, track, [R, C](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < C; ++j) g[i * C + j] += self.grad[j * R + i];
    });
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y) { return x <= y ? 1.0 : 0.0; },
        [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
        [](double x, double y) { return x >= y ? 1.0 : 0.0; },
        [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(
        a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
    return unary(
        a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a, double floor) {
    return unary(
        a, [floor](double x) { return std::log(std::max(x, floor)); },
        [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor gelu(const Tensor& a) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double k = 0.044715;
    return unary(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
        [](double x, double) {
            const double t = std::tanh(c * (x + k * x * x * x));
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
        });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
    require_matrix(x, "add_row");
    const std::size_t R = x.rows(), C = x.cols();
    if (row.size() != C)
        throw DimensionError("add_row: row width " + std::to_string(row.size()) +
                             " vs matrix width " + std::to_string(C));
    const auto xv = x.data();
    const auto rv = row.data();
    std::vector<double> out(R * C);
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) out[i * C + j] = xv[i * C + j] + rv[j];
    const bool track = any_requires_grad({&x, &row});
    return make_output(x.shape(), std::move(out), {x.node(), row.node()}, track,
                       [R, C](Node& self) {
                           Node& nx = *self.inputs[0];
                           Node& nr = *self.inputs[1];
                           if (nx.requires_grad) nx.accumulate(self.grad);
                           if (nr.requires_grad) {
                               auto& g = nr.grad_buffer();
                               for (std::size_t i = 0; i < R; ++i)
                                   for (std::size_t j = 0; j < C; ++j) g[j] += self.grad[i * C + j];
                           }
                       });
}

// ---- reductions / normalization ----

Tensor sum(const Tensor& a) {
    const auto x = a.data();
    double s = 0.0;
    for (double v : x) s += v;
    const bool track = any_requires_grad({&a});
    return make_output({}, {s}, {a.node()}, track, [](Node& self) {
        Node& in = *self.inputs[0];
        auto& g = in.grad_buffer();
        for (double& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

namespace {

// Generic strided softmax: `count` independent slices of length `len`, with
// element k of slice s at offset s*outer + k*inner.
struct SliceLayout {
    std::size_t count, len, outer, inner;
};

SliceLayout softmax_layout(const Tensor& x, int axis) {
    require_matrix(x, "softmax");
    const std::size_t R = x.rows(), C = x.cols();
    if (axis == 1 || x.rank() < 2) return {R, C, C, 1};
    if (axis == 0) return {C, R, 1, C};
    throw DimensionError("softmax: axis must be 0 or 1");
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    const SliceLayout L = softmax_layout(x, axis);
    const auto v = x.data();
    check_finite(v, "softmax");
    std::vector<double> out(v.size());
    for (std::size_t s = 0; s < L.count; ++s) {
        const std::size_t base = s * L.outer;
        double mx = v[base];
        for (std::size_t k = 1; k < L.len; ++k) mx = std::max(mx, v[base + k * L.inner]);
        double z = 0.0;
        for (std::size_t k = 0; k < L.len; ++k) {
            const double e = std::exp(v[base + k * L.inner] - mx);
            out[base + k * L.inner] = e;
            z += e;
        }
        for (std::size_t k = 0; k < L.len; ++k) out[base + k * L.inner] /= z;
    }
    const bool track = any_requires_grad({&x});
    return make_output(x.shape(), std::move(out), {x.node()}, track, [L](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        const auto y = self.values();
        for (std::size_t s = 0; s < L.count; ++s) {
            const std::size_t base = s * L.outer;
            double dot = 0.0;
            for (std::size_t k = 0; k < L.len; ++k) {
                const std::size_t i = base + k * L.inner;
                dot += self.grad[i] * y[i];
            }
            for (std::size_t k = 0; k < L.len; ++k) {
                const std::size_t i = base + k * L.inner;
                g[i] += y[i] * (self.grad[i] - dot);
            }
        }
    });
}

Tensor log_softmax(const Tensor& x, int axis) {
    const SliceLayout L = softmax_layout(x, axis);
    const auto v = x.data();
    check_finite(v, "log_softmax");
    std::vector<double> out(v.size());
    for (std::size_t s = 0; s < L.count; ++s) {
        const std::size_t base = s * L.outer;
        double mx = v[base];
        for (std::size_t k = 1; k < L.len; ++k) mx = std::max(mx, v[base + k * L.inner]);
        double z = 0.0;
        for (std::size_t k = 0; k < L.len; ++k) z += std::exp(v[base + k * L.inner] - mx);
        const double lz = mx + std::log(z);
        for (std::size_t k = 0; k < L.len; ++k) out[base + k * L.inner] = v[base + k * L.inner] - lz;
    }
    const bool track = any_requires_grad({&x});
    return make_output(x.shape(), std::move(out), {x.node()}, track, [L](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        const auto y = self.values();
        for (std::size_t s = 0; s < L.count; ++s) {
            const std::size_t base = s * L.outer;
            double gsum = 0.0;
            for (std::size_t k = 0; k < L.len; ++k) gsum += self.grad[base + k * L.inner];
            for (std::size_t k = 0; k < L.len; ++k) {
                const std::size_t i = base + k * L.inner;
                g[i] += self.grad[i] - std::exp(y[i]) * gsum;
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_matrix(x, "layer_norm");
    const std::size_t R = x.rows(), C = x.cols();
    if (gain.size() != C || bias.size() != C)
        throw DimensionError("layer_norm: affine parameters must have width " + std::to_string(C));
    const auto v = x.data();
    const auto gv = gain.data();
    const auto bv = bias.data();
    std::vector<double> out(R * C), xhat(R * C), inv_std(R);
    for (std::size_t i = 0; i < R; ++i) {
        const double* row = v.data() + i * C;
        double mu = 0.0;
        for (std::size_t j = 0; j < C; ++j) mu += row[j];
        mu /= static_cast<double>(C);
        double var = 0.0;
        for (std::size_t j = 0; j < C; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(C);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < C; ++j) {
            const double h = (row[j] - mu) * inv_std[i];
            xhat[i * C + j] = h;
            out[i * C + j] = h * gv[j] + bv[j];
        }
    }
    const bool track = any_requires_grad({&x, &gain, &bias});
    return make_output(
        x.shape(), std::move(out), {x.node(), gain.node(), bias.node()}, track,
        [R, C, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
            Node& nx = *self.inputs[0];
            Node& ng = *self.inputs[1];
            Node& nb = *self.inputs[2];
            const auto gv = ng.values();
            const double invC = 1.0 / static_cast<double>(C);
            if (nx.requires_grad) {
                auto& gx = nx.grad_buffer();
                for (std::size_t i = 0; i < R; ++i) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < C; ++j) {
                        const double dh = self.grad[i * C + j] * gv[j];
                        m1 += dh;
                        m2 += dh * xhat[i * C + j];
                    }
                    m1 *= invC;
                    m2 *= invC;
                    for (std::size_t j = 0; j < C; ++j) {
                        const double dh = self.grad[i * C + j] * gv[j];
                        gx[i * C + j] += inv_std[i] * (dh - m1 - xhat[i * C + j] * m2);
                    }
                }
            }
            if (ng.requires_grad) {
                auto& gg = ng.grad_buffer();
                for (std::size_t i = 0; i < R; ++i)
                    for (std::size_t j = 0; j < C; ++j)
                        gg[j] += self.grad[i * C + j] * xhat[i * C + j];
            }
            if (nb.requires_grad) {
                auto& gb = nb.grad_buffer();
                for (std::size_t i = 0; i < R; ++i)
                    for (std::size_t j = 0; j < C; ++j) gb[j] += self.grad[i * C + j];
            }
        });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
    require_matrix(x, "l2_normalize_rows");
    const std::size_t R = x.rows(), C = x.cols();
    const auto v = x.data();
    std::vector<double> out(R * C), inv_norm(R);
    for (std::size_t i = 0; i < R; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < C; ++j) ss += v[i * C + j] * v[i * C + j];
        inv_norm[i] = 1.0 / std::max(std::sqrt(ss), eps);
        for (std::size_t j = 0; j < C; ++j) out[i * C + j] = v[i * C + j] * inv_norm[i];
    }
    const bool track = any_requires_grad({&x});
    return make_output(x.shape(), std::move(out), {x.node()}, track,
                       [R, C, inv_norm = std::move(inv_norm)](Node& self) {
                           auto& g = self.inputs[0]->grad_buffer();
                           const auto y = self.values();
                           for (std::size_t i = 0; i < R; ++i) {
                               double dot = 0.0;
                               for (std::size_t j = 0; j < C; ++j)
                                   dot += self.grad[i * C + j] * y[i * C + j];
                               for (std::size_t j = 0; j < C; ++j)
                                   g[i * C + j] +=
                                       inv_norm[i] * (self.grad[i * C + j] - y[i * C + j] * dot);
                           }
                       });
}

// ---- structural ----

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ContractError("concat_rows: no inputs");
    const std::size_t C = parts[0].cols();
    std::size_t R = 0;
    std::vector<NodePtr> inputs;
    bool track = false;
    for (const Tensor& p : parts) {
        require_matrix(p, "concat_rows");
        if (p.cols() != C)
            throw DimensionError("concat_rows: width mismatch " + std::to_string(p.cols()) +
                                 " vs " + std::to_string(C));
        R += p.rows();
        inputs.push_back(p.node());
        track = track || any_requires_grad({&p});
    }
    std::vector<double> out;
    out.reserve(R * C);
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return make_output(matrix_shape(R, C), std::move(out), std::move(inputs), track, [](Node& self) {
        std::size_t offset = 0;
        for (auto& in : self.inputs) {
            const std::size_t n = in->value->size();
            if (in->requires_grad) in->accumulate(std::span<const double>(self.grad).subspan(offset, n));
            offset += n;
        }
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const std::size_t R = parts[0].rows();
    std::size_t C = 0;
    std::vector<NodePtr> inputs;
    std::vector<std::size_t> widths;
    bool track = false;
    for (const Tensor& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.rows() != R)
            throw DimensionError("concat_cols: height mismatch " + std::to_string(p.rows()) +
                                 " vs " + std::to_string(R));
        C += p.cols();
        widths.push_back(p.cols());
        inputs.push_back(p.node());
        track = track || any_requires_grad({&p});
    }
    std::vector<double> out(R * C);
    std::size_t col0 = 0;
    for (const Tensor& p : parts) {
        const std::size_t w = p.cols();
        const auto v = p.data();
        for (std::size_t i = 0; i < R; ++i)
            std::copy_n(v.data() + i * w, w, out.data() + i * C + col0);
        col0 += w;
    }
    return make_output(matrix_shape(R, C), std::move(out), std::move(inputs), track,
                       [R, C, widths = std::move(widths)](Node& self) {
                           std::size_t col0 = 0;
                           for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                               Node& in = *self.inputs[p];
                               const std::size_t w = widths[p];
                               if (in.requires_grad) {
                                   auto& g = in.grad_buffer();
                                   for (std::size_t i = 0; i < R; ++i)
                                       for (std::size_t j = 0; j < w; ++j)
                                           g[i * w + j] += self.grad[i * C + col0 + j];
                               }
                               col0 += w;
                           }
                       });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    require_matrix(x, "slice_rows");
    const std::size_t C = x.cols();
    if (begin >= end || end > x.rows())
        throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," +
                             std::to_string(end) + ") outside " + std::to_string(x.rows()) + " rows");
    const auto v = x.data();
    std::vector<double> out(v.begin() + begin * C, v.begin() + end * C);
    const bool track = any_requires_grad({&x});
    return make_output(matrix_shape(end - begin, C), std::move(out), {x.node()}, track,
                       [begin, C](Node& self) {
                           auto& g = self.inputs[0]->grad_buffer();
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                               g[begin * C + i] += self.grad[i];
                       });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    require_matrix(x, "slice_cols");
    const std::size_t R = x.rows(), C = x.cols();
    if (begin >= end || end > C)
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," +
                             std::to_string(end) + ") outside " + std::to_string(C) + " cols");
    const std::size_t w = end - begin;
    const auto v = x.data();
    std::vector<double> out(R * w);
    for (std::size_t i = 0; i < R; ++i) std::copy_n(v.data() + i * C + begin, w, out.data() + i * w);
    const bool track = any_requires_grad({&x});
    return make_output(matrix_shape(R, w), std::move(out), {x.node()}, track,
                       [R, C, w, begin](Node& self) {
                           auto& g = self.inputs[0]->grad_buffer();
                           for (std::size_t i = 0; i < R; ++i)
                               for (std::size_t j = 0; j < w; ++j)
                                   g[i * C + begin + j] += self.grad[i * w + j];
                       });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
    require_matrix(table, "gather_rows");
    if (ids.empty()) throw ContractError("gather_rows: no ids");
    const std::size_t V = table.rows(), C = table.cols();
    const auto v = table.data();
    std::vector<double> out(ids.size() * C);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= V)
            throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " >= " +
                                 std::to_string(V));
        std::copy_n(v.data() + ids[i] * C, C, out.data() + i * C);
    }
    const bool track = any_requires_grad({&table});
    return make_output(matrix_shape(ids.size(), C), std::move(out), {table.node()}, track,
                       [C, ids = std::vector<std::size_t>(ids.begin(), ids.end())](Node& self) {
                           auto& g = self.inputs[0]->grad_buffer();
                           for (std::size_t i = 0; i < ids.size(); ++i)
                               for (std::size_t j = 0; j < C; ++j)
                                   g[ids[i] * C + j] += self.grad[i * C + j];
                       });
}

Tensor element(const Tensor& x, std::size_t r, std::size_t c) {
    require_matrix(x, "element");
    if (r >= x.rows() || c >= x.cols())
        throw DimensionError("element: index (" + std::to_string(r) + "," + std::to_string(c) +
                             ") outside " + shape_str(x.shape()));
    const std::size_t idx = r * x.cols() + c;
    const bool track = any_requires_grad({&x});
    return make_output({}, {x.data()[idx]}, {x.node()}, track, [idx](Node& self) {
        self.inputs[0]->grad_buffer()[idx] += self.grad[0];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    std::vector<double> out(x.data().begin(), x.data().end());
    const bool track = any_requires_grad({&x});
    return make_output(std::move(shape), std::move(out), {x.node()}, track,
                       [](Node& self) { self.inputs[0]->accumulate(self.grad); });
}

}  // namespace yoro
