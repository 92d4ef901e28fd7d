#ifndef SRM_TENSOR_HPP
#define SRM_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "srm/common.hpp"
#include "srm/rng.hpp"

namespace srm {

// Dense N-dimensional tensor of 64-bit floats with reverse-mode autodiff.
// Values are immutable once an op has produced them; gradients accumulate
// into leaf tensors across backward calls until zero_grad.

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily, only when requires_grad
    bool requires_grad = false;
    bool leaf = true;  // created by the user rather than produced by an op
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from_data(std::move(shape), {}, requires_grad, 0.0);
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        return from_data(std::move(shape), {}, requires_grad, v);
    }

    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
        require(numel(shape) == data.size(),
                "tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<TensorNode>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

    static Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false) {
        std::vector<double> d(numel(shape));
        for (double& x : d) x = rng.uniform(lo, hi);
        return from(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor rand_normal(Shape shape, Rng& rng, double mean, double sigma, bool requires_grad = false) {
        std::vector<double> d(numel(shape));
        for (double& x : d) x = rng.normal(mean, sigma);
        return from(std::move(shape), std::move(d), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t ndim() const { return node_->shape.size(); }

    double* data() { return node_->value.data(); }
    const double* data() const { return node_->value.data(); }
    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool rg) {
        node_->requires_grad = rg;
        if (!rg) node_->grad.clear();
    }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    std::vector<double>& grad() {
        ensure_grad();
        return node_->grad;
    }
    const std::vector<double>& grad() const { return node_->grad; }

    void ensure_grad() {
        if (node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), 0.0);
    }

    void zero_grad() {
        if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    double item() const {
        require(size() == 1, "item() requires a scalar tensor, got shape " + shape_str(shape()));
        return node_->value[0];
    }

    bool leaf() const { return node_->leaf; }
    void mark_as_op_output() { node_->leaf = false; }

    TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    static Tensor from_data(Shape shape, std::vector<double>, bool requires_grad, double fill) {
        Tensor t;
        t.node_ = std::make_shared<TensorNode>();
        std::size_t n = numel(shape);
        t.node_->shape = std::move(shape);
        t.node_->value.assign(n, fill);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    std::shared_ptr<TensorNode> node_;
};

// Recorded operation list. Backward replays in exact reverse recording order;
// intermediate (non-leaf) grads are reset per backward call so leaf grads
// accumulate PyTorch-style.
class Tape {
public:
    struct Node {
        std::vector<Tensor> inputs;
        Tensor output;
        std::function<void()> backward;
    };

    static Tape& active() {
        static thread_local Tape tape;
        return tape;
    }

    bool recording() const { return no_grad_depth_ == 0; }

    void record(std::vector<Tensor> inputs, const Tensor& output, std::function<void()> backward) {
        nodes_.push_back(Node{std::move(inputs), output, std::move(backward)});
    }

    void backward(const Tensor& loss) {
        require(loss.size() == 1, "backward requires a scalar loss, got shape " + shape_str(loss.shape()));
        if (!loss.requires_grad()) {
            throw std::runtime_error("backward: loss does not require grad (no graph recorded)");
        }
        // Reset every op output so intermediates start clean; leaves keep
        // whatever they have accumulated.
        for (Node& n : nodes_) {
            if (n.output.requires_grad()) {
                n.output.ensure_grad();
                if (!n.output.leaf()) n.output.zero_grad();
            }
        }
        Tensor seed = loss;
        seed.ensure_grad();
        seed.grad()[0] += 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].backward) nodes_[i].backward();
        }
    }

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

    void push_no_grad() { ++no_grad_depth_; }
    void pop_no_grad() { --no_grad_depth_; }

private:
    std::vector<Node> nodes_;
    int no_grad_depth_ = 0;
};

struct NoGradGuard {
    NoGradGuard() { Tape::active().push_no_grad(); }
    ~NoGradGuard() { Tape::active().pop_no_grad(); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

inline void finalize_op(const char* name, std::vector<Tensor> inputs, Tensor& out,
                        std::function<void()> backward) {
    if (finite_checks()) check_finite_buffer(out.values(), name);
    bool needs_grad = false;
    for (const Tensor& t : inputs) {
        if (t.requires_grad()) {
            needs_grad = true;
            break;
        }
    }
    if (needs_grad && Tape::active().recording()) {
        out.set_requires_grad(true);
        out.mark_as_op_output();
        Tape::active().record(std::move(inputs), out, std::move(backward));
    }
}

inline void accum(Tensor& t, std::size_t i, double g) {
    if (t.requires_grad()) t.grad()[i] += g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <class F, class Dfdx>
Tensor unary_op(const char* name, const Tensor& a, F f, Dfdx dfdx) {
    Tensor out = Tensor::zeros(a.shape());
    const double* x = a.data();
    double* y = out.data();
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
    Tensor in = a, o = out;
    detail::finalize_op(name, {a}, out, [in, o, dfdx]() mutable {
        if (!in.requires_grad()) return;
        const double* x = in.data();
        const double* gy = o.grad().data();
        double* gx = in.grad().data();
        const std::size_t n = in.size();
        for (std::size_t i = 0; i < n; ++i) gx[i] += dfdx(x[i]) * gy[i];
    });
    return out;
}

inline double sigmoid_val(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

inline double softplus_val(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

inline Tensor relu(const Tensor& a) {
    return unary_op(
        "relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

inline Tensor silu(const Tensor& a) {
    return unary_op(
        "silu", a, [](double x) { return x * sigmoid_val(x); },
        [](double x) {
            double s = sigmoid_val(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

inline Tensor softplus(const Tensor& a) {
    return unary_op(
        "softplus", a, [](double x) { return softplus_val(x); }, [](double x) { return sigmoid_val(x); });
}

inline Tensor sigmoid(const Tensor& a) {
    return unary_op(
        "sigmoid", a, [](double x) { return sigmoid_val(x); },
        [](double x) {
            double s = sigmoid_val(x);
            return s * (1.0 - s);
        });
}

inline Tensor exp_op(const Tensor& a) {
    return unary_op(
        "exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

inline Tensor neg(const Tensor& a) {
    return unary_op(
        "neg", a, [](double x) { return -x; }, [](double) { return -1.0; });
}

inline Tensor scale(const Tensor& a, double c) {
    return unary_op(
        "scale", a, [c](double x) { return c * x; }, [c](double) { return c; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    return unary_op(
        "add_scalar", a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Elementwise binary ops with leading-axis broadcast
// ---------------------------------------------------------------------------
// b may equal a's shape, or, after left-padding b's shape with singleton
// axes, every non-singleton axis must match a's trailing axes exactly.
// Under that rule b's flat index is simply out_index % numel(b).

inline void check_broadcast(const Shape& a, const Shape& b) {
    require(b.size() <= a.size(), "broadcast: rhs rank exceeds lhs rank (" + shape_str(a) + " vs " + shape_str(b) + ")");
    Shape padded(a.size(), 1);
    std::copy(b.begin(), b.end(), padded.begin() + static_cast<std::ptrdiff_t>(a.size() - b.size()));
    bool seen_non_one = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (padded[i] != 1) seen_non_one = true;
        if (seen_non_one) {
            require(padded[i] == a[i],
                    "broadcast limited to leading singleton axes: " + shape_str(a) + " vs " + shape_str(b));
        }
    }
}

template <class F, class DfdA, class DfdB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DfdA dfda, DfdB dfdb) {
    check_broadcast(a.shape(), b.shape());
    Tensor out = Tensor::zeros(a.shape());
    const double* xa = a.data();
    const double* xb = b.data();
    double* y = out.data();
    const std::size_t n = a.size();
    const std::size_t nb = b.size();
    for (std::size_t i = 0; i < n; ++i) y[i] = f(xa[i], xb[i % nb]);
    Tensor ta = a, tb = b, o = out;
    detail::finalize_op(name, {a, b}, out, [ta, tb, o, dfda, dfdb]() mutable {
        const double* xa = ta.data();
        const double* xb = tb.data();
        const double* gy = o.grad().data();
        const std::size_t n = ta.size();
        const std::size_t nb = tb.size();
        if (ta.requires_grad()) {
            double* ga = ta.grad().data();
            for (std::size_t i = 0; i < n; ++i) ga[i] += dfda(xa[i], xb[i % nb]) * gy[i];
        }
        if (tb.requires_grad()) {
            double* gb = tb.grad().data();
            for (std::size_t i = 0; i < n; ++i) gb[i % nb] += dfdb(xa[i], xb[i % nb]) * gy[i];
        }
    });
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape new_shape) {
    require(numel(new_shape) == a.size(),
            "reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(new_shape));
    Tensor out = Tensor::from(std::move(new_shape), a.values());
    Tensor in = a, o = out;
    detail::finalize_op("reshape", {a}, out, [in, o]() mutable {
        if (!in.requires_grad()) return;
        const double* gy = o.grad().data();
        double* gx = in.grad().data();
        const std::size_t n = in.size();
        for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i];
    });
    return out;
}

namespace detail {

inline bool is_permutation_of_axes(const std::vector<std::size_t>& perm, std::size_t rank) {
    if (perm.size() != rank) return false;
    std::vector<bool> seen(rank, false);
    for (std::size_t p : perm) {
        if (p >= rank || seen[p]) return false;
        seen[p] = true;
    }
    return true;
}

// out[i_0,...,i_{r-1}] = in[i affected by perm]: out axis k draws from in axis perm[k].
inline void permute_copy(const double* src, double* dst, const Shape& in_shape,
                         const std::vector<std::size_t>& perm) {
    const std::size_t rank = in_shape.size();
    Shape out_shape(rank);
    for (std::size_t k = 0; k < rank; ++k) out_shape[k] = in_shape[perm[k]];
    const auto in_strides = row_major_strides(in_shape);
    std::vector<std::size_t> gather_strides(rank);
    for (std::size_t k = 0; k < rank; ++k) gather_strides[k] = in_strides[perm[k]];
    const std::size_t n = numel(in_shape);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src_off = 0;
    for (std::size_t i = 0; i < n; ++i) {
        dst[i] = src[src_off];
        for (std::size_t k = rank; k-- > 0;) {
            ++idx[k];
            src_off += gather_strides[k];
            if (idx[k] < out_shape[k]) break;
            src_off -= gather_strides[k] * out_shape[k];
            idx[k] = 0;
        }
    }
}

}  // namespace detail

inline Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
    require(detail::is_permutation_of_axes(perm, a.ndim()),
            "permute: invalid axis order for rank " + std::to_string(a.ndim()));
    Shape out_shape(a.ndim());
    for (std::size_t k = 0; k < perm.size(); ++k) out_shape[k] = a.shape()[perm[k]];
    Tensor out = Tensor::zeros(out_shape);
    detail::permute_copy(a.data(), out.data(), a.shape(), perm);
    Tensor in = a, o = out;
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
    detail::finalize_op("permute", {a}, out, [in, o, inv]() mutable {
        if (!in.requires_grad()) return;
        // Route grads through the inverse permutation, accumulating.
        std::vector<double> tmp(in.size());
        detail::permute_copy(o.grad().data(), tmp.data(), o.shape(), inv);
        double* gx = in.grad().data();
        for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
    });
    return out;
}

inline Tensor flip(const Tensor& a, std::size_t axis) {
    require(axis < a.ndim(), "flip: axis out of range");
    const auto strides = row_major_strides(a.shape());
    const std::size_t outer = axis == 0 ? 1 : numel(Shape(a.shape().begin(), a.shape().begin() + static_cast<std::ptrdiff_t>(axis)));
    const std::size_t len = a.shape()[axis];
    const std::size_t inner = strides[axis];
    Tensor out = Tensor::zeros(a.shape());
    const double* x = a.data();
    double* y = out.data();
    for (std::size_t ou = 0; ou < outer; ++ou) {
        for (std::size_t j = 0; j < len; ++j) {
            const double* src = x + (ou * len + j) * inner;
            double* dst = y + (ou * len + (len - 1 - j)) * inner;
            for (std::size_t k = 0; k < inner; ++k) dst[k] = src[k];
        }
    }
    Tensor in = a, o = out;
    detail::finalize_op("flip", {a}, out, [in, o, outer, len, inner]() mutable {
        if (!in.requires_grad()) return;
        const double* gy = o.grad().data();
        double* gx = in.grad().data();
        for (std::size_t ou = 0; ou < outer; ++ou) {
            for (std::size_t j = 0; j < len; ++j) {
                const double* src = gy + (ou * len + (len - 1 - j)) * inner;
                double* dst = gx + (ou * len + j) * inner;
                for (std::size_t k = 0; k < inner; ++k) dst[k] += src[k];
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    Tensor out = Tensor::scalar(s);
    Tensor in = a, o = out;
    detail::finalize_op("sum", {a}, out, [in, o]() mutable {
        if (!in.requires_grad()) return;
        const double g = o.grad()[0];
        double* gx = in.grad().data();
        const std::size_t n = in.size();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
    return out;
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// Sum over the last axis of a rank-2 tensor: [R, C] -> [R].
inline Tensor rowsum(const Tensor& a) {
    require(a.ndim() == 2, "rowsum expects a rank-2 tensor, got " + shape_str(a.shape()));
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    Tensor out = Tensor::zeros({rows});
    const double* x = a.data();
    double* y = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += x[r * cols + c];
        y[r] = s;
    }
    Tensor in = a, o = out;
    detail::finalize_op("rowsum", {a}, out, [in, o, rows, cols]() mutable {
        if (!in.requires_grad()) return;
        const double* gy = o.grad().data();
        double* gx = in.grad().data();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += gy[r];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.ndim() == 2 && b.ndim() == 2, "matmul expects rank-2 operands");
    require(a.shape()[1] == b.shape()[0],
            "matmul inner dims mismatch: " + shape_str(a.shape()) + " @ " + shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out = Tensor::zeros({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = pa[i * k + kk];
            const double* brow = pb + kk * n;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    Tensor ta = a, tb = b, o = out;
    detail::finalize_op("matmul", {a, b}, out, [ta, tb, o, m, k, n]() mutable {
        const double* gy = o.grad().data();
        if (ta.requires_grad()) {
            double* ga = ta.grad().data();
            const double* pb = tb.data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t kk = 0; kk < k; ++kk) {
                    double s = 0.0;
                    const double* brow = pb + kk * n;
                    const double* grow = gy + i * n;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ga[i * k + kk] += s;
                }
            }
        }
        if (tb.requires_grad()) {
            double* gb = tb.grad().data();
            const double* pa = ta.data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = gy + i * n;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double aik = pa[i * k + kk];
                    double* gbrow = gb + kk * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
                }
            }
        }
    });
    return out;
}

// x[..., A] @ w[A, B] (+ bias[B]): applied to the last axis, leading axes kept.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor()) {
    require(w.ndim() == 2, "linear: weight must be rank-2");
    const std::size_t in_features = w.shape()[0], out_features = w.shape()[1];
    require(x.ndim() >= 1 && x.shape().back() == in_features,
            "linear: input last axis " + shape_str(x.shape()) + " must equal weight rows " + std::to_string(in_features));
    const std::size_t rows = x.size() / in_features;
    Shape out_shape = x.shape();
    out_shape.back() = out_features;
    Tensor out = Tensor::zeros(out_shape);
    const double* px = x.data();
    const double* pw = w.data();
    double* py = out.data();
    if (bias.defined()) {
        require(bias.shape() == Shape{out_features}, "linear: bias shape mismatch");
        const double* pbias = bias.data();
        for (std::size_t r = 0; r < rows; ++r) {
            double* yrow = py + r * out_features;
            for (std::size_t j = 0; j < out_features; ++j) yrow[j] = pbias[j];
        }
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xrow = px + r * in_features;
        double* yrow = py + r * out_features;
        for (std::size_t a = 0; a < in_features; ++a) {
            const double xv = xrow[a];
            const double* wrow = pw + a * out_features;
            for (std::size_t j = 0; j < out_features; ++j) yrow[j] += xv * wrow[j];
        }
    }
    Tensor tx = x, tw = w, tbias = bias, o = out;
    std::vector<Tensor> inputs = bias.defined() ? std::vector<Tensor>{x, w, bias} : std::vector<Tensor>{x, w};
    detail::finalize_op("linear", std::move(inputs), out, [tx, tw, tbias, o, rows, in_features, out_features]() mutable {
        const double* gy = o.grad().data();
        if (tx.requires_grad()) {
            double* gx = tx.grad().data();
            const double* pw = tw.data();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* grow = gy + r * out_features;
                double* gxrow = gx + r * in_features;
                for (std::size_t a = 0; a < in_features; ++a) {
                    double s = 0.0;
                    const double* wrow = pw + a * out_features;
                    for (std::size_t j = 0; j < out_features; ++j) s += grow[j] * wrow[j];
                    gxrow[a] += s;
                }
            }
        }
        if (tw.requires_grad()) {
            double* gw = tw.grad().data();
            const double* px = tx.data();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* xrow = px + r * in_features;
                const double* grow = gy + r * out_features;
                for (std::size_t a = 0; a < in_features; ++a) {
                    const double xv = xrow[a];
                    double* gwrow = gw + a * out_features;
                    for (std::size_t j = 0; j < out_features; ++j) gwrow[j] += xv * grow[j];
                }
            }
        }
        if (tbias.defined() && tbias.requires_grad()) {
            double* gb = tbias.grad().data();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* grow = gy + r * out_features;
                for (std::size_t j = 0; j < out_features; ++j) gb[j] += grow[j];
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Softmax along an axis
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& a, std::size_t axis) {
    require(axis < a.ndim(), "softmax: axis out of range");
    const std::size_t k = a.shape()[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
    for (std::size_t i = axis + 1; i < a.ndim(); ++i) inner *= a.shape()[i];
    Tensor out = Tensor::zeros(a.shape());
    const double* x = a.data();
    double* y = out.data();
    for (std::size_t ou = 0; ou < outer; ++ou) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = ou * k * inner + in;
            double mx = x[base];
            for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, x[base + c * inner]);
            double denom = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const double e = std::exp(x[base + c * inner] - mx);
                y[base + c * inner] = e;
                denom += e;
            }
            const double invd = 1.0 / denom;
            for (std::size_t c = 0; c < k; ++c) y[base + c * inner] *= invd;
        }
    }
    Tensor in_t = a, o = out;
    detail::finalize_op("softmax", {a}, out, [in_t, o, outer, inner, k]() mutable {
        if (!in_t.requires_grad()) return;
        const double* p = o.data();
        const double* gy = o.grad().data();
        double* gx = in_t.grad().data();
        for (std::size_t ou = 0; ou < outer; ++ou) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = ou * k * inner + in;
                double dot = 0.0;
                for (std::size_t c = 0; c < k; ++c) dot += gy[base + c * inner] * p[base + c * inner];
                for (std::size_t c = 0; c < k; ++c) {
                    const std::size_t idx = base + c * inner;
                    gx[idx] += p[idx] * (gy[idx] - dot);
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Batch-axis slicing and stacking
// ---------------------------------------------------------------------------

inline Tensor slice_first(const Tensor& a, std::size_t i) {
    require(a.ndim() >= 1 && i < a.shape()[0], "slice_first: index out of range");
    Shape out_shape(a.shape().begin() + 1, a.shape().end());
    if (out_shape.empty()) out_shape = {1};
    const std::size_t chunk = a.size() / a.shape()[0];
    std::vector<double> d(a.values().begin() + static_cast<std::ptrdiff_t>(i * chunk),
                          a.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * chunk));
    Tensor out = Tensor::from(out_shape, std::move(d));
    Tensor in = a, o = out;
    detail::finalize_op("slice_first", {a}, out, [in, o, i, chunk]() mutable {
        if (!in.requires_grad()) return;
        const double* gy = o.grad().data();
        double* gx = in.grad().data() + i * chunk;
        for (std::size_t j = 0; j < chunk; ++j) gx[j] += gy[j];
    });
    return out;
}

inline Tensor stack_first(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "stack_first: need at least one tensor");
    const Shape& part_shape = parts[0].shape();
    for (const Tensor& t : parts) {
        require(t.shape() == part_shape, "stack_first: all parts must share a shape");
    }
    Shape out_shape;
    out_shape.push_back(parts.size());
    out_shape.insert(out_shape.end(), part_shape.begin(), part_shape.end());
    Tensor out = Tensor::zeros(out_shape);
    const std::size_t chunk = parts[0].size();
    for (std::size_t i = 0; i < parts.size(); ++i) {
        std::copy(parts[i].values().begin(), parts[i].values().end(), out.data() + i * chunk);
    }
    std::vector<Tensor> ins = parts;
    Tensor o = out;
    detail::finalize_op("stack_first", parts, out, [ins, o, chunk]() mutable {
        const double* gy = o.grad().data();
        for (std::size_t i = 0; i < ins.size(); ++i) {
            if (!ins[i].requires_grad()) continue;
            double* gx = ins[i].grad().data();
            const double* src = gy + i * chunk;
            for (std::size_t j = 0; j < chunk; ++j) gx[j] += src[j];
        }
    });
    return out;
}

}  // namespace srm

#endif  // SRM_TENSOR_HPP
