#include "fmae/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "fmae/kernels.hpp"

namespace fmae {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

namespace {

std::shared_ptr<TensorNode> make_node(Shape shape, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    for (int d : shape)
        if (d <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape));
    n->shape = std::move(shape);
    n->data.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
    n->requires_grad = requires_grad;
    return n;
}

inline void ensure_grad(const std::shared_ptr<TensorNode>& n) {
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
}

// Output grad pointer, or nullptr if no gradient ever reached this node.
inline const double* out_grad(const std::shared_ptr<TensorNode>& n) {
    return n->grad.empty() ? nullptr : n->grad.data();
}

inline bool track(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    Tensor t;
    t.node_ = make_node(std::move(shape), requires_grad);
    return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.node_->data) v = value;
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    Tensor t = zeros(std::move(shape), requires_grad);
    t.node_->data = std::move(data);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

double* Tensor::grad() {
    ensure_grad(node_);
    return node_->grad.data();
}

const std::vector<double>& Tensor::grad_vec() const {
    if (node_->grad.empty())
        throw ContractError("gradient requested before any backward pass reached this tensor");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1)
        throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape()));
    return node_->data[0];
}

Tensor Tensor::clone() const {
    return Tensor::from_data(shape(), node_->data, node_->requires_grad);
}

void backward(const Tensor& loss, Tape& tape) {
    if (loss.numel() != 1)
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    loss.node()->grad.resize(1, 0.0);
    loss.node()->grad[0] += 1.0;
    tape.replay_backward();
}

// ---------------------------------------------------------------------------
// op helpers
// ---------------------------------------------------------------------------

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

using Node = std::shared_ptr<TensorNode>;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n}, a.requires_grad() || b.requires_grad());
    kernels::matmul_acc(a.data(), b.data(), out.data(), m, k, n);
    if (track(tape, {&a, &b})) {
        Node an = a.node(), bn = b.node(), on = out.node();
        tape->record([an, bn, on, m, k, n] {
            const double* dy = out_grad(on);
            if (!dy) return;
            if (an->requires_grad) {
                ensure_grad(an);
                kernels::matmul_nt_acc(dy, bn->data.data(), an->grad.data(), m, k, n);
            }
            if (bn->requires_grad) {
                ensure_grad(bn);
                kernels::matmul_tn_acc(an->data.data(), dy, bn->grad.data(), m, k, n);
            }
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, Tape* tape) {
    if (w.ndim() != 2 || x.ndim() != 1 || w.dim(1) != x.dim(0))
        throw ShapeError("linear: incompatible shapes W" + shape_str(w.shape()) + " and x" +
                         shape_str(x.shape()));
    const int m = w.dim(0), k = w.dim(1);
    Tensor out = Tensor::zeros({m}, x.requires_grad() || w.requires_grad());
    kernels::matmul_acc(w.data(), x.data(), out.data(), m, k, 1);
    if (track(tape, {&x, &w})) {
        Node xn = x.node(), wn = w.node(), on = out.node();
        tape->record([xn, wn, on, m, k] {
            const double* dy = out_grad(on);
            if (!dy) return;
            if (wn->requires_grad) {
                ensure_grad(wn);
                kernels::matmul_acc(dy, xn->data.data(), wn->grad.data(), m, 1, k);
            }
            if (xn->requires_grad) {
                ensure_grad(xn);
                kernels::matmul_tn_acc(wn->data.data(), dy, xn->grad.data(), m, k, 1);
            }
        });
    }
    return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape) {
    if (b.ndim() != 1 || b.dim(0) != w.dim(0))
        throw ShapeError("affine: bias " + shape_str(b.shape()) + " does not match W " +
                         shape_str(w.shape()));
    return add(linear(x, w, tape), b, tape);
}

Tensor activation(const Tensor& x, Activation kind, Tape* tape) {
    const size_t n = static_cast<size_t>(x.numel());
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
    const double* xs = x.data();
    double* ys = out.data();
    switch (kind) {
        case Activation::Sigmoid:
            for (size_t i = 0; i < n; ++i) {
                const double v = xs[i];
                // Overflow-safe on both tails.
                ys[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                 : std::exp(v) / (1.0 + std::exp(v));
            }
            break;
        case Activation::Tanh:
            for (size_t i = 0; i < n; ++i) ys[i] = std::tanh(xs[i]);
            break;
        case Activation::Relu:
            for (size_t i = 0; i < n; ++i) ys[i] = xs[i] > 0.0 ? xs[i] : 0.0;
            break;
    }
    if (track(tape, {&x})) {
        Node xn = x.node(), on = out.node();
        tape->record([xn, on, kind, n] {
            const double* dy = out_grad(on);
            if (!dy) return;
            ensure_grad(xn);
            double* dx = xn->grad.data();
            const double* y = on->data.data();
            const double* xv = xn->data.data();
            switch (kind) {
                case Activation::Sigmoid:
                    for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
                    break;
                case Activation::Tanh:
                    for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
                    break;
                case Activation::Relu:
                    for (size_t i = 0; i < n; ++i) dx[i] += xv[i] > 0.0 ? dy[i] : 0.0;
                    break;
            }
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& x, Tape* tape) { return activation(x, Activation::Sigmoid, tape); }
Tensor tanh_op(const Tensor& x, Tape* tape) { return activation(x, Activation::Tanh, tape); }
Tensor relu(const Tensor& x, Tape* tape) { return activation(x, Activation::Relu, tape); }

namespace {

kernels::ConvGeom conv_geom(const Tensor& x, const Tensor& k, int stride, int padding,
                            int output_padding, bool transposed) {
    if (x.ndim() != 3 || k.ndim() != 4)
        throw ShapeError("conv: expected 3-d input and 4-d kernels, got " + shape_str(x.shape()) +
                         " and " + shape_str(k.shape()));
    if (stride < 1) throw ParamError("conv: stride must be >= 1");
    if (padding < 0) throw ParamError("conv: padding must be >= 0");
    kernels::ConvGeom g;
    g.h = x.dim(1);
    g.w = x.dim(2);
    g.kh = k.dim(2);
    g.kw = k.dim(3);
    g.stride = stride;
    g.pad = padding;
    g.out_pad = output_padding;
    if (transposed) {
        g.c_in = k.dim(0);
        g.c_out = k.dim(1);
    } else {
        g.c_out = k.dim(0);
        g.c_in = k.dim(1);
    }
    if (x.dim(0) != g.c_in)
        throw ShapeError("conv: input channels " + shape_str(x.shape()) +
                         " do not match kernels " + shape_str(k.shape()));
    return g;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kern, int stride, int padding, Tape* tape) {
    kernels::ConvGeom g = conv_geom(x, kern, stride, padding, 0, false);
    if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw)
        throw ShapeError("conv2d: kernel " + shape_str(kern.shape()) +
                         " larger than padded input " + shape_str(x.shape()));
    Tensor out = Tensor::zeros({g.c_out, g.conv_out_h(), g.conv_out_w()},
                               x.requires_grad() || kern.requires_grad());
    kernels::conv2d_forward(x.data(), kern.data(), out.data(), g);
    if (track(tape, {&x, &kern})) {
        Node xn = x.node(), kn = kern.node(), on = out.node();
        tape->record([xn, kn, on, g] {
            const double* dy = out_grad(on);
            if (!dy) return;
            if (xn->requires_grad) {
                ensure_grad(xn);
                kernels::conv2d_grad_input(dy, kn->data.data(), xn->grad.data(), g);
            }
            if (kn->requires_grad) {
                ensure_grad(kn);
                kernels::conv2d_grad_kernels(xn->data.data(), dy, kn->grad.data(), g);
            }
        });
    }
    return out;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& kern, int stride, int padding,
                        int output_padding, Tape* tape) {
    if (output_padding < 0 || output_padding >= stride)
        throw ParamError("conv_transpose2d: output_padding " + std::to_string(output_padding) +
                         " must be in [0, stride=" + std::to_string(stride) + ")");
    kernels::ConvGeom g = conv_geom(x, kern, stride, padding, output_padding, true);
    if (g.tconv_out_h() < 1 || g.tconv_out_w() < 1)
        throw ShapeError("conv_transpose2d: empty output for input " + shape_str(x.shape()));
    Tensor out = Tensor::zeros({g.c_out, g.tconv_out_h(), g.tconv_out_w()},
                               x.requires_grad() || kern.requires_grad());
    kernels::tconv2d_forward(x.data(), kern.data(), out.data(), g);
    if (track(tape, {&x, &kern})) {
        Node xn = x.node(), kn = kern.node(), on = out.node();
        tape->record([xn, kn, on, g] {
            const double* dy = out_grad(on);
            if (!dy) return;
            if (xn->requires_grad) {
                ensure_grad(xn);
                kernels::tconv2d_grad_input(dy, kn->data.data(), xn->grad.data(), g);
            }
            if (kn->requires_grad) {
                ensure_grad(kn);
                kernels::tconv2d_grad_kernels(xn->data.data(), dy, kn->grad.data(), g);
            }
        });
    }
    return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias, Tape* tape) {
    if (x.ndim() != 3 || bias.ndim() != 1 || bias.dim(0) != x.dim(0))
        throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) +
                         " does not match input " + shape_str(x.shape()));
    const int c = x.dim(0);
    const size_t plane = static_cast<size_t>(x.dim(1)) * x.dim(2);
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad() || bias.requires_grad());
    const double* xs = x.data();
    const double* bs = bias.data();
    double* ys = out.data();
    for (int ch = 0; ch < c; ++ch)
        for (size_t i = 0; i < plane; ++i) ys[ch * plane + i] = xs[ch * plane + i] + bs[ch];
    if (track(tape, {&x, &bias})) {
        Node xn = x.node(), bn = bias.node(), on = out.node();
        tape->record([xn, bn, on, c, plane] {
            const double* dy = out_grad(on);
            if (!dy) return;
            if (xn->requires_grad) {
                ensure_grad(xn);
                double* dx = xn->grad.data();
                for (size_t i = 0; i < plane * c; ++i) dx[i] += dy[i];
            }
            if (bn->requires_grad) {
                ensure_grad(bn);
                double* db = bn->grad.data();
                for (int ch = 0; ch < c; ++ch) {
                    double acc = 0.0;
                    for (size_t i = 0; i < plane; ++i) acc += dy[ch * plane + i];
                    db[ch] += acc;
                }
            }
        });
    }
    return out;
}

namespace {

// Shared skeleton for same-shape binary elementwise ops.
template <typename Fwd, typename Bwd>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Tape* tape, Fwd fwd,
                 Bwd bwd) {
    check_same_shape(name, a, b);
    const size_t n = static_cast<size_t>(a.numel());
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad() || b.requires_grad());
    fwd(a.data(), b.data(), out.data(), n);
    if (track(tape, {&a, &b})) {
        Node an = a.node(), bn = b.node(), on = out.node();
        tape->record([an, bn, on, n, bwd] {
            const double* dy = out_grad(on);
            if (!dy) return;
            bwd(an, bn, dy, n);
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    return binary_op(
        "add", a, b, tape,
        [](const double* x, const double* y, double* z, size_t n) {
            for (size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
        },
        [](const Node& an, const Node& bn, const double* dy, size_t n) {
            if (an->requires_grad) {
                ensure_grad(an);
                for (size_t i = 0; i < n; ++i) an->grad[i] += dy[i];
            }
            if (bn->requires_grad) {
                ensure_grad(bn);
                for (size_t i = 0; i < n; ++i) bn->grad[i] += dy[i];
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
    return binary_op(
        "sub", a, b, tape,
        [](const double* x, const double* y, double* z, size_t n) {
            for (size_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
        },
        [](const Node& an, const Node& bn, const double* dy, size_t n) {
            if (an->requires_grad) {
                ensure_grad(an);
                for (size_t i = 0; i < n; ++i) an->grad[i] += dy[i];
            }
            if (bn->requires_grad) {
                ensure_grad(bn);
                for (size_t i = 0; i < n; ++i) bn->grad[i] -= dy[i];
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
    return binary_op(
        "mul", a, b, tape,
        [](const double* x, const double* y, double* z, size_t n) {
            for (size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
        },
        [](const Node& an, const Node& bn, const double* dy, size_t n) {
            if (an->requires_grad) {
                ensure_grad(an);
                for (size_t i = 0; i < n; ++i) an->grad[i] += dy[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                ensure_grad(bn);
                for (size_t i = 0; i < n; ++i) bn->grad[i] += dy[i] * an->data[i];
            }
        });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Tape* tape, Fwd fwd, Bwd bwd) {
    const size_t n = static_cast<size_t>(a.numel());
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    fwd(a.data(), out.data(), n);
    if (track(tape, {&a})) {
        Node an = a.node(), on = out.node();
        tape->record([an, on, n, bwd] {
            const double* dy = out_grad(on);
            if (!dy) return;
            ensure_grad(an);
            bwd(an->data.data(), on->data.data(), dy, an->grad.data(), n);
        });
    }
    return out;
}

}  // namespace

Tensor scale(const Tensor& a, double c, Tape* tape) {
    return unary_op(
        a, tape,
        [c](const double* x, double* y, size_t n) {
            for (size_t i = 0; i < n; ++i) y[i] = c * x[i];
        },
        [c](const double*, const double*, const double* dy, double* dx, size_t n) {
            for (size_t i = 0; i < n; ++i) dx[i] += c * dy[i];
        });
}

Tensor add_scalar(const Tensor& a, double c, Tape* tape) {
    return unary_op(
        a, tape,
        [c](const double* x, double* y, size_t n) {
            for (size_t i = 0; i < n; ++i) y[i] = x[i] + c;
        },
        [](const double*, const double*, const double* dy, double* dx, size_t n) {
            for (size_t i = 0; i < n; ++i) dx[i] += dy[i];
        });
}

Tensor rsub_scalar(double c, const Tensor& a, Tape* tape) {
    return unary_op(
        a, tape,
        [c](const double* x, double* y, size_t n) {
            for (size_t i = 0; i < n; ++i) y[i] = c - x[i];
        },
        [](const double*, const double*, const double* dy, double* dx, size_t n) {
            for (size_t i = 0; i < n; ++i) dx[i] -= dy[i];
        });
}

Tensor exp_op(const Tensor& a, Tape* tape) {
    return unary_op(
        a, tape,
        [](const double* x, double* y, size_t n) {
            for (size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
        },
        [](const double*, const double* y, const double* dy, double* dx, size_t n) {
            for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i];
        });
}

Tensor log_op(const Tensor& a, Tape* tape) {
    return unary_op(
        a, tape,
        [](const double* x, double* y, size_t n) {
            for (size_t i = 0; i < n; ++i) y[i] = std::log(x[i]);
        },
        [](const double* x, const double*, const double* dy, double* dx, size_t n) {
            for (size_t i = 0; i < n; ++i) dx[i] += dy[i] / x[i];
        });
}

Tensor clamp(const Tensor& a, double lo, double hi, Tape* tape) {
    return unary_op(
        a, tape,
        [lo, hi](const double* x, double* y, size_t n) {
            for (size_t i = 0; i < n; ++i) y[i] = x[i] < lo ? lo : (x[i] > hi ? hi : x[i]);
        },
        [lo, hi](const double* x, const double*, const double* dy, double* dx, size_t n) {
            for (size_t i = 0; i < n; ++i)
                if (x[i] > lo && x[i] < hi) dx[i] += dy[i];
        });
}

Tensor sum(const Tensor& a, Tape* tape) {
    const size_t n = static_cast<size_t>(a.numel());
    double acc = 0.0;
    const double* xs = a.data();
    for (size_t i = 0; i < n; ++i) acc += xs[i];
    Tensor out = Tensor::from_data({1}, {acc}, a.requires_grad());
    if (track(tape, {&a})) {
        Node an = a.node(), on = out.node();
        tape->record([an, on, n] {
            const double* dy = out_grad(on);
            if (!dy) return;
            ensure_grad(an);
            for (size_t i = 0; i < n; ++i) an->grad[i] += dy[0];
        });
    }
    return out;
}

Tensor reshape(const Tensor& a, Shape new_shape, Tape* tape) {
    if (shape_numel(new_shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(new_shape));
    Tensor out = Tensor::from_data(std::move(new_shape), a.vec(), a.requires_grad());
    if (track(tape, {&a})) {
        Node an = a.node(), on = out.node();
        tape->record([an, on] {
            const double* dy = out_grad(on);
            if (!dy) return;
            ensure_grad(an);
            for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += dy[i];
        });
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, Tape* tape) {
    if (parts.empty()) throw ParamError("concat: no inputs");
    int total = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        if (p.ndim() != 1)
            throw ShapeError("concat: expected 1-d parts, got " + shape_str(p.shape()));
        total += p.dim(0);
        rg = rg || p.requires_grad();
    }
    Tensor out = Tensor::zeros({total}, rg);
    double* ys = out.data();
    int off = 0;
    for (const Tensor& p : parts) {
        std::memcpy(ys + off, p.data(), sizeof(double) * p.numel());
        off += p.dim(0);
    }
    if (tape && rg) {
        std::vector<Node> ins;
        for (const Tensor& p : parts) ins.push_back(p.node());
        Node on = out.node();
        tape->record([ins, on] {
            const double* dy = out_grad(on);
            if (!dy) return;
            size_t off = 0;
            for (const Node& in : ins) {
                if (in->requires_grad) {
                    ensure_grad(in);
                    for (size_t i = 0; i < in->data.size(); ++i) in->grad[i] += dy[off + i];
                }
                off += in->data.size();
            }
        });
    }
    return out;
}

Tensor row(const Tensor& m, int i, Tape* tape) {
    if (m.ndim() != 2) throw ShapeError("row: expected a matrix, got " + shape_str(m.shape()));
    if (i < 0 || i >= m.dim(0))
        throw ParamError("row: index " + std::to_string(i) + " out of range for " +
                         shape_str(m.shape()));
    const int n = m.dim(1);
    Tensor out = Tensor::zeros({n}, m.requires_grad());
    std::memcpy(out.data(), m.data() + static_cast<size_t>(i) * n, sizeof(double) * n);
    if (track(tape, {&m})) {
        Node mn = m.node(), on = out.node();
        tape->record([mn, on, i, n] {
            const double* dy = out_grad(on);
            if (!dy) return;
            ensure_grad(mn);
            for (int j = 0; j < n; ++j) mn->grad[static_cast<size_t>(i) * n + j] += dy[j];
        });
    }
    return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows, Tape* tape) {
    if (rows.empty()) throw ParamError("stack_rows: no inputs");
    const int n = rows[0].dim(0);
    bool rg = false;
    for (const Tensor& r : rows) {
        if (r.ndim() != 1 || r.dim(0) != n)
            throw ShapeError("stack_rows: inconsistent row shape " + shape_str(r.shape()));
        rg = rg || r.requires_grad();
    }
    const int t = static_cast<int>(rows.size());
    Tensor out = Tensor::zeros({t, n}, rg);
    for (int i = 0; i < t; ++i)
        std::memcpy(out.data() + static_cast<size_t>(i) * n, rows[i].data(), sizeof(double) * n);
    if (tape && rg) {
        std::vector<Node> ins;
        for (const Tensor& r : rows) ins.push_back(r.node());
        Node on = out.node();
        tape->record([ins, on, n] {
            const double* dy = out_grad(on);
            if (!dy) return;
            for (size_t i = 0; i < ins.size(); ++i) {
                if (!ins[i]->requires_grad) continue;
                ensure_grad(ins[i]);
                for (int j = 0; j < n; ++j) ins[i]->grad[j] += dy[i * n + j];
            }
        });
    }
    return out;
}

std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmParams& p, Tape* tape) {
    auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b, Activation act) {
        return activation(add(affine(x, w, b, tape), linear(h, u, tape), tape), act, tape);
    };
    Tensor i = gate(p.w_i, p.u_i, p.b_i, Activation::Sigmoid);
    Tensor f = gate(p.w_f, p.u_f, p.b_f, Activation::Sigmoid);
    Tensor o = gate(p.w_o, p.u_o, p.b_o, Activation::Sigmoid);
    Tensor g = gate(p.w_g, p.u_g, p.b_g, Activation::Tanh);
    Tensor c_next = add(mul(f, c, tape), mul(i, g, tape), tape);
    Tensor h_next = mul(o, tanh_op(c_next, tape), tape);
    return {h_next, c_next};
}

// ---------------------------------------------------------------------------
// ParameterStore
// ---------------------------------------------------------------------------

Tensor ParameterStore::add(const std::string& name, Tensor t) {
    if (index_.count(name))
        throw ContractError("duplicate parameter name: " + name);
    t.node()->requires_grad = true;
    index_[name] = params_.size();
    params_.push_back(Parameter{name, t, true});
    return t;
}

Parameter& ParameterStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return params_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return params_[it->second];
}

int64_t ParameterStore::total_elems() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void ParameterStore::copy_data_from(const ParameterStore& other) {
    if (other.size() != size())
        throw ContractError("copy_data_from: parameter count mismatch");
    for (size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].tensor.shape() != other.params_[i].tensor.shape())
            throw ContractError("copy_data_from: shape mismatch at " + params_[i].name);
        params_[i].tensor.vec() = other.params_[i].tensor.vec();
    }
}

}  // namespace fmae
