#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fmae/errors.hpp"

namespace fmae {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
};

// Value-semantic handle to a shared node. Data is written only at
// construction; grad buffers are the single mutable part.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }

    double* data() { return node_->data.data(); }
    const double* data() const { return node_->data.data(); }
    std::vector<double>& vec() { return node_->data; }
    const std::vector<double>& vec() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }

    // Grad buffer, allocated as zeros on first access.
    double* grad();
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad_vec() const;
    void zero_grad();

    // Scalar value; ContractError if numel != 1.
    double item() const;

    Tensor clone() const;

    const std::shared_ptr<TensorNode>& node() const { return node_; }

  private:
    std::shared_ptr<TensorNode> node_;
};

// Linear record of backward rules. Replaying in reverse accumulates
// gradients for every requires_grad tensor reachable from the loss.
// Single-threaded by contract; concurrent samples use separate tapes.
class Tape {
  public:
    void record(std::function<void()> backward_fn) { records_.push_back(std::move(backward_fn)); }
    size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

    void replay_backward() {
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    }

  private:
    std::vector<std::function<void()>> records_;
};

// Seeds d(loss)/d(loss) = 1 and replays the tape. Gradients accumulate
// additively across repeated calls; callers reset with zero_grad.
void backward(const Tensor& loss, Tape& tape);

// ---------------------------------------------------------------------------
// Ops. `tape == nullptr` disables recording (pure inference). The backward
// rule is recorded whenever a tape is given and any input requires grad.
// ---------------------------------------------------------------------------

enum class Activation { Sigmoid, Tanh, Relu };

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
// y = W x  (W: [m x k], x: [k])
Tensor linear(const Tensor& x, const Tensor& w, Tape* tape = nullptr);
// y = W x + b
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape = nullptr);

Tensor activation(const Tensor& x, Activation kind, Tape* tape = nullptr);
Tensor sigmoid(const Tensor& x, Tape* tape = nullptr);
Tensor tanh_op(const Tensor& x, Tape* tape = nullptr);
Tensor relu(const Tensor& x, Tape* tape = nullptr);

// x: [c_in][h][w], kernels: [c_out][c_in][kh][kw]; cross-correlation.
Tensor conv2d(const Tensor& x, const Tensor& kernels, int stride, int padding,
              Tape* tape = nullptr);
// x: [c_in][h][w], kernels: [c_in][c_out][kh][kw]; adjoint of conv2d.
Tensor conv_transpose2d(const Tensor& x, const Tensor& kernels, int stride, int padding,
                        int output_padding, Tape* tape = nullptr);
// x: [c][h][w] plus per-channel bias [c].
Tensor add_channel_bias(const Tensor& x, const Tensor& bias, Tape* tape = nullptr);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& a, double c, Tape* tape = nullptr);
Tensor add_scalar(const Tensor& a, double c, Tape* tape = nullptr);
// c - a
Tensor rsub_scalar(double c, const Tensor& a, Tape* tape = nullptr);
Tensor exp_op(const Tensor& a, Tape* tape = nullptr);
Tensor log_op(const Tensor& a, Tape* tape = nullptr);
// Gradient passes through strictly inside (lo, hi), zero outside.
Tensor clamp(const Tensor& a, double lo, double hi, Tape* tape = nullptr);

Tensor sum(const Tensor& a, Tape* tape = nullptr);
Tensor reshape(const Tensor& a, Shape new_shape, Tape* tape = nullptr);
Tensor concat(const std::vector<Tensor>& parts, Tape* tape = nullptr);
Tensor row(const Tensor& m, int i, Tape* tape = nullptr);
Tensor stack_rows(const std::vector<Tensor>& rows, Tape* tape = nullptr);

// One LSTM cell update; weights per gate: w [d_h x d_in], u [d_h x d_h], b [d_h].
struct LstmParams {
    Tensor w_i, u_i, b_i;
    Tensor w_f, u_f, b_f;
    Tensor w_o, u_o, b_o;
    Tensor w_g, u_g, b_g;
};
std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmParams& p, Tape* tape = nullptr);

// ---------------------------------------------------------------------------
// Named trainable parameters
// ---------------------------------------------------------------------------

struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

class ParameterStore {
  public:
    // Registers and returns the tensor; duplicate names are a contract error.
    Tensor add(const std::string& name, Tensor t);

    size_t size() const { return params_.size(); }
    Parameter& operator[](size_t i) { return params_[i]; }
    const Parameter& operator[](size_t i) const { return params_[i]; }
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    int64_t total_elems() const;
    void zero_grad();
    // Positional copy; shapes must match (used for worker replicas).
    void copy_data_from(const ParameterStore& other);

  private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace fmae
