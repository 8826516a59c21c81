#pragma once

// Dense compute kernels behind the tensor ops. Every kernel exists twice:
// a plain serial loop nest (the reference) and an OpenMP variant that
// parallelizes over independent output slices. Both accumulate each output
// element in the same index order, so the two backends agree bit-for-bit;
// the unit tests and fmae_bench compare them.

namespace fmae::kernels {

enum class Backend { Serial, Parallel };

Backend backend();
void set_backend(Backend b);

// Convolution geometry. (c_in, h, w) describe the input tensor; kernels are
// [c_out][c_in][kh][kw] for conv2d and [c_in][c_out][kh][kw] for
// conv_transpose2d. out_pad only applies to the transposed direction.
struct ConvGeom {
    int c_in = 0, h = 0, w = 0;
    int c_out = 0, kh = 0, kw = 0;
    int stride = 1, pad = 0, out_pad = 0;

    int conv_out_h() const { return (h + 2 * pad - kh) / stride + 1; }
    int conv_out_w() const { return (w + 2 * pad - kw) / stride + 1; }
    int tconv_out_h() const { return (h - 1) * stride - 2 * pad + kh + out_pad; }
    int tconv_out_w() const { return (w - 1) * stride - 2 * pad + kw + out_pad; }
};

namespace serial {
// c[m x n] += a[m x k] * b[k x n]
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n);
// c[m x k] += a[m x n] * b[k x n]^T
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);
// c[k x n] += a[m x k]^T * b[m x n]
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n);

void conv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g);
void conv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g);
void conv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g);

void tconv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g);
void tconv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g);
void tconv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g);
}  // namespace serial

namespace parallel {
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n);

void conv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g);
void conv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g);
void conv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g);

void tconv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g);
void tconv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g);
void tconv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g);
}  // namespace parallel

// Dispatch through the active backend. Falls back to the serial path when
// already inside an OpenMP parallel region (sample-level parallelism wins).
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n);
void conv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g);
void conv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g);
void conv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g);
void tconv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g);
void tconv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g);
void tconv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g);

}  // namespace fmae::kernels
