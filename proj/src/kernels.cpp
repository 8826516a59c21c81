#include "fmae/kernels.hpp"

#include <algorithm>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fmae::kernels {

namespace {

Backend g_backend = Backend::Parallel;

inline int floor_div(int a, int b) {
    int q = a / b;
    return (a % b != 0 && (a ^ b) < 0) ? q - 1 : q;
}
inline int ceil_div(int a, int b) {
    int q = a / b;
    return (a % b != 0 && (a ^ b) > 0) ? q + 1 : q;
}

// Valid output range [lo, hi] such that o*stride - pad + k lands in [0, extent).
inline void valid_range(int out_extent, int in_extent, int stride, int pad, int k,
                        int& lo, int& hi) {
    lo = std::max(0, ceil_div(pad - k, stride));
    hi = std::min(out_extent - 1, floor_div(in_extent - 1 + pad - k, stride));
}

}  // namespace

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

// ---------------------------------------------------------------------------
// matmul family
// ---------------------------------------------------------------------------

#define FMAE_MATMUL_ACC_BODY(i)                         \
    for (int t = 0; t < k; ++t) {                       \
        const double av = a[i * k + t];                 \
        const double* brow = b + t * n;                 \
        double* crow = c + i * n;                       \
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j]; \
    }

#define FMAE_MATMUL_NT_ACC_BODY(i)                      \
    for (int t = 0; t < k; ++t) {                       \
        const double* arow = a + i * n;                 \
        const double* brow = b + t * n;                 \
        double acc = 0.0;                               \
        for (int j = 0; j < n; ++j) acc += arow[j] * brow[j]; \
        c[i * k + t] += acc;                            \
    }

#define FMAE_MATMUL_TN_ACC_BODY(t)                      \
    for (int i = 0; i < m; ++i) {                       \
        const double av = a[i * k + t];                 \
        const double* brow = b + i * n;                 \
        double* crow = c + t * n;                       \
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j]; \
    }

void serial::matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) { FMAE_MATMUL_ACC_BODY(i) }
}
void parallel::matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) { FMAE_MATMUL_ACC_BODY(i) }
}

void serial::matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) { FMAE_MATMUL_NT_ACC_BODY(i) }
}
void parallel::matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) { FMAE_MATMUL_NT_ACC_BODY(i) }
}

void serial::matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int t = 0; t < k; ++t) { FMAE_MATMUL_TN_ACC_BODY(t) }
}
void parallel::matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int t = 0; t < k; ++t) { FMAE_MATMUL_TN_ACC_BODY(t) }
}

// ---------------------------------------------------------------------------
// conv2d: x [c_in][h][w], kernels [c_out][c_in][kh][kw], y [c_out][oh][ow]
// Cross-correlation, no kernel flip. Per output element the (ci, ky, kx)
// accumulation order is identical in every variant.
// ---------------------------------------------------------------------------

#define FMAE_CONV2D_FWD_BODY(co)                                                   \
    {                                                                              \
        double* yplane = y + co * oh * ow;                                         \
        std::memset(yplane, 0, sizeof(double) * oh * ow);                          \
        for (int ci = 0; ci < g.c_in; ++ci)                                        \
            for (int ky = 0; ky < g.kh; ++ky)                                      \
                for (int kx = 0; kx < g.kw; ++kx) {                                \
                    const double wv = w[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx]; \
                    int oy_lo, oy_hi, ox_lo, ox_hi;                                \
                    valid_range(oh, g.h, g.stride, g.pad, ky, oy_lo, oy_hi);       \
                    valid_range(ow, g.w, g.stride, g.pad, kx, ox_lo, ox_hi);       \
                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {                      \
                        const int iy = oy * g.stride - g.pad + ky;                 \
                        const double* xrow = x + (ci * g.h + iy) * g.w;            \
                        double* yrow = yplane + oy * ow;                           \
                        const int base = kx - g.pad;                               \
                        for (int ox = ox_lo; ox <= ox_hi; ++ox)                    \
                            yrow[ox] += wv * xrow[ox * g.stride + base];           \
                    }                                                              \
                }                                                                  \
    }

void serial::conv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g) {
    const int oh = g.conv_out_h(), ow = g.conv_out_w();
    for (int co = 0; co < g.c_out; ++co) FMAE_CONV2D_FWD_BODY(co)
}
void parallel::conv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g) {
    const int oh = g.conv_out_h(), ow = g.conv_out_w();
#pragma omp parallel for schedule(static)
    for (int co = 0; co < g.c_out; ++co) FMAE_CONV2D_FWD_BODY(co)
}

#define FMAE_CONV2D_GRAD_INPUT_BODY(ci)                                            \
    for (int co = 0; co < g.c_out; ++co)                                           \
        for (int ky = 0; ky < g.kh; ++ky)                                          \
            for (int kx = 0; kx < g.kw; ++kx) {                                    \
                const double wv = w[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx]; \
                int oy_lo, oy_hi, ox_lo, ox_hi;                                    \
                valid_range(oh, g.h, g.stride, g.pad, ky, oy_lo, oy_hi);           \
                valid_range(ow, g.w, g.stride, g.pad, kx, ox_lo, ox_hi);           \
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {                          \
                    const int iy = oy * g.stride - g.pad + ky;                     \
                    const double* dyrow = dy + (co * oh + oy) * ow;                \
                    double* dxrow = dx + (ci * g.h + iy) * g.w;                    \
                    const int base = kx - g.pad;                                   \
                    for (int ox = ox_lo; ox <= ox_hi; ++ox)                        \
                        dxrow[ox * g.stride + base] += wv * dyrow[ox];             \
                }                                                                  \
            }

void serial::conv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g) {
    const int oh = g.conv_out_h(), ow = g.conv_out_w();
    for (int ci = 0; ci < g.c_in; ++ci) { FMAE_CONV2D_GRAD_INPUT_BODY(ci) }
}
void parallel::conv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g) {
    const int oh = g.conv_out_h(), ow = g.conv_out_w();
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < g.c_in; ++ci) { FMAE_CONV2D_GRAD_INPUT_BODY(ci) }
}

#define FMAE_CONV2D_GRAD_KERNELS_BODY(co)                                          \
    for (int ci = 0; ci < g.c_in; ++ci)                                            \
        for (int ky = 0; ky < g.kh; ++ky)                                          \
            for (int kx = 0; kx < g.kw; ++kx) {                                    \
                int oy_lo, oy_hi, ox_lo, ox_hi;                                    \
                valid_range(oh, g.h, g.stride, g.pad, ky, oy_lo, oy_hi);           \
                valid_range(ow, g.w, g.stride, g.pad, kx, ox_lo, ox_hi);           \
                double acc = 0.0;                                                  \
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {                          \
                    const int iy = oy * g.stride - g.pad + ky;                     \
                    const double* dyrow = dy + (co * oh + oy) * ow;                \
                    const double* xrow = x + (ci * g.h + iy) * g.w;                \
                    const int base = kx - g.pad;                                   \
                    for (int ox = ox_lo; ox <= ox_hi; ++ox)                        \
                        acc += dyrow[ox] * xrow[ox * g.stride + base];             \
                }                                                                  \
                dw[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx] += acc;           \
            }

void serial::conv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g) {
    const int oh = g.conv_out_h(), ow = g.conv_out_w();
    for (int co = 0; co < g.c_out; ++co) { FMAE_CONV2D_GRAD_KERNELS_BODY(co) }
}
void parallel::conv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g) {
    const int oh = g.conv_out_h(), ow = g.conv_out_w();
#pragma omp parallel for schedule(static)
    for (int co = 0; co < g.c_out; ++co) { FMAE_CONV2D_GRAD_KERNELS_BODY(co) }
}

// ---------------------------------------------------------------------------
// conv_transpose2d: x [c_in][h][w], kernels [c_in][c_out][kh][kw],
// y [c_out][toh][tow]. Linear adjoint of conv2d at matching stride/pad.
// ---------------------------------------------------------------------------

#define FMAE_TCONV2D_FWD_BODY(co)                                                  \
    {                                                                              \
        double* yplane = y + co * toh * tow;                                       \
        std::memset(yplane, 0, sizeof(double) * toh * tow);                        \
        for (int ci = 0; ci < g.c_in; ++ci)                                        \
            for (int ky = 0; ky < g.kh; ++ky)                                      \
                for (int kx = 0; kx < g.kw; ++kx) {                                \
                    const double wv = w[((ci * g.c_out + co) * g.kh + ky) * g.kw + kx]; \
                    int iy_lo, iy_hi, ix_lo, ix_hi;                                \
                    valid_range(g.h, toh, g.stride, g.pad, ky, iy_lo, iy_hi);      \
                    valid_range(g.w, tow, g.stride, g.pad, kx, ix_lo, ix_hi);      \
                    for (int iy = iy_lo; iy <= iy_hi; ++iy) {                      \
                        const int oy = iy * g.stride - g.pad + ky;                 \
                        const double* xrow = x + (ci * g.h + iy) * g.w;            \
                        double* yrow = yplane + oy * tow;                          \
                        const int base = kx - g.pad;                               \
                        for (int ix = ix_lo; ix <= ix_hi; ++ix)                    \
                            yrow[ix * g.stride + base] += wv * xrow[ix];           \
                    }                                                              \
                }                                                                  \
    }

void serial::tconv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g) {
    const int toh = g.tconv_out_h(), tow = g.tconv_out_w();
    for (int co = 0; co < g.c_out; ++co) FMAE_TCONV2D_FWD_BODY(co)
}
void parallel::tconv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g) {
    const int toh = g.tconv_out_h(), tow = g.tconv_out_w();
#pragma omp parallel for schedule(static)
    for (int co = 0; co < g.c_out; ++co) FMAE_TCONV2D_FWD_BODY(co)
}

#define FMAE_TCONV2D_GRAD_INPUT_BODY(ci)                                           \
    for (int co = 0; co < g.c_out; ++co)                                           \
        for (int ky = 0; ky < g.kh; ++ky)                                          \
            for (int kx = 0; kx < g.kw; ++kx) {                                    \
                const double wv = w[((ci * g.c_out + co) * g.kh + ky) * g.kw + kx]; \
                int iy_lo, iy_hi, ix_lo, ix_hi;                                    \
                valid_range(g.h, toh, g.stride, g.pad, ky, iy_lo, iy_hi);          \
                valid_range(g.w, tow, g.stride, g.pad, kx, ix_lo, ix_hi);          \
                for (int iy = iy_lo; iy <= iy_hi; ++iy) {                          \
                    const int oy = iy * g.stride - g.pad + ky;                     \
                    const double* dyrow = dy + (co * toh + oy) * tow;              \
                    double* dxrow = dx + (ci * g.h + iy) * g.w;                    \
                    const int base = kx - g.pad;                                   \
                    for (int ix = ix_lo; ix <= ix_hi; ++ix)                        \
                        dxrow[ix] += wv * dyrow[ix * g.stride + base];             \
                }                                                                  \
            }

void serial::tconv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g) {
    const int toh = g.tconv_out_h(), tow = g.tconv_out_w();
    for (int ci = 0; ci < g.c_in; ++ci) { FMAE_TCONV2D_GRAD_INPUT_BODY(ci) }
}
void parallel::tconv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g) {
    const int toh = g.tconv_out_h(), tow = g.tconv_out_w();
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < g.c_in; ++ci) { FMAE_TCONV2D_GRAD_INPUT_BODY(ci) }
}

#define FMAE_TCONV2D_GRAD_KERNELS_BODY(ci)                                         \
    for (int co = 0; co < g.c_out; ++co)                                           \
        for (int ky = 0; ky < g.kh; ++ky)                                          \
            for (int kx = 0; kx < g.kw; ++kx) {                                    \
                int iy_lo, iy_hi, ix_lo, ix_hi;                                    \
                valid_range(g.h, toh, g.stride, g.pad, ky, iy_lo, iy_hi);          \
                valid_range(g.w, tow, g.stride, g.pad, kx, ix_lo, ix_hi);          \
                double acc = 0.0;                                                  \
                for (int iy = iy_lo; iy <= iy_hi; ++iy) {                          \
                    const int oy = iy * g.stride - g.pad + ky;                     \
                    const double* dyrow = dy + (co * toh + oy) * tow;              \
                    const double* xrow = x + (ci * g.h + iy) * g.w;                \
                    const int base = kx - g.pad;                                   \
                    for (int ix = ix_lo; ix <= ix_hi; ++ix)                        \
                        acc += xrow[ix] * dyrow[ix * g.stride + base];             \
                }                                                                  \
                dw[((ci * g.c_out + co) * g.kh + ky) * g.kw + kx] += acc;          \
            }

void serial::tconv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g) {
    const int toh = g.tconv_out_h(), tow = g.tconv_out_w();
    for (int ci = 0; ci < g.c_in; ++ci) { FMAE_TCONV2D_GRAD_KERNELS_BODY(ci) }
}
void parallel::tconv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g) {
    const int toh = g.tconv_out_h(), tow = g.tconv_out_w();
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < g.c_in; ++ci) { FMAE_TCONV2D_GRAD_KERNELS_BODY(ci) }
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

namespace {
inline bool use_parallel() {
#ifdef _OPENMP
    return g_backend == Backend::Parallel && !omp_in_parallel();
#else
    return false;
#endif
}
}  // namespace

void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    use_parallel() ? parallel::matmul_acc(a, b, c, m, k, n) : serial::matmul_acc(a, b, c, m, k, n);
}
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    use_parallel() ? parallel::matmul_nt_acc(a, b, c, m, k, n) : serial::matmul_nt_acc(a, b, c, m, k, n);
}
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    use_parallel() ? parallel::matmul_tn_acc(a, b, c, m, k, n) : serial::matmul_tn_acc(a, b, c, m, k, n);
}
void conv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g) {
    use_parallel() ? parallel::conv2d_forward(x, w, y, g) : serial::conv2d_forward(x, w, y, g);
}
void conv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g) {
    use_parallel() ? parallel::conv2d_grad_input(dy, w, dx, g) : serial::conv2d_grad_input(dy, w, dx, g);
}
void conv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g) {
    use_parallel() ? parallel::conv2d_grad_kernels(x, dy, dw, g) : serial::conv2d_grad_kernels(x, dy, dw, g);
}
void tconv2d_forward(const double* x, const double* w, double* y, const ConvGeom& g) {
    use_parallel() ? parallel::tconv2d_forward(x, w, y, g) : serial::tconv2d_forward(x, w, y, g);
}
void tconv2d_grad_input(const double* dy, const double* w, double* dx, const ConvGeom& g) {
    use_parallel() ? parallel::tconv2d_grad_input(dy, w, dx, g) : serial::tconv2d_grad_input(dy, w, dx, g);
}
void tconv2d_grad_kernels(const double* x, const double* dy, double* dw, const ConvGeom& g) {
    use_parallel() ? parallel::tconv2d_grad_kernels(x, dy, dw, g) : serial::tconv2d_grad_kernels(x, dy, dw, g);
}

}  // namespace fmae::kernels
