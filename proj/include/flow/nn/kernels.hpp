#pragma once

#include <cstddef>

namespace flow::nn::kernels {

// Thread-local switch. Pseudo-label workers turn it off so the worker pool
// owns all parallelism; everywhere else the OpenMP variants kick in above a
// size threshold. Serial and parallel variants are bitwise identical: every
// output element is reduced in the same order in both.
bool parallel_enabled();
void set_parallel_enabled(bool on);

// C[m,n] = A[m,k] * B[k,n]
void matmul_serial(double* c, const double* a, const double* b, int m, int k, int n);
void matmul_parallel(double* c, const double* a, const double* b, int m, int k, int n);
void matmul(double* c, const double* a, const double* b, int m, int k, int n);

// gA[m,k] += gout[m,n] * B^T;  gB[k,n] += A^T * gout
void matmul_grad_a_serial(double* ga, const double* gout, const double* b, int m, int k, int n);
void matmul_grad_a_parallel(double* ga, const double* gout, const double* b, int m, int k, int n);
void matmul_grad_a(double* ga, const double* gout, const double* b, int m, int k, int n);
void matmul_grad_b_serial(double* gb, const double* a, const double* gout, int m, int k, int n);
void matmul_grad_b_parallel(double* gb, const double* a, const double* gout, int m, int k, int n);
void matmul_grad_b(double* gb, const double* a, const double* gout, int m, int k, int n);

// 2-D convolution, x [Cin,H,W], w [Cout,Cin,K,K], zero padding `pad`,
// out [Cout,Ho,Wo] with Ho = (H + 2*pad - K)/stride + 1.
void conv2d_serial(double* out, const double* x, const double* w, int cin, int h, int wdt,
                   int cout, int k, int stride, int pad);
void conv2d_parallel(double* out, const double* x, const double* w, int cin, int h, int wdt,
                     int cout, int k, int stride, int pad);
void conv2d(double* out, const double* x, const double* w, int cin, int h, int wdt, int cout,
            int k, int stride, int pad);

void conv2d_grad_x_serial(double* gx, const double* gout, const double* w, int cin, int h,
                          int wdt, int cout, int k, int stride, int pad);
void conv2d_grad_x_parallel(double* gx, const double* gout, const double* w, int cin, int h,
                            int wdt, int cout, int k, int stride, int pad);
void conv2d_grad_x(double* gx, const double* gout, const double* w, int cin, int h, int wdt,
                   int cout, int k, int stride, int pad);

void conv2d_grad_w_serial(double* gw, const double* x, const double* gout, int cin, int h,
                          int wdt, int cout, int k, int stride, int pad);
void conv2d_grad_w_parallel(double* gw, const double* x, const double* gout, int cin, int h,
                            int wdt, int cout, int k, int stride, int pad);
void conv2d_grad_w(double* gw, const double* x, const double* gout, int cin, int h, int wdt,
                   int cout, int k, int stride, int pad);

// Transposed conv, kernel 2 stride 2 (exact 2x upsampling).
// x [Cin,H,W], w [Cin,Cout,2,2], out [Cout,2H,2W].
void tconv2_serial(double* out, const double* x, const double* w, int cin, int h, int wdt, int cout);
void tconv2_parallel(double* out, const double* x, const double* w, int cin, int h, int wdt, int cout);
void tconv2(double* out, const double* x, const double* w, int cin, int h, int wdt, int cout);

void tconv2_grad_x_serial(double* gx, const double* gout, const double* w, int cin, int h,
                          int wdt, int cout);
void tconv2_grad_x_parallel(double* gx, const double* gout, const double* w, int cin, int h,
                            int wdt, int cout);
void tconv2_grad_x(double* gx, const double* gout, const double* w, int cin, int h, int wdt, int cout);

void tconv2_grad_w_serial(double* gw, const double* x, const double* gout, int cin, int h,
                          int wdt, int cout);
void tconv2_grad_w_parallel(double* gw, const double* x, const double* gout, int cin, int h,
                            int wdt, int cout);
void tconv2_grad_w(double* gw, const double* x, const double* gout, int cin, int h, int wdt, int cout);

}  // namespace flow::nn::kernels
