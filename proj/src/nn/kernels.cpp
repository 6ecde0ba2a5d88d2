#include "flow/nn/kernels.hpp"

#include <algorithm>
#include <cstring>

namespace flow::nn::kernels {

namespace {
thread_local bool g_parallel = true;

// Below this much work the OpenMP region overhead dominates. Workers that
// slept between regions pay a wake-up in the hundreds of microseconds on
// some hosts, so only multi-megaflop kernels go parallel.
constexpr long long kMinParallelWork = 1 << 22;
}  // namespace

bool parallel_enabled() { return g_parallel; }
void set_parallel_enabled(bool on) { g_parallel = on; }

// ---------------------------------------------------------------- matmul

void matmul_serial(double* c, const double* a, const double* b, int m, int k, int n) {
  std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    const double* arow = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_parallel(double* c, const double* a, const double* b, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
    const double* arow = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul(double* c, const double* a, const double* b, int m, int k, int n) {
  if (g_parallel && static_cast<long long>(m) * k * n >= kMinParallelWork)
    matmul_parallel(c, a, b, m, k, n);
  else
    matmul_serial(c, a, b, m, k, n);
}

void matmul_grad_a_serial(double* ga, const double* gout, const double* b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* grow = gout + static_cast<size_t>(i) * n;
    double* garow = ga + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<size_t>(p) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
      garow[p] += acc;
    }
  }
}

void matmul_grad_a_parallel(double* ga, const double* gout, const double* b, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* grow = gout + static_cast<size_t>(i) * n;
    double* garow = ga + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<size_t>(p) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
      garow[p] += acc;
    }
  }
}

void matmul_grad_a(double* ga, const double* gout, const double* b, int m, int k, int n) {
  if (g_parallel && static_cast<long long>(m) * k * n >= kMinParallelWork)
    matmul_grad_a_parallel(ga, gout, b, m, k, n);
  else
    matmul_grad_a_serial(ga, gout, b, m, k, n);
}

void matmul_grad_b_serial(double* gb, const double* a, const double* gout, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    double* gbrow = gb + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = a[static_cast<size_t>(i) * k + p];
      const double* grow = gout + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
    }
  }
}

void matmul_grad_b_parallel(double* gb, const double* a, const double* gout, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int p = 0; p < k; ++p) {
    double* gbrow = gb + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = a[static_cast<size_t>(i) * k + p];
      const double* grow = gout + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
    }
  }
}

void matmul_grad_b(double* gb, const double* a, const double* gout, int m, int k, int n) {
  if (g_parallel && static_cast<long long>(m) * k * n >= kMinParallelWork)
    matmul_grad_b_parallel(gb, a, gout, m, k, n);
  else
    matmul_grad_b_serial(gb, a, gout, m, k, n);
}

// ---------------------------------------------------------------- conv2d

namespace {
inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

// Output index range [lo, hi) whose input index o*stride + tap - pad lands
// inside [0, in). Hoisting this out of the inner loops keeps them branch-free
// without changing which terms are accumulated, so results stay identical.
inline void tap_bounds(int out_dim, int in_dim, int tap, int stride, int pad, int& lo, int& hi) {
  lo = std::max(0, ceil_div(pad - tap, stride));
  hi = std::min(out_dim, (in_dim - 1 - tap + pad) / stride + 1);
}

// One output channel of the forward pass; shared by serial/parallel drivers
// so both accumulate in exactly the same order.
inline void conv2d_one_cout(double* out, const double* x, const double* w, int cin, int h,
                            int wdt, int co, int k, int stride, int pad, int ho, int wo) {
  double* oplane = out + static_cast<size_t>(co) * ho * wo;
  std::memset(oplane, 0, sizeof(double) * static_cast<size_t>(ho) * wo);
  for (int ci = 0; ci < cin; ++ci) {
    const double* xplane = x + static_cast<size_t>(ci) * h * wdt;
    const double* wbase = w + ((static_cast<size_t>(co) * cin + ci) * k) * k;
    for (int kh = 0; kh < k; ++kh) {
      int oy_lo, oy_hi;
      tap_bounds(ho, h, kh, stride, pad, oy_lo, oy_hi);
      for (int kw = 0; kw < k; ++kw) {
        const double wv = wbase[kh * k + kw];
        int ox_lo, ox_hi;
        tap_bounds(wo, wdt, kw, stride, pad, ox_lo, ox_hi);
        for (int oy = oy_lo; oy < oy_hi; ++oy) {
          const double* xrow = xplane + static_cast<size_t>(oy * stride + kh - pad) * wdt;
          double* orow = oplane + static_cast<size_t>(oy) * wo;
          if (stride == 1) {
            const double* xr = xrow + kw - pad;
            for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += wv * xr[ox];
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox)
              orow[ox] += wv * xrow[ox * stride + kw - pad];
          }
        }
      }
    }
  }
}
}  // namespace

void conv2d_serial(double* out, const double* x, const double* w, int cin, int h, int wdt,
                   int cout, int k, int stride, int pad) {
  const int ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wdt, k, stride, pad);
  for (int co = 0; co < cout; ++co) conv2d_one_cout(out, x, w, cin, h, wdt, co, k, stride, pad, ho, wo);
}

void conv2d_parallel(double* out, const double* x, const double* w, int cin, int h, int wdt,
                     int cout, int k, int stride, int pad) {
  const int ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wdt, k, stride, pad);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) conv2d_one_cout(out, x, w, cin, h, wdt, co, k, stride, pad, ho, wo);
}

void conv2d(double* out, const double* x, const double* w, int cin, int h, int wdt, int cout,
            int k, int stride, int pad) {
  const long long work = static_cast<long long>(cout) * cin * k * k * h * wdt;
  if (g_parallel && work >= kMinParallelWork)
    conv2d_parallel(out, x, w, cin, h, wdt, cout, k, stride, pad);
  else
    conv2d_serial(out, x, w, cin, h, wdt, cout, k, stride, pad);
}

namespace {
inline void conv2d_grad_x_one_cin(double* gx, const double* gout, const double* w, int ci,
                                  int cin, int h, int wdt, int cout, int k, int stride, int pad,
                                  int ho, int wo) {
  double* gxplane = gx + static_cast<size_t>(ci) * h * wdt;
  for (int co = 0; co < cout; ++co) {
    const double* gplane = gout + static_cast<size_t>(co) * ho * wo;
    const double* wbase = w + ((static_cast<size_t>(co) * cin + ci) * k) * k;
    for (int kh = 0; kh < k; ++kh) {
      int oy_lo, oy_hi;
      tap_bounds(ho, h, kh, stride, pad, oy_lo, oy_hi);
      for (int kw = 0; kw < k; ++kw) {
        const double wv = wbase[kh * k + kw];
        int ox_lo, ox_hi;
        tap_bounds(wo, wdt, kw, stride, pad, ox_lo, ox_hi);
        for (int oy = oy_lo; oy < oy_hi; ++oy) {
          const double* grow = gplane + static_cast<size_t>(oy) * wo;
          double* gxrow = gxplane + static_cast<size_t>(oy * stride + kh - pad) * wdt;
          if (stride == 1) {
            double* gxr = gxrow + kw - pad;
            for (int ox = ox_lo; ox < ox_hi; ++ox) gxr[ox] += wv * grow[ox];
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox)
              gxrow[ox * stride + kw - pad] += wv * grow[ox];
          }
        }
      }
    }
  }
}

inline void conv2d_grad_w_one_cout(double* gw, const double* x, const double* gout, int co,
                                   int cin, int h, int wdt, int k, int stride, int pad, int ho,
                                   int wo) {
  const double* gplane = gout + static_cast<size_t>(co) * ho * wo;
  for (int ci = 0; ci < cin; ++ci) {
    const double* xplane = x + static_cast<size_t>(ci) * h * wdt;
    double* gwbase = gw + ((static_cast<size_t>(co) * cin + ci) * k) * k;
    for (int kh = 0; kh < k; ++kh) {
      int oy_lo, oy_hi;
      tap_bounds(ho, h, kh, stride, pad, oy_lo, oy_hi);
      for (int kw = 0; kw < k; ++kw) {
        int ox_lo, ox_hi;
        tap_bounds(wo, wdt, kw, stride, pad, ox_lo, ox_hi);
        double acc = 0.0;
        for (int oy = oy_lo; oy < oy_hi; ++oy) {
          const double* xrow = xplane + static_cast<size_t>(oy * stride + kh - pad) * wdt;
          const double* grow = gplane + static_cast<size_t>(oy) * wo;
          if (stride == 1) {
            const double* xr = xrow + kw - pad;
            for (int ox = ox_lo; ox < ox_hi; ++ox) acc += xr[ox] * grow[ox];
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox) acc += xrow[ox * stride + kw - pad] * grow[ox];
          }
        }
        gwbase[kh * k + kw] += acc;
      }
    }
  }
}
}  // namespace

void conv2d_grad_x_serial(double* gx, const double* gout, const double* w, int cin, int h,
                          int wdt, int cout, int k, int stride, int pad) {
  const int ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wdt, k, stride, pad);
  for (int ci = 0; ci < cin; ++ci)
    conv2d_grad_x_one_cin(gx, gout, w, ci, cin, h, wdt, cout, k, stride, pad, ho, wo);
}

void conv2d_grad_x_parallel(double* gx, const double* gout, const double* w, int cin, int h,
                            int wdt, int cout, int k, int stride, int pad) {
  const int ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wdt, k, stride, pad);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci)
    conv2d_grad_x_one_cin(gx, gout, w, ci, cin, h, wdt, cout, k, stride, pad, ho, wo);
}

void conv2d_grad_x(double* gx, const double* gout, const double* w, int cin, int h, int wdt,
                   int cout, int k, int stride, int pad) {
  const long long work = static_cast<long long>(cout) * cin * k * k * h * wdt;
  if (g_parallel && work >= kMinParallelWork)
    conv2d_grad_x_parallel(gx, gout, w, cin, h, wdt, cout, k, stride, pad);
  else
    conv2d_grad_x_serial(gx, gout, w, cin, h, wdt, cout, k, stride, pad);
}

void conv2d_grad_w_serial(double* gw, const double* x, const double* gout, int cin, int h,
                          int wdt, int cout, int k, int stride, int pad) {
  const int ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wdt, k, stride, pad);
  for (int co = 0; co < cout; ++co)
    conv2d_grad_w_one_cout(gw, x, gout, co, cin, h, wdt, k, stride, pad, ho, wo);
}

void conv2d_grad_w_parallel(double* gw, const double* x, const double* gout, int cin, int h,
                            int wdt, int cout, int k, int stride, int pad) {
  const int ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wdt, k, stride, pad);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co)
    conv2d_grad_w_one_cout(gw, x, gout, co, cin, h, wdt, k, stride, pad, ho, wo);
}

void conv2d_grad_w(double* gw, const double* x, const double* gout, int cin, int h, int wdt,
                   int cout, int k, int stride, int pad) {
  const long long work = static_cast<long long>(cout) * cin * k * k * h * wdt;
  if (g_parallel && work >= kMinParallelWork)
    conv2d_grad_w_parallel(gw, x, gout, cin, h, wdt, cout, k, stride, pad);
  else
    conv2d_grad_w_serial(gw, x, gout, cin, h, wdt, cout, k, stride, pad);
}

// ---------------------------------------------------------------- tconv2

namespace {
inline void tconv2_one_cout(double* out, const double* x, const double* w, int co, int cin,
                            int h, int wdt, int cout) {
  const int oh = 2 * h, ow = 2 * wdt;
  double* oplane = out + static_cast<size_t>(co) * oh * ow;
  std::memset(oplane, 0, sizeof(double) * static_cast<size_t>(oh) * ow);
  for (int ci = 0; ci < cin; ++ci) {
    const double* xplane = x + static_cast<size_t>(ci) * h * wdt;
    const double* wbase = w + ((static_cast<size_t>(ci) * cout + co) * 2) * 2;
    for (int kh = 0; kh < 2; ++kh) {
      for (int kw = 0; kw < 2; ++kw) {
        const double wv = wbase[kh * 2 + kw];
        for (int y = 0; y < h; ++y) {
          const double* xrow = xplane + static_cast<size_t>(y) * wdt;
          double* orow = oplane + static_cast<size_t>(2 * y + kh) * ow + kw;
          for (int xcol = 0; xcol < wdt; ++xcol) orow[2 * xcol] += wv * xrow[xcol];
        }
      }
    }
  }
}
}  // namespace

void tconv2_serial(double* out, const double* x, const double* w, int cin, int h, int wdt,
                   int cout) {
  for (int co = 0; co < cout; ++co) tconv2_one_cout(out, x, w, co, cin, h, wdt, cout);
}

void tconv2_parallel(double* out, const double* x, const double* w, int cin, int h, int wdt,
                     int cout) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) tconv2_one_cout(out, x, w, co, cin, h, wdt, cout);
}

void tconv2(double* out, const double* x, const double* w, int cin, int h, int wdt, int cout) {
  const long long work = static_cast<long long>(cout) * cin * 4 * h * wdt;
  if (g_parallel && work >= kMinParallelWork)
    tconv2_parallel(out, x, w, cin, h, wdt, cout);
  else
    tconv2_serial(out, x, w, cin, h, wdt, cout);
}

namespace {
inline void tconv2_grad_x_one_cin(double* gx, const double* gout, const double* w, int ci,
                                  int /*cin*/, int h, int wdt, int cout) {
  const int oh = 2 * h, ow = 2 * wdt;
  double* gxplane = gx + static_cast<size_t>(ci) * h * wdt;
  for (int co = 0; co < cout; ++co) {
    const double* gplane = gout + static_cast<size_t>(co) * oh * ow;
    const double* wbase = w + ((static_cast<size_t>(ci) * cout + co) * 2) * 2;
    for (int kh = 0; kh < 2; ++kh) {
      for (int kw = 0; kw < 2; ++kw) {
        const double wv = wbase[kh * 2 + kw];
        for (int y = 0; y < h; ++y) {
          const double* grow = gplane + static_cast<size_t>(2 * y + kh) * ow + kw;
          double* gxrow = gxplane + static_cast<size_t>(y) * wdt;
          for (int xcol = 0; xcol < wdt; ++xcol) gxrow[xcol] += wv * grow[2 * xcol];
        }
      }
    }
  }
}

inline void tconv2_grad_w_one_cin(double* gw, const double* x, const double* gout, int ci,
                                  int cin, int h, int wdt, int cout) {
  const int oh = 2 * h, ow = 2 * wdt;
  const double* xplane = x + static_cast<size_t>(ci) * h * wdt;
  for (int co = 0; co < cout; ++co) {
    const double* gplane = gout + static_cast<size_t>(co) * oh * ow;
    double* gwbase = gw + ((static_cast<size_t>(ci) * cout + co) * 2) * 2;
    for (int kh = 0; kh < 2; ++kh) {
      for (int kw = 0; kw < 2; ++kw) {
        double acc = 0.0;
        for (int y = 0; y < h; ++y) {
          const double* xrow = xplane + static_cast<size_t>(y) * wdt;
          const double* grow = gplane + static_cast<size_t>(2 * y + kh) * ow + kw;
          for (int xcol = 0; xcol < wdt; ++xcol) acc += xrow[xcol] * grow[2 * xcol];
        }
        gwbase[kh * 2 + kw] += acc;
      }
    }
  }
}
}  // namespace

void tconv2_grad_x_serial(double* gx, const double* gout, const double* w, int cin, int h,
                          int wdt, int cout) {
  for (int ci = 0; ci < cin; ++ci) tconv2_grad_x_one_cin(gx, gout, w, ci, cin, h, wdt, cout);
}

void tconv2_grad_x_parallel(double* gx, const double* gout, const double* w, int cin, int h,
                            int wdt, int cout) {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) tconv2_grad_x_one_cin(gx, gout, w, ci, cin, h, wdt, cout);
}

void tconv2_grad_x(double* gx, const double* gout, const double* w, int cin, int h, int wdt,
                   int cout) {
  const long long work = static_cast<long long>(cout) * cin * 4 * h * wdt;
  if (g_parallel && work >= kMinParallelWork)
    tconv2_grad_x_parallel(gx, gout, w, cin, h, wdt, cout);
  else
    tconv2_grad_x_serial(gx, gout, w, cin, h, wdt, cout);
}

void tconv2_grad_w_serial(double* gw, const double* x, const double* gout, int cin, int h,
                          int wdt, int cout) {
  for (int ci = 0; ci < cin; ++ci) tconv2_grad_w_one_cin(gw, x, gout, ci, cin, h, wdt, cout);
}

void tconv2_grad_w_parallel(double* gw, const double* x, const double* gout, int cin, int h,
                            int wdt, int cout) {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) tconv2_grad_w_one_cin(gw, x, gout, ci, cin, h, wdt, cout);
}

void tconv2_grad_w(double* gw, const double* x, const double* gout, int cin, int h, int wdt,
                   int cout) {
  const long long work = static_cast<long long>(cout) * cin * 4 * h * wdt;
  if (g_parallel && work >= kMinParallelWork)
    tconv2_grad_w_parallel(gw, x, gout, cin, h, wdt, cout);
  else
    tconv2_grad_w_serial(gw, x, gout, cin, h, wdt, cout);
}

}  // namespace flow::nn::kernels
