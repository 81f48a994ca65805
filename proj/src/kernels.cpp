#include "adaptlab/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace adaptlab::kernels {

namespace {

#if defined(__GNUC__)
#define ADAPTLAB_NOINLINE __attribute__((noinline))
#else
#define ADAPTLAB_NOINLINE
#endif

// Row bodies are noinline so the serial and OpenMP drivers execute the exact
// same machine code per row; outputs stay bit-identical across both paths
// and across thread counts.

ADAPTLAB_NOINLINE void matmul_nn_row(const double* __restrict a_row,
                                     const double* __restrict b,
                                     double* __restrict c_row, i64 k, i64 n,
                                     bool accumulate) {
    if (!accumulate) {
        for (i64 j = 0; j < n; ++j) c_row[j] = 0.0;
    }
    for (i64 kk = 0; kk < k; ++kk) {
        const double av = a_row[kk];
        const double* __restrict b_row = b + kk * n;
        for (i64 j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
}

ADAPTLAB_NOINLINE double dot4(const double* __restrict x,
                              const double* __restrict y, i64 n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += x[i] * y[i];
        s1 += x[i + 1] * y[i + 1];
        s2 += x[i + 2] * y[i + 2];
        s3 += x[i + 3] * y[i + 3];
    }
    for (; i < n; ++i) s0 += x[i] * y[i];
    return (s0 + s1) + (s2 + s3);
}

ADAPTLAB_NOINLINE void matmul_nt_row(const double* __restrict a_row,
                                     const double* __restrict b,
                                     double* __restrict c_row, i64 k, i64 n,
                                     bool accumulate) {
    for (i64 j = 0; j < n; ++j) {
        const double v = dot4(a_row, b + j * k, k);
        c_row[j] = accumulate ? c_row[j] + v : v;
    }
}

// Output row r of a^T b, i.e. c[r,:] = sum_i a[i,r] * b[i,:].
ADAPTLAB_NOINLINE void matmul_tn_row(const double* __restrict a,
                                     const double* __restrict b,
                                     double* __restrict c_row, i64 r, i64 rows,
                                     i64 m, i64 n, bool accumulate) {
    if (!accumulate) {
        for (i64 j = 0; j < n; ++j) c_row[j] = 0.0;
    }
    for (i64 i = 0; i < rows; ++i) {
        const double av = a[i * m + r];
        const double* __restrict b_row = b + i * n;
        for (i64 j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
}

ADAPTLAB_NOINLINE void softmax_row(const double* __restrict x,
                                   double* __restrict out, i64 n) {
    double mx = x[0];
    for (i64 j = 1; j < n; ++j) mx = x[j] > mx ? x[j] : mx;
    double sum = 0.0;
    for (i64 j = 0; j < n; ++j) {
        out[j] = std::exp(x[j] - mx);
        sum += out[j];
    }
    const double inv = 1.0 / sum;
    for (i64 j = 0; j < n; ++j) out[j] *= inv;
}

ADAPTLAB_NOINLINE void softmax_backward_row(const double* __restrict y,
                                            const double* __restrict dy,
                                            double* __restrict dx, i64 n) {
    double dot = 0.0;
    for (i64 j = 0; j < n; ++j) dot += dy[j] * y[j];
    for (i64 j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
}

ADAPTLAB_NOINLINE void layernorm_row(const double* __restrict x,
                                     const double* __restrict gamma,
                                     const double* __restrict beta,
                                     double* __restrict out, double* mean_out,
                                     double* invstd_out, i64 n, double eps) {
    double mean = 0.0;
    for (i64 j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (i64 j = 0; j < n; ++j) {
        const double d = x[j] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double invstd = 1.0 / std::sqrt(var + eps);
    for (i64 j = 0; j < n; ++j)
        out[j] = (x[j] - mean) * invstd * gamma[j] + beta[j];
    *mean_out = mean;
    *invstd_out = invstd;
}

ADAPTLAB_NOINLINE void layernorm_backward_row(
    const double* __restrict x, const double* __restrict gamma, double mean,
    double invstd, const double* __restrict dy, double* __restrict dx, i64 n) {
    // dxhat = dy * gamma; dx = invstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (i64 j = 0; j < n; ++j) {
        const double xhat = (x[j] - mean) * invstd;
        const double dxhat = dy[j] * gamma[j];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const double m1 = sum_dxhat * inv_n;
    const double m2 = sum_dxhat_xhat * inv_n;
    for (i64 j = 0; j < n; ++j) {
        const double xhat = (x[j] - mean) * invstd;
        const double dxhat = dy[j] * gamma[j];
        dx[j] += invstd * (dxhat - m1 - xhat * m2);
    }
}

ADAPTLAB_NOINLINE void add_bias_row(const double* __restrict x,
                                    const double* __restrict bias,
                                    double* __restrict out, i64 n) {
    for (i64 j = 0; j < n; ++j) out[j] = x[j] + bias[j];
}

std::atomic<i64> g_parallel_threshold{1 << 15};

bool go_parallel(i64 flops) {
#ifdef _OPENMP
    return flops >= g_parallel_threshold.load(std::memory_order_relaxed) &&
           omp_get_max_threads() > 1;
#else
    (void)flops;
    return false;
#endif
}

}  // namespace

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate) {
    for (i64 i = 0; i < m; ++i)
        matmul_nn_row(a + i * k, b, c + i * n, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate) {
    for (i64 i = 0; i < m; ++i)
        matmul_nt_row(a + i * k, b, c + i * n, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate) {
    // a is (k x m) row-major; output row r gathers column r of a.
    for (i64 r = 0; r < m; ++r)
        matmul_tn_row(a, b, c + r * n, r, k, m, n, accumulate);
}

void softmax_rows(const double* x, double* out, i64 rows, i64 cols) {
    for (i64 r = 0; r < rows; ++r) softmax_row(x + r * cols, out + r * cols, cols);
}

void softmax_backward_rows(const double* y, const double* dy, double* dx,
                           i64 rows, i64 cols) {
    for (i64 r = 0; r < rows; ++r)
        softmax_backward_row(y + r * cols, dy + r * cols, dx + r * cols, cols);
}

void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* out, double* mean, double* invstd, i64 rows,
                    i64 cols, double eps) {
    for (i64 r = 0; r < rows; ++r)
        layernorm_row(x + r * cols, gamma, beta, out + r * cols, mean + r,
                      invstd + r, cols, eps);
}

void layernorm_backward_rows(const double* x, const double* gamma,
                             const double* mean, const double* invstd,
                             const double* dy, double* dx, i64 rows, i64 cols) {
    for (i64 r = 0; r < rows; ++r)
        layernorm_backward_row(x + r * cols, gamma, mean[r], invstd[r],
                               dy + r * cols, dx + r * cols, cols);
}

void add_bias_rows(const double* x, const double* bias, double* out, i64 rows,
                   i64 cols) {
    for (i64 r = 0; r < rows; ++r)
        add_bias_row(x + r * cols, bias, out + r * cols, cols);
}

}  // namespace serial

namespace par {

void matmul_nn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < m; ++i)
        matmul_nn_row(a + i * k, b, c + i * n, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < m; ++i)
        matmul_nt_row(a + i * k, b, c + i * n, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < m; ++r)
        matmul_tn_row(a, b, c + r * n, r, k, m, n, accumulate);
}

void softmax_rows(const double* x, double* out, i64 rows, i64 cols) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r) softmax_row(x + r * cols, out + r * cols, cols);
}

void softmax_backward_rows(const double* y, const double* dy, double* dx,
                           i64 rows, i64 cols) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r)
        softmax_backward_row(y + r * cols, dy + r * cols, dx + r * cols, cols);
}

void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* out, double* mean, double* invstd, i64 rows,
                    i64 cols, double eps) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r)
        layernorm_row(x + r * cols, gamma, beta, out + r * cols, mean + r,
                      invstd + r, cols, eps);
}

void layernorm_backward_rows(const double* x, const double* gamma,
                             const double* mean, const double* invstd,
                             const double* dy, double* dx, i64 rows, i64 cols) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r)
        layernorm_backward_row(x + r * cols, gamma, mean[r], invstd[r],
                               dy + r * cols, dx + r * cols, cols);
}

void add_bias_rows(const double* x, const double* bias, double* out, i64 rows,
                   i64 cols) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r)
        add_bias_row(x + r * cols, bias, out + r * cols, cols);
}

}  // namespace par

void set_parallel_threshold(i64 flops) {
    g_parallel_threshold.store(flops, std::memory_order_relaxed);
}

i64 parallel_threshold() {
    return g_parallel_threshold.load(std::memory_order_relaxed);
}

int worker_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul_nn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate) {
    if (go_parallel(2 * m * k * n))
        par::matmul_nn(a, b, c, m, k, n, accumulate);
    else
        serial::matmul_nn(a, b, c, m, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate) {
    if (go_parallel(2 * m * k * n))
        par::matmul_nt(a, b, c, m, k, n, accumulate);
    else
        serial::matmul_nt(a, b, c, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate) {
    if (go_parallel(2 * m * k * n))
        par::matmul_tn(a, b, c, m, k, n, accumulate);
    else
        serial::matmul_tn(a, b, c, m, k, n, accumulate);
}

void softmax_rows(const double* x, double* out, i64 rows, i64 cols) {
    if (go_parallel(8 * rows * cols))
        par::softmax_rows(x, out, rows, cols);
    else
        serial::softmax_rows(x, out, rows, cols);
}

void softmax_backward_rows(const double* y, const double* dy, double* dx,
                           i64 rows, i64 cols) {
    if (go_parallel(4 * rows * cols))
        par::softmax_backward_rows(y, dy, dx, rows, cols);
    else
        serial::softmax_backward_rows(y, dy, dx, rows, cols);
}

void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* out, double* mean, double* invstd, i64 rows,
                    i64 cols, double eps) {
    if (go_parallel(8 * rows * cols))
        par::layernorm_rows(x, gamma, beta, out, mean, invstd, rows, cols, eps);
    else
        serial::layernorm_rows(x, gamma, beta, out, mean, invstd, rows, cols, eps);
}

void layernorm_backward_rows(const double* x, const double* gamma,
                             const double* mean, const double* invstd,
                             const double* dy, double* dx, i64 rows, i64 cols) {
    if (go_parallel(8 * rows * cols))
        par::layernorm_backward_rows(x, gamma, mean, invstd, dy, dx, rows, cols);
    else
        serial::layernorm_backward_rows(x, gamma, mean, invstd, dy, dx, rows, cols);
}

void add_bias_rows(const double* x, const double* bias, double* out, i64 rows,
                   i64 cols) {
    if (go_parallel(rows * cols))
        par::add_bias_rows(x, bias, out, rows, cols);
    else
        serial::add_bias_rows(x, bias, out, rows, cols);
}

}  // namespace adaptlab::kernels
