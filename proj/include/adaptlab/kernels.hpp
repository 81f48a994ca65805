#pragma once

#include <cstdint>

// Dense f64 kernels behind the tensor ops. Each kernel has a serial reference
// driver and an OpenMP driver; both call the same per-row body, so their
// outputs are bit-identical and the parallel path can be validated against
// the serial one. The unqualified functions dispatch on problem size.
namespace adaptlab::kernels {

using i64 = std::int64_t;

namespace serial {

// c (m x n) = a (m x k) * b (k x n); accumulate adds into c.
void matmul_nn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate = false);
// c (m x n) = a (m x k) * b^T, b given as (n x k).
void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate = false);
// c (m x n) = a^T * b, a given as (k x m), b as (k x n).
void matmul_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate = false);

// out[r,:] = softmax(x[r,:]) per row.
void softmax_rows(const double* x, double* out, i64 rows, i64 cols);
// dx[r,:] += y[r,:] .* (dy[r,:] - (dy[r,:] . y[r,:])) per row (y = softmax out).
void softmax_backward_rows(const double* y, const double* dy, double* dx,
                           i64 rows, i64 cols);

// Per-row layer norm with affine gain/bias; saves mean and 1/std for backward.
void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* out, double* mean, double* invstd, i64 rows,
                    i64 cols, double eps);
// Input gradient only; gamma/beta grads are cheap reductions done by the op.
void layernorm_backward_rows(const double* x, const double* gamma,
                             const double* mean, const double* invstd,
                             const double* dy, double* dx, i64 rows, i64 cols);

// out[r,:] = x[r,:] + bias
void add_bias_rows(const double* x, const double* bias, double* out, i64 rows,
                   i64 cols);

}  // namespace serial

namespace par {

void matmul_nn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate = false);
void softmax_rows(const double* x, double* out, i64 rows, i64 cols);
void softmax_backward_rows(const double* y, const double* dy, double* dx,
                           i64 rows, i64 cols);
void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* out, double* mean, double* invstd, i64 rows,
                    i64 cols, double eps);
void layernorm_backward_rows(const double* x, const double* gamma,
                             const double* mean, const double* invstd,
                             const double* dy, double* dx, i64 rows, i64 cols);
void add_bias_rows(const double* x, const double* bias, double* out, i64 rows,
                   i64 cols);

}  // namespace par

// Work threshold (in flops) below which the dispatchers stay serial.
void set_parallel_threshold(i64 flops);
i64 parallel_threshold();
// Number of OpenMP threads the par:: drivers will use right now.
int worker_threads();

void matmul_nn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n,
               bool accumulate = false);
void softmax_rows(const double* x, double* out, i64 rows, i64 cols);
void softmax_backward_rows(const double* y, const double* dy, double* dx,
                           i64 rows, i64 cols);
void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double* out, double* mean, double* invstd, i64 rows,
                    i64 cols, double eps);
void layernorm_backward_rows(const double* x, const double* gamma,
                             const double* mean, const double* invstd,
                             const double* dy, double* dx, i64 rows, i64 cols);
void add_bias_rows(const double* x, const double* bias, double* out, i64 rows,
                   i64 cols);

}  // namespace adaptlab::kernels
