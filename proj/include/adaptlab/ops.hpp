#pragma once

#include <span>
#include <vector>

#include "adaptlab/tape.hpp"

namespace adaptlab {

// Differentiable primitives. Each computes its forward value eagerly and, when
// any input is on the differentiation path, records a backward closure on the
// tape. Shape violations raise ConfigError with both shapes in the message.

TensorRef matmul(Tape& tape, const TensorRef& a, const TensorRef& b);
TensorRef add(Tape& tape, const TensorRef& a, const TensorRef& b);
TensorRef sub(Tape& tape, const TensorRef& a, const TensorRef& b);
TensorRef mul(Tape& tape, const TensorRef& a, const TensorRef& b);
TensorRef scalar_mul(Tape& tape, const TensorRef& a, double s);
// x is (rows x n), bias is (n); adds bias to every row.
TensorRef add_bias(Tape& tape, const TensorRef& x, const TensorRef& bias);
// Elementwise x^k for integer k >= 0 (0^0 = 1).
TensorRef pow_int(Tape& tape, const TensorRef& x, int k);
// Elementwise |x|; derivative uses sign(0) = 0.
TensorRef abs_op(Tape& tape, const TensorRef& x);
TensorRef exp_op(Tape& tape, const TensorRef& x);
// Elementwise natural log; non-positive input raises DomainError naming the
// offending flat index.
TensorRef log_op(Tape& tape, const TensorRef& x);
TensorRef relu(Tape& tape, const TensorRef& x);
// Softmax over the last axis.
TensorRef softmax_last(Tape& tape, const TensorRef& x);
// Per-row layer norm over the last axis with affine gain/bias.
TensorRef layer_norm(Tape& tape, const TensorRef& x, const TensorRef& gamma,
                     const TensorRef& beta, double eps = 1e-5);
// x is (batch*seq x d); averages the seq axis away -> (batch x d).
TensorRef mean_pool_seq(Tape& tape, const TensorRef& x, i64 batch);
// Concatenate rank-2 tensors along axis 0 or 1 (rank-1 along axis 0).
TensorRef concat(Tape& tape, const std::vector<TensorRef>& parts, int axis);
TensorRef sum_all(Tape& tape, const TensorRef& x);
TensorRef mean_all(Tape& tape, const TensorRef& x);

// Row-gather from an embedding table (vocab x dim); ids index rows. Gradient
// scatters back into the table only when the table is on the path.
TensorRef embedding(Tape& tape, const TensorRef& table,
                    std::span<const std::int32_t> ids);
// Select rows of a rank-2 tensor by index.
TensorRef gather_rows(Tape& tape, const TensorRef& x,
                      std::span<const std::int32_t> rows);

// Mean cross-entropy of logits (batch x classes) against integer labels.
TensorRef cross_entropy(Tape& tape, const TensorRef& logits,
                        std::span<const std::int32_t> labels);

struct AttentionWeights {
    TensorRef wq, bq, wk, bk, wv, bv, wo, bo;
};

// Fused multi-head self-attention over x viewed as batch rows of seq
// positions; one tape node. No attention mask: sequences are fixed length.
TensorRef multi_head_attention(Tape& tape, const TensorRef& x,
                               const AttentionWeights& w, i64 batch, i64 seq,
                               i64 heads);

}  // namespace adaptlab
