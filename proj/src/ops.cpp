#include "adaptlab/ops.hpp"

#include <cmath>
#include <cstring>

#include "adaptlab/kernels.hpp"

namespace adaptlab {

namespace {

TensorRef make_output(std::vector<i64> shape, std::vector<double> values,
                      bool on_path) {
    auto out = make_tensor(std::move(shape), std::move(values));
    out->on_path = on_path;
    if (on_path) out->ensure_grad();
    return out;
}

void require_rank2(const TensorRef& t, const char* op) {
    if (t->rank() != 2)
        throw ConfigError(std::string(op) + ": expected a rank-2 tensor, got " +
                          shape_str(t->shape));
}

}  // namespace

TensorRef matmul(Tape& tape, const TensorRef& a, const TensorRef& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a->shape[1] != b->shape[0])
        throw ConfigError("matmul: shape mismatch " + shape_str(a->shape) +
                          " vs " + shape_str(b->shape));
    const i64 m = a->shape[0], k = a->shape[1], n = b->shape[1];
    std::vector<double> v(static_cast<std::size_t>(m * n));
    kernels::matmul_nn(a->values.data(), b->values.data(), v.data(), m, k, n);
    const bool path = a->on_path || b->on_path;
    auto out = make_output({m, n}, std::move(v), path);
    if (path) {
        tape.push(out, [a, b, out, m, k, n] {
            if (a->on_path)
                kernels::matmul_nt(out->grad.data(), b->values.data(),
                                   a->grad.data(), m, n, k, true);
            if (b->on_path)
                kernels::matmul_tn(a->values.data(), out->grad.data(),
                                   b->grad.data(), k, m, n, true);
        });
    }
    return out;
}

TensorRef add(Tape& tape, const TensorRef& a, const TensorRef& b) {
    require_same_shape(a->shape, b->shape, "add");
    std::vector<double> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] + b->values[i];
    const bool path = a->on_path || b->on_path;
    auto out = make_output(a->shape, std::move(v), path);
    if (path) {
        tape.push(out, [a, b, out] {
            if (a->on_path)
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    a->grad[i] += out->grad[i];
            if (b->on_path)
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    b->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorRef sub(Tape& tape, const TensorRef& a, const TensorRef& b) {
    require_same_shape(a->shape, b->shape, "sub");
    std::vector<double> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] - b->values[i];
    const bool path = a->on_path || b->on_path;
    auto out = make_output(a->shape, std::move(v), path);
    if (path) {
        tape.push(out, [a, b, out] {
            if (a->on_path)
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    a->grad[i] += out->grad[i];
            if (b->on_path)
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    b->grad[i] -= out->grad[i];
        });
    }
    return out;
}

TensorRef mul(Tape& tape, const TensorRef& a, const TensorRef& b) {
    require_same_shape(a->shape, b->shape, "mul");
    std::vector<double> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] * b->values[i];
    const bool path = a->on_path || b->on_path;
    auto out = make_output(a->shape, std::move(v), path);
    if (path) {
        tape.push(out, [a, b, out] {
            if (a->on_path)
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    a->grad[i] += out->grad[i] * b->values[i];
            if (b->on_path)
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    b->grad[i] += out->grad[i] * a->values[i];
        });
    }
    return out;
}

TensorRef scalar_mul(Tape& tape, const TensorRef& a, double s) {
    std::vector<double> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] * s;
    auto out = make_output(a->shape, std::move(v), a->on_path);
    if (a->on_path) {
        tape.push(out, [a, out, s] {
            for (std::size_t i = 0; i < out->grad.size(); ++i)
                a->grad[i] += out->grad[i] * s;
        });
    }
    return out;
}

TensorRef add_bias(Tape& tape, const TensorRef& x, const TensorRef& bias) {
    if (bias->rank() != 1 || x->cols() != bias->shape[0])
        throw ConfigError("add_bias: shape mismatch " + shape_str(x->shape) +
                          " vs " + shape_str(bias->shape));
    const i64 rows = x->size() / bias->shape[0];
    const i64 cols = bias->shape[0];
    std::vector<double> v(x->values.size());
    kernels::add_bias_rows(x->values.data(), bias->values.data(), v.data(), rows,
                           cols);
    const bool path = x->on_path || bias->on_path;
    auto out = make_output(x->shape, std::move(v), path);
    if (path) {
        tape.push(out, [x, bias, out, rows, cols] {
            if (x->on_path)
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    x->grad[i] += out->grad[i];
            if (bias->on_path)
                for (i64 r = 0; r < rows; ++r)
                    for (i64 j = 0; j < cols; ++j)
                        bias->grad[j] += out->grad[r * cols + j];
        });
    }
    return out;
}

TensorRef pow_int(Tape& tape, const TensorRef& x, int k) {
    if (k < 0) throw ConfigError("pow_int: exponent must be >= 0, got " +
                                 std::to_string(k));
    auto ipow = [](double v, int e) {
        double r = 1.0;
        for (int i = 0; i < e; ++i) r *= v;
        return r;
    };
    std::vector<double> v(x->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = ipow(x->values[i], k);
    auto out = make_output(x->shape, std::move(v), x->on_path);
    if (x->on_path) {
        tape.push(out, [x, out, k, ipow] {
            for (std::size_t i = 0; i < out->grad.size(); ++i) {
                const double d =
                    k == 0 ? 0.0 : k * ipow(x->values[i], k - 1);
                x->grad[i] += out->grad[i] * d;
            }
        });
    }
    return out;
}

TensorRef abs_op(Tape& tape, const TensorRef& x) {
    std::vector<double> v(x->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::abs(x->values[i]);
    auto out = make_output(x->shape, std::move(v), x->on_path);
    if (x->on_path) {
        tape.push(out, [x, out] {
            for (std::size_t i = 0; i < out->grad.size(); ++i) {
                const double s =
                    x->values[i] > 0 ? 1.0 : (x->values[i] < 0 ? -1.0 : 0.0);
                x->grad[i] += out->grad[i] * s;
            }
        });
    }
    return out;
}

TensorRef exp_op(Tape& tape, const TensorRef& x) {
    std::vector<double> v(x->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(x->values[i]);
    auto out = make_output(x->shape, std::move(v), x->on_path);
    if (x->on_path) {
        tape.push(out, [x, out] {
            for (std::size_t i = 0; i < out->grad.size(); ++i)
                x->grad[i] += out->grad[i] * out->values[i];
        });
    }
    return out;
}

TensorRef log_op(Tape& tape, const TensorRef& x) {
    std::vector<double> v(x->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(x->values[i] > 0.0))
            throw DomainError("log: non-positive value " +
                              std::to_string(x->values[i]) + " at index " +
                              std::to_string(i));
        v[i] = std::log(x->values[i]);
    }
    auto out = make_output(x->shape, std::move(v), x->on_path);
    if (x->on_path) {
        tape.push(out, [x, out] {
            for (std::size_t i = 0; i < out->grad.size(); ++i)
                x->grad[i] += out->grad[i] / x->values[i];
        });
    }
    return out;
}

TensorRef relu(Tape& tape, const TensorRef& x) {
    std::vector<double> v(x->values.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = x->values[i] > 0 ? x->values[i] : 0.0;
    auto out = make_output(x->shape, std::move(v), x->on_path);
    if (x->on_path) {
        tape.push(out, [x, out] {
            for (std::size_t i = 0; i < out->grad.size(); ++i)
                if (x->values[i] > 0) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorRef softmax_last(Tape& tape, const TensorRef& x) {
    if (x->rank() < 1)
        throw ConfigError("softmax: scalar input " + shape_str(x->shape));
    const i64 cols = x->shape.back();
    const i64 rows = x->size() / cols;
    std::vector<double> v(x->values.size());
    kernels::softmax_rows(x->values.data(), v.data(), rows, cols);
    auto out = make_output(x->shape, std::move(v), x->on_path);
    if (x->on_path) {
        tape.push(out, [x, out, rows, cols] {
            kernels::softmax_backward_rows(out->values.data(), out->grad.data(),
                                           x->grad.data(), rows, cols);
        });
    }
    return out;
}

TensorRef layer_norm(Tape& tape, const TensorRef& x, const TensorRef& gamma,
                     const TensorRef& beta, double eps) {
    const i64 cols = x->shape.back();
    if (gamma->size() != cols || beta->size() != cols)
        throw ConfigError("layer_norm: shape mismatch " + shape_str(x->shape) +
                          " vs " + shape_str(gamma->shape));
    const i64 rows = x->size() / cols;
    std::vector<double> v(x->values.size());
    auto mean = std::make_shared<std::vector<double>>(rows);
    auto invstd = std::make_shared<std::vector<double>>(rows);
    kernels::layernorm_rows(x->values.data(), gamma->values.data(),
                            beta->values.data(), v.data(), mean->data(),
                            invstd->data(), rows, cols, eps);
    const bool path = x->on_path || gamma->on_path || beta->on_path;
    auto out = make_output(x->shape, std::move(v), path);
    if (path) {
        tape.push(out, [x, gamma, beta, out, mean, invstd, rows, cols] {
            if (x->on_path)
                kernels::layernorm_backward_rows(
                    x->values.data(), gamma->values.data(), mean->data(),
                    invstd->data(), out->grad.data(), x->grad.data(), rows, cols);
            if (gamma->on_path || beta->on_path) {
                for (i64 r = 0; r < rows; ++r) {
                    const double mu = (*mean)[r], is = (*invstd)[r];
                    for (i64 j = 0; j < cols; ++j) {
                        const double dy = out->grad[r * cols + j];
                        if (gamma->on_path)
                            gamma->grad[j] +=
                                dy * (x->values[r * cols + j] - mu) * is;
                        if (beta->on_path) beta->grad[j] += dy;
                    }
                }
            }
        });
    }
    return out;
}

TensorRef mean_pool_seq(Tape& tape, const TensorRef& x, i64 batch) {
    require_rank2(x, "mean_pool_seq");
    if (batch <= 0 || x->shape[0] % batch != 0)
        throw ConfigError("mean_pool_seq: rows " + std::to_string(x->shape[0]) +
                          " not divisible by batch " + std::to_string(batch));
    const i64 seq = x->shape[0] / batch;
    const i64 d = x->shape[1];
    std::vector<double> v(static_cast<std::size_t>(batch * d), 0.0);
    const double inv = 1.0 / static_cast<double>(seq);
    for (i64 b = 0; b < batch; ++b)
        for (i64 s = 0; s < seq; ++s)
            for (i64 j = 0; j < d; ++j)
                v[b * d + j] += x->values[(b * seq + s) * d + j] * inv;
    auto out = make_output({batch, d}, std::move(v), x->on_path);
    if (x->on_path) {
        tape.push(out, [x, out, batch, seq, d, inv] {
            for (i64 b = 0; b < batch; ++b)
                for (i64 s = 0; s < seq; ++s)
                    for (i64 j = 0; j < d; ++j)
                        x->grad[(b * seq + s) * d + j] += out->grad[b * d + j] * inv;
        });
    }
    return out;
}

TensorRef concat(Tape& tape, const std::vector<TensorRef>& parts, int axis) {
    if (parts.empty()) throw ConfigError("concat: no inputs");
    if (axis != 0 && axis != 1)
        throw ConfigError("concat: axis must be 0 or 1, got " +
                          std::to_string(axis));
    const i64 rank = parts[0]->rank();
    bool path = false;
    for (const auto& p : parts) {
        if (p->rank() != rank)
            throw ConfigError("concat: rank mismatch " +
                              shape_str(parts[0]->shape) + " vs " +
                              shape_str(p->shape));
        path = path || p->on_path;
    }
    if (rank == 1) {
        if (axis != 0) throw ConfigError("concat: rank-1 tensors use axis 0");
        i64 total = 0;
        for (const auto& p : parts) total += p->size();
        std::vector<double> v;
        v.reserve(total);
        for (const auto& p : parts)
            v.insert(v.end(), p->values.begin(), p->values.end());
        auto out = make_output({total}, std::move(v), path);
        if (path) {
            tape.push(out, [parts, out] {
                i64 off = 0;
                for (const auto& p : parts) {
                    if (p->on_path)
                        for (i64 i = 0; i < p->size(); ++i)
                            p->grad[i] += out->grad[off + i];
                    off += p->size();
                }
            });
        }
        return out;
    }
    if (axis == 0) {
        const i64 cols = parts[0]->shape[1];
        i64 rows = 0;
        for (const auto& p : parts) {
            if (p->shape[1] != cols)
                throw ConfigError("concat: shape mismatch " +
                                  shape_str(parts[0]->shape) + " vs " +
                                  shape_str(p->shape));
            rows += p->shape[0];
        }
        std::vector<double> v;
        v.reserve(rows * cols);
        for (const auto& p : parts)
            v.insert(v.end(), p->values.begin(), p->values.end());
        auto out = make_output({rows, cols}, std::move(v), path);
        if (path) {
            tape.push(out, [parts, out] {
                i64 off = 0;
                for (const auto& p : parts) {
                    if (p->on_path)
                        for (i64 i = 0; i < p->size(); ++i)
                            p->grad[i] += out->grad[off + i];
                    off += p->size();
                }
            });
        }
        return out;
    }
    // axis == 1
    const i64 rows = parts[0]->shape[0];
    i64 cols = 0;
    for (const auto& p : parts) {
        if (p->shape[0] != rows)
            throw ConfigError("concat: shape mismatch " +
                              shape_str(parts[0]->shape) + " vs " +
                              shape_str(p->shape));
        cols += p->shape[1];
    }
    std::vector<double> v(static_cast<std::size_t>(rows * cols));
    i64 col_off = 0;
    for (const auto& p : parts) {
        const i64 pc = p->shape[1];
        for (i64 r = 0; r < rows; ++r)
            std::memcpy(v.data() + r * cols + col_off, p->values.data() + r * pc,
                        pc * sizeof(double));
        col_off += pc;
    }
    auto out = make_output({rows, cols}, std::move(v), path);
    if (path) {
        tape.push(out, [parts, out, rows, cols] {
            i64 off = 0;
            for (const auto& p : parts) {
                const i64 pc = p->shape[1];
                if (p->on_path)
                    for (i64 r = 0; r < rows; ++r)
                        for (i64 j = 0; j < pc; ++j)
                            p->grad[r * pc + j] += out->grad[r * cols + off + j];
                off += pc;
            }
        });
    }
    return out;
}

TensorRef sum_all(Tape& tape, const TensorRef& x) {
    double s = 0.0;
    for (double v : x->values) s += v;
    auto out = make_output({1}, {s}, x->on_path);
    if (x->on_path) {
        tape.push(out, [x, out] {
            for (std::size_t i = 0; i < x->grad.size(); ++i)
                x->grad[i] += out->grad[0];
        });
    }
    return out;
}

TensorRef mean_all(Tape& tape, const TensorRef& x) {
    double s = 0.0;
    for (double v : x->values) s += v;
    const double inv = 1.0 / static_cast<double>(x->size());
    auto out = make_output({1}, {s * inv}, x->on_path);
    if (x->on_path) {
        tape.push(out, [x, out, inv] {
            for (std::size_t i = 0; i < x->grad.size(); ++i)
                x->grad[i] += out->grad[0] * inv;
        });
    }
    return out;
}

TensorRef embedding(Tape& tape, const TensorRef& table,
                    std::span<const std::int32_t> ids) {
    require_rank2(table, "embedding");
    const i64 vocab = table->shape[0], d = table->shape[1];
    std::vector<double> v(ids.size() * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const i64 id = ids[i];
        if (id < 0 || id >= vocab)
            throw ConfigError("embedding: id " + std::to_string(id) +
                              " outside vocab of " + std::to_string(vocab));
        std::memcpy(v.data() + i * d, table->values.data() + id * d,
                    d * sizeof(double));
    }
    auto out = make_output({static_cast<i64>(ids.size()), d}, std::move(v),
                           table->on_path);
    if (table->on_path) {
        std::vector<std::int32_t> idv(ids.begin(), ids.end());
        tape.push(out, [table, out, idv = std::move(idv), d] {
            for (std::size_t i = 0; i < idv.size(); ++i)
                for (i64 j = 0; j < d; ++j)
                    table->grad[idv[i] * d + j] += out->grad[i * d + j];
        });
    }
    return out;
}

TensorRef gather_rows(Tape& tape, const TensorRef& x,
                      std::span<const std::int32_t> rows) {
    require_rank2(x, "gather_rows");
    const i64 d = x->shape[1];
    std::vector<double> v(rows.size() * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const i64 r = rows[i];
        if (r < 0 || r >= x->shape[0])
            throw ConfigError("gather_rows: row " + std::to_string(r) +
                              " outside " + shape_str(x->shape));
        std::memcpy(v.data() + i * d, x->values.data() + r * d,
                    d * sizeof(double));
    }
    auto out =
        make_output({static_cast<i64>(rows.size()), d}, std::move(v), x->on_path);
    if (x->on_path) {
        std::vector<std::int32_t> rv(rows.begin(), rows.end());
        tape.push(out, [x, out, rv = std::move(rv), d] {
            for (std::size_t i = 0; i < rv.size(); ++i)
                for (i64 j = 0; j < d; ++j)
                    x->grad[rv[i] * d + j] += out->grad[i * d + j];
        });
    }
    return out;
}

TensorRef cross_entropy(Tape& tape, const TensorRef& logits,
                        std::span<const std::int32_t> labels) {
    require_rank2(logits, "cross_entropy");
    const i64 batch = logits->shape[0], classes = logits->shape[1];
    if (static_cast<i64>(labels.size()) != batch)
        throw ConfigError("cross_entropy: " + std::to_string(labels.size()) +
                          " labels for batch of " + std::to_string(batch));
    auto probs = std::make_shared<std::vector<double>>(logits->values.size());
    kernels::softmax_rows(logits->values.data(), probs->data(), batch, classes);
    double loss = 0.0;
    for (i64 b = 0; b < batch; ++b) {
        const i64 y = labels[b];
        if (y < 0 || y >= classes)
            throw ConfigError("cross_entropy: label " + std::to_string(y) +
                              " outside " + std::to_string(classes) + " classes");
        double p = (*probs)[b * classes + y];
        if (p < 1e-300) p = 1e-300;
        loss -= std::log(p);
    }
    loss /= static_cast<double>(batch);
    auto out = make_output({1}, {loss}, logits->on_path);
    if (logits->on_path) {
        std::vector<std::int32_t> lv(labels.begin(), labels.end());
        tape.push(out, [logits, out, probs, lv = std::move(lv), batch, classes] {
            const double up = out->grad[0] / static_cast<double>(batch);
            for (i64 b = 0; b < batch; ++b)
                for (i64 c = 0; c < classes; ++c)
                    logits->grad[b * classes + c] +=
                        up * ((*probs)[b * classes + c] - (lv[b] == c ? 1.0 : 0.0));
        });
    }
    return out;
}

TensorRef multi_head_attention(Tape& tape, const TensorRef& x,
                               const AttentionWeights& w, i64 batch, i64 seq,
                               i64 heads) {
    require_rank2(x, "attention");
    const i64 d = x->shape[1];
    if (x->shape[0] != batch * seq)
        throw ConfigError("attention: rows " + shape_str(x->shape) +
                          " vs batch*seq [" + std::to_string(batch * seq) + "," +
                          std::to_string(d) + "]");
    if (d % heads != 0)
        throw ConfigError("attention: dim " + std::to_string(d) +
                          " not divisible by " + std::to_string(heads) + " heads");
    const i64 rows = batch * seq;
    const i64 dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    auto project = [&](const TensorRef& wt, const TensorRef& bt) {
        auto p = std::make_shared<std::vector<double>>(rows * d);
        kernels::matmul_nn(x->values.data(), wt->values.data(), p->data(), rows,
                           d, d);
        kernels::add_bias_rows(p->data(), bt->values.data(), p->data(), rows, d);
        return p;
    };
    auto q = project(w.wq, w.bq);
    auto k = project(w.wk, w.bk);
    auto vv = project(w.wv, w.bv);

    // Softmaxed attention rows, laid out (batch, head, seq, seq); kept for
    // backward.
    auto attn = std::make_shared<std::vector<double>>(batch * heads * seq * seq);
    std::vector<double> ctx(rows * d);
    std::vector<double> scores(seq * seq);
    for (i64 b = 0; b < batch; ++b) {
        for (i64 h = 0; h < heads; ++h) {
            const i64 col = h * dh;
            // scores[s,t] = q_b[s, col:col+dh] . k_b[t, col:col+dh] * scale
            for (i64 s = 0; s < seq; ++s) {
                const double* qrow = q->data() + (b * seq + s) * d + col;
                for (i64 t = 0; t < seq; ++t) {
                    const double* krow = k->data() + (b * seq + t) * d + col;
                    double acc = 0.0;
                    for (i64 c = 0; c < dh; ++c) acc += qrow[c] * krow[c];
                    scores[s * seq + t] = acc * scale;
                }
            }
            double* arow = attn->data() + ((b * heads + h) * seq) * seq;
            kernels::serial::softmax_rows(scores.data(), arow, seq, seq);
            // ctx[s, col:col+dh] = sum_t attn[s,t] * v_b[t, col:col+dh]
            for (i64 s = 0; s < seq; ++s) {
                double* crow = ctx.data() + (b * seq + s) * d + col;
                for (i64 c = 0; c < dh; ++c) crow[c] = 0.0;
                for (i64 t = 0; t < seq; ++t) {
                    const double a = arow[s * seq + t];
                    const double* vrow = vv->data() + (b * seq + t) * d + col;
                    for (i64 c = 0; c < dh; ++c) crow[c] += a * vrow[c];
                }
            }
        }
    }

    std::vector<double> outv(rows * d);
    kernels::matmul_nn(ctx.data(), w.wo->values.data(), outv.data(), rows, d, d);
    kernels::add_bias_rows(outv.data(), w.bo->values.data(), outv.data(), rows, d);

    const bool wpath = w.wq->on_path || w.wk->on_path || w.wv->on_path ||
                       w.wo->on_path || w.bq->on_path || w.bk->on_path ||
                       w.bv->on_path || w.bo->on_path;
    const bool path = x->on_path || wpath;
    auto out = make_output({rows, d}, std::move(outv), path);
    if (!path) return out;

    auto ctx_keep = std::make_shared<std::vector<double>>(std::move(ctx));
    tape.push(out, [x, w, out, q, k, vv, attn, ctx_keep, batch, seq, heads, d,
                    dh, scale, rows, wpath] {
        // d_ctx = dout * wo^T ; wo/bo grads from ctx.
        std::vector<double> dctx(rows * d);
        kernels::matmul_nt(out->grad.data(), w.wo->values.data(), dctx.data(),
                           rows, d, d);
        if (w.wo->on_path)
            kernels::matmul_tn(ctx_keep->data(), out->grad.data(),
                               w.wo->grad.data(), d, rows, d, true);
        if (w.bo->on_path)
            for (i64 r = 0; r < rows; ++r)
                for (i64 j = 0; j < d; ++j) w.bo->grad[j] += out->grad[r * d + j];

        std::vector<double> dq(rows * d, 0.0), dk(rows * d, 0.0),
            dvv(rows * d, 0.0);
        std::vector<double> dattn(seq * seq), dscore(seq * seq);
        for (i64 b = 0; b < batch; ++b) {
            for (i64 h = 0; h < heads; ++h) {
                const i64 col = h * dh;
                const double* arow = attn->data() + ((b * heads + h) * seq) * seq;
                // dattn[s,t] = dctx[s,col:] . v[t,col:]; dv[t,col:] += attn[s,t]*dctx[s,col:]
                for (i64 s = 0; s < seq; ++s) {
                    const double* dcrow = dctx.data() + (b * seq + s) * d + col;
                    for (i64 t = 0; t < seq; ++t) {
                        const double* vrow = vv->data() + (b * seq + t) * d + col;
                        double* dvrow = dvv.data() + (b * seq + t) * d + col;
                        const double a = arow[s * seq + t];
                        double acc = 0.0;
                        for (i64 c = 0; c < dh; ++c) {
                            acc += dcrow[c] * vrow[c];
                            dvrow[c] += a * dcrow[c];
                        }
                        dattn[s * seq + t] = acc;
                    }
                }
                std::fill(dscore.begin(), dscore.end(), 0.0);
                kernels::serial::softmax_backward_rows(arow, dattn.data(),
                                                       dscore.data(), seq, seq);
                // dq[s] += scale * sum_t dscore[s,t] k[t]; dk[t] += scale * sum_s dscore[s,t] q[s]
                for (i64 s = 0; s < seq; ++s) {
                    double* dqrow = dq.data() + (b * seq + s) * d + col;
                    const double* qrow = q->data() + (b * seq + s) * d + col;
                    for (i64 t = 0; t < seq; ++t) {
                        const double g = dscore[s * seq + t] * scale;
                        const double* krow = k->data() + (b * seq + t) * d + col;
                        double* dkrow = dk.data() + (b * seq + t) * d + col;
                        for (i64 c = 0; c < dh; ++c) {
                            dqrow[c] += g * krow[c];
                            dkrow[c] += g * qrow[c];
                        }
                    }
                }
            }
        }

        if (x->on_path) {
            kernels::matmul_nt(dq.data(), w.wq->values.data(), x->grad.data(),
                               rows, d, d, true);
            kernels::matmul_nt(dk.data(), w.wk->values.data(), x->grad.data(),
                               rows, d, d, true);
            kernels::matmul_nt(dvv.data(), w.wv->values.data(), x->grad.data(),
                               rows, d, d, true);
        }
        if (wpath) {
            auto proj_back = [&](const TensorRef& wt, const TensorRef& bt,
                                 const std::vector<double>& dp) {
                if (wt->on_path)
                    kernels::matmul_tn(x->values.data(), dp.data(),
                                       wt->grad.data(), d, rows, d, true);
                if (bt->on_path)
                    for (i64 r = 0; r < rows; ++r)
                        for (i64 j = 0; j < d; ++j) bt->grad[j] += dp[r * d + j];
            };
            proj_back(w.wq, w.bq, dq);
            proj_back(w.wk, w.bk, dk);
            proj_back(w.wv, w.bv, dvv);
        }
    });
    return out;
}

}  // namespace adaptlab
