#include "adaptlab/rational.hpp"

#include <algorithm>
#include <cmath>

#include "adaptlab/adam.hpp"
#include "adaptlab/rng.hpp"

namespace adaptlab {

namespace {

double sign0(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Horner evaluation of p(x) = sum_j coeff[j] x^j together with p'(x).
void poly_and_deriv(const double* coeff, int degree, double x, double* p,
                    double* dp) {
    double v = coeff[degree];
    double d = 0.0;
    for (int j = degree - 1; j >= 0; --j) {
        d = d * x + v;
        v = v * x + coeff[j];
    }
    *p = v;
    *dp = d;
}

// S(x) = sum_{k=1..n} b_k x^k and S'(x); b[0] holds b_1.
void spoly_and_deriv(const double* b, int n, double x, double* s, double* ds) {
    if (n == 0) {
        *s = 0.0;
        *ds = 0.0;
        return;
    }
    double v = b[n - 1];
    double d = 0.0;
    for (int k = n - 2; k >= 0; --k) {
        d = d * x + v;
        v = v * x + b[k];
    }
    // v = b_1 + b_2 x + ... ; S = x v, S' = v + x (dv)
    *s = x * v;
    *ds = v + x * d;
}

struct PointEval {
    double numer, dnumer, s, ds, denom, value;
};

PointEval eval_point(double x, const double* a, int m, const double* b, int n) {
    PointEval e;
    poly_and_deriv(a, m, x, &e.numer, &e.dnumer);
    spoly_and_deriv(b, n, x, &e.s, &e.ds);
    e.denom = 1.0 + std::abs(e.s);
    e.value = e.numer / e.denom;
    return e;
}

// Solve the square system m*x = rhs in place by Gaussian elimination with
// partial pivoting; dim is small (m+n+1 coefficients).
bool solve_dense(std::vector<double>& m, std::vector<double>& rhs, int dim) {
    for (int col = 0; col < dim; ++col) {
        int pivot = col;
        for (int r = col + 1; r < dim; ++r)
            if (std::abs(m[r * dim + col]) > std::abs(m[pivot * dim + col]))
                pivot = r;
        if (std::abs(m[pivot * dim + col]) < 1e-14) return false;
        if (pivot != col) {
            for (int j = 0; j < dim; ++j)
                std::swap(m[col * dim + j], m[pivot * dim + j]);
            std::swap(rhs[col], rhs[pivot]);
        }
        const double inv = 1.0 / m[col * dim + col];
        for (int r = col + 1; r < dim; ++r) {
            const double f = m[r * dim + col] * inv;
            if (f == 0.0) continue;
            for (int j = col; j < dim; ++j) m[r * dim + j] -= f * m[col * dim + j];
            rhs[r] -= f * rhs[col];
        }
    }
    for (int r = dim - 1; r >= 0; --r) {
        double acc = rhs[r];
        for (int j = r + 1; j < dim; ++j) acc -= m[r * dim + j] * rhs[j];
        rhs[r] = acc / m[r * dim + r];
    }
    return true;
}

double max_abs_error_on(const RationalCoefficients& c,
                        const std::vector<double>& grid,
                        const std::vector<double>& targets) {
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        worst = std::max(worst, std::abs(rational_value(grid[i], c) - targets[i]));
    return worst;
}

}  // namespace

RationalCoefficients init_constant(double value, int m, int n) {
    if (!std::isfinite(value))
        throw DomainError("init_constant: non-finite value");
    if (m < 0 || n < 0)
        throw ConfigError("init_constant: negative order (" + std::to_string(m) +
                          "," + std::to_string(n) + ")");
    RationalCoefficients c;
    c.a.assign(static_cast<std::size_t>(m) + 1, 0.0);
    c.b.assign(static_cast<std::size_t>(n), 0.0);
    c.a[0] = value;
    return c;
}

double rational_value(double x, const RationalCoefficients& c) {
    const PointEval e = eval_point(x, c.a.data(), c.order_m(), c.b.data(),
                                   c.order_n());
    return e.value;
}

RationalGradient rational_backward(double x, const RationalCoefficients& c,
                                   double upstream) {
    const int m = c.order_m(), n = c.order_n();
    const PointEval e = eval_point(x, c.a.data(), m, c.b.data(), n);
    const double sg = sign0(e.s);
    const double inv_d = 1.0 / e.denom;
    const double inv_d2 = inv_d * inv_d;

    RationalGradient g;
    g.value = e.value;
    g.dx = upstream * (e.dnumer * e.denom - e.numer * sg * e.ds) * inv_d2;
    g.da.resize(m + 1);
    double xj = 1.0;
    for (int j = 0; j <= m; ++j) {
        g.da[j] = upstream * xj * inv_d;
        xj *= x;
    }
    g.db.resize(n);
    double xk = x;
    for (int k = 0; k < n; ++k) {
        g.db[k] = upstream * (-e.numer * sg * xk * inv_d2);
        xk *= x;
    }
    return g;
}

TensorRef rational_apply(Tape& tape, const TensorRef& x, const TensorRef& a,
                         const TensorRef& b) {
    if (a->rank() != 1 || b->rank() != 1)
        throw ConfigError("rational: coefficient shapes " + shape_str(a->shape) +
                          " vs " + shape_str(b->shape) + " must be rank-1");
    const int m = static_cast<int>(a->size()) - 1;
    const int n = static_cast<int>(b->size());
    const std::size_t count = x->values.size();
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double xi = x->values[i];
        if (!std::isfinite(xi))
            throw DomainError("rational: non-finite input at index " +
                              std::to_string(i));
        v[i] = eval_point(xi, a->values.data(), m, b->values.data(), n).value;
    }
    const bool path = x->on_path || a->on_path || b->on_path;
    auto out = make_tensor(x->shape, std::move(v));
    out->on_path = path;
    if (path) {
        out->ensure_grad();
        tape.push(out, [x, a, b, out, m, n, count] {
            for (std::size_t i = 0; i < count; ++i) {
                const double xi = x->values[i];
                const double up = out->grad[i];
                if (up == 0.0) continue;
                const PointEval e =
                    eval_point(xi, a->values.data(), m, b->values.data(), n);
                const double sg = sign0(e.s);
                const double inv_d = 1.0 / e.denom;
                const double inv_d2 = inv_d * inv_d;
                if (x->on_path)
                    x->grad[i] +=
                        up * (e.dnumer * e.denom - e.numer * sg * e.ds) * inv_d2;
                if (a->on_path) {
                    double xj = 1.0;
                    for (int j = 0; j <= m; ++j) {
                        a->grad[j] += up * xj * inv_d;
                        xj *= xi;
                    }
                }
                if (b->on_path) {
                    double xk = xi;
                    for (int k = 0; k < n; ++k) {
                        b->grad[k] += up * (-e.numer * sg * xk * inv_d2);
                        xk *= xi;
                    }
                }
            }
        });
    }
    return out;
}

FitResult fit_to_function(const std::function<double(double)>& target,
                          const std::vector<double>& grid, int m, int n,
                          const FitOptions& options) {
    const int dim = m + n + 1;
    if (static_cast<int>(grid.size()) < 10 * dim)
        throw ConfigError("fit_to_function: grid of " +
                          std::to_string(grid.size()) + " points, need >= " +
                          std::to_string(10 * dim));
    const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
    if (*lo > -3.0 || *hi < 3.0)
        throw ConfigError("fit_to_function: grid must span at least [-3, 3]");

    std::vector<double> targets(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) targets[i] = target(grid[i]);

    // Seed: minimize || N(x_i) - t_i S(x_i) - t_i ||^2, linear in (a, b).
    // Ridge keeps the system solvable when the target is exactly
    // representable in more than one way (constant targets, for instance).
    std::vector<double> normal(dim * dim, 0.0);
    std::vector<double> rhs(dim, 0.0);
    std::vector<double> row(dim);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid[i];
        const double t = targets[i];
        double xj = 1.0;
        for (int j = 0; j <= m; ++j) {
            row[j] = xj;
            xj *= x;
        }
        double xk = x;
        for (int k = 0; k < n; ++k) {
            row[m + 1 + k] = -t * xk;
            xk *= x;
        }
        for (int r = 0; r < dim; ++r) {
            for (int c2 = 0; c2 < dim; ++c2) normal[r * dim + c2] += row[r] * row[c2];
            rhs[r] += row[r] * t;
        }
    }
    for (int r = 0; r < dim; ++r) normal[r * dim + r] += 1e-9;

    RationalCoefficients best = init_constant(0.0, m, n);
    {
        std::vector<double> nm = normal, rv = rhs;
        if (solve_dense(nm, rv, dim)) {
            for (int j = 0; j <= m; ++j) best.a[j] = rv[j];
            for (int k = 0; k < n; ++k) best.b[k] = rv[m + 1 + k];
        }
    }
    double best_err = max_abs_error_on(best, grid, targets);

    // Refine with Adam on the true objective; restart from small random
    // perturbations if the budget allows and tolerance is not met.
    Rng restart_rng(options.seed);
    RationalCoefficients current = best;
    const int restarts = 3;
    int iters_per_round = options.max_iters / (restarts + 1);
    if (iters_per_round < 1) iters_per_round = options.max_iters;
    for (int round = 0; round <= restarts; ++round) {
        if (best_err <= options.tolerance * 0.25) break;
        if (round > 0) {
            current = best;
            for (auto& v : current.a) v += restart_rng.normal() * 0.05;
            for (auto& v : current.b) v += restart_rng.normal() * 0.05;
        }
        AdamConfig acfg;
        acfg.lr = options.lr;
        AdamState astate;
        Tensor theta;
        theta.shape = {dim};
        theta.values.resize(dim);
        for (int j = 0; j <= m; ++j) theta.values[j] = current.a[j];
        for (int k = 0; k < n; ++k) theta.values[m + 1 + k] = current.b[k];
        std::vector<double> gradv(dim);
        const double inv_count = 1.0 / static_cast<double>(grid.size());
        for (int it = 0; it < iters_per_round; ++it) {
            std::fill(gradv.begin(), gradv.end(), 0.0);
            for (int j = 0; j <= m; ++j) current.a[j] = theta.values[j];
            for (int k = 0; k < n; ++k) current.b[k] = theta.values[m + 1 + k];
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const double x = grid[i];
                const PointEval e = eval_point(x, current.a.data(), m,
                                               current.b.data(), n);
                const double res = 2.0 * (e.value - targets[i]) * inv_count;
                if (res == 0.0) continue;
                const double sg = sign0(e.s);
                const double inv_d = 1.0 / e.denom;
                const double inv_d2 = inv_d * inv_d;
                double xj = 1.0;
                for (int j = 0; j <= m; ++j) {
                    gradv[j] += res * xj * inv_d;
                    xj *= x;
                }
                double xk = x;
                for (int k = 0; k < n; ++k) {
                    gradv[m + 1 + k] += res * (-e.numer * sg * xk * inv_d2);
                    xk *= x;
                }
            }
            adam_step(theta, gradv, astate, acfg);
            if ((it + 1) % 200 == 0 || it + 1 == iters_per_round) {
                for (int j = 0; j <= m; ++j) current.a[j] = theta.values[j];
                for (int k = 0; k < n; ++k) current.b[k] = theta.values[m + 1 + k];
                const double err = max_abs_error_on(current, grid, targets);
                if (err < best_err) {
                    best_err = err;
                    best = current;
                }
            }
        }
    }

    FitResult result;
    result.coeffs = best;
    result.max_abs_error = best_err;
    result.within_tolerance = best_err <= options.tolerance;
    return result;
}

}  // namespace adaptlab
