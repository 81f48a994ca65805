#pragma once

#include <functional>
#include <vector>

#include "adaptlab/tape.hpp"

namespace adaptlab {

// Learnable rational activation of order (m, n):
//   R(x) = (sum_{j=0..m} a_j x^j) / (1 + |sum_{k=1..n} b_k x^k|)
// The absolute value keeps the denominator >= 1 for any real x and any finite
// coefficients, so the function has no poles.
struct RationalCoefficients {
    std::vector<double> a;  // numerator a_0..a_m
    std::vector<double> b;  // denominator b_1..b_n

    int order_m() const { return static_cast<int>(a.size()) - 1; }
    int order_n() const { return static_cast<int>(b.size()); }
    int param_count() const { return static_cast<int>(a.size() + b.size()); }
};

// a_0 = value, everything else zero; R is the constant function.
RationalCoefficients init_constant(double value, int m = 5, int n = 4);

double rational_value(double x, const RationalCoefficients& c);

struct RationalGradient {
    double value;
    double dx;
    std::vector<double> da;
    std::vector<double> db;
};

// Analytic derivatives at one point, scaled by upstream. With N, S, D = 1+|S|:
//   dR/da_j = x^j / D
//   dR/db_k = -N sign(S) x^k / D^2
//   dR/dx   = (N' D - N sign(S) S') / D^2,  sign(0) = 0.
RationalGradient rational_backward(double x, const RationalCoefficients& c,
                                   double upstream = 1.0);

// Elementwise tape op. a has m+1 entries, b has n; both may be trainable.
// Non-finite inputs raise DomainError naming the offending index.
TensorRef rational_apply(Tape& tape, const TensorRef& x, const TensorRef& a,
                         const TensorRef& b);

struct FitOptions {
    double tolerance = 0.1;
    int max_iters = 20000;
    double lr = 5e-3;
    std::uint64_t seed = 1234;
};

struct FitResult {
    RationalCoefficients coeffs;
    double max_abs_error = 0.0;
    // False when the iteration budget ran out above tolerance; the returned
    // coefficients are still the best found.
    bool within_tolerance = false;
};

// Least-squares fit of R to a scalar target on a grid. Seeds the coefficients
// from the pole-free linearization N(x) - t(x) S(x) ~ t(x) and refines by
// Adam on the true squared error (the absolute value makes the problem
// non-linear). The grid must span at least [-3, 3] with >= 10(m+n+1) points.
FitResult fit_to_function(const std::function<double(double)>& target,
                          const std::vector<double>& grid, int m, int n,
                          const FitOptions& options = {});

}  // namespace adaptlab
