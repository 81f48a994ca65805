#include <doctest.h>

#include <cmath>

#include "adaptlab/adam.hpp"
#include "adaptlab/gradcheck.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/rational.hpp"
#include "adaptlab/rng.hpp"

using namespace adaptlab;

namespace {

// Value the fit oracle achieved for ReLU on [-3,3] at order (5,4) on its
// first run; frozen as a regression bound.
constexpr double kReluFitBaseline = 0.043089654950488762;

// Independent polynomial evaluation (no Horner) used as the test-side oracle.
double poly_naive(const std::vector<double>& coeff, double x, int first_power) {
    double s = 0.0;
    for (std::size_t i = 0; i < coeff.size(); ++i)
        s += coeff[i] * std::pow(x, static_cast<double>(first_power + i));
    return s;
}

RationalCoefficients random_coeffs(Rng& rng, int m = 5, int n = 4) {
    RationalCoefficients c;
    c.a.resize(m + 1);
    c.b.resize(n);
    for (auto& v : c.a) v = rng.normal();
    for (auto& v : c.b) v = rng.normal();
    return c;
}

std::vector<double> linspace(double lo, double hi, int count) {
    std::vector<double> g(count);
    for (int i = 0; i < count; ++i)
        g[i] = lo + (hi - lo) * i / (count - 1);
    return g;
}

}  // namespace

TEST_CASE("constant-one initialization evaluates to 1 everywhere") {
    auto c = init_constant(1.0);
    CHECK(c.param_count() == 10);
    for (double x : linspace(-5, 5, 101))
        CHECK(rational_value(x, c) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("identity coefficients reproduce x") {
    RationalCoefficients c;
    c.a = {0, 1, 0, 0, 0, 0};
    c.b = {0, 0, 0, 0};
    for (double x : {-2.0, 0.0, 3.0})
        CHECK(rational_value(x, c) == doctest::Approx(x).epsilon(1e-15));
}

TEST_CASE("constant-zero initialization evaluates to 0") {
    auto c = init_constant(0.0);
    for (double x : {-4.0, 0.5, 2.0}) CHECK(rational_value(x, c) == 0.0);
}

TEST_CASE("backward at the constant-one init") {
    auto c = init_constant(1.0);
    for (double x : {-3.0, 0.0, 1.7}) {
        auto g = rational_backward(x, c);
        CHECK(g.value == 1.0);
        CHECK(g.da[0] == 1.0);
        CHECK(g.dx == 0.0);
        for (double db : g.db) CHECK(db == 0.0);
    }
}

TEST_CASE("backward at the identity init and x=2") {
    RationalCoefficients c;
    c.a = {0, 1, 0, 0, 0, 0};
    c.b = {0, 0, 0, 0};
    auto g = rational_backward(2.0, c);
    CHECK(g.dx == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g.da[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("gradients match finite differences on 1000 draws") {
    Rng rng(271);
    const double eps = 1e-5;
    const double tol = 1e-4;
    int checked = 0, excluded = 0, failures = 0;
    while (checked + excluded < 1000) {
        auto c = random_coeffs(rng);
        const double x = (rng.uniform() * 6.0) - 3.0;
        // Exclude draws near a root of S: the |S| kink makes the finite
        // difference invalid there.
        const double s_lo = poly_naive(c.b, x - 1e-3, 1);
        const double s_mid = poly_naive(c.b, x, 1);
        const double s_hi = poly_naive(c.b, x + 1e-3, 1);
        if (s_lo * s_hi <= 0.0 || std::abs(s_mid) < 1e-6) {
            ++excluded;
            continue;
        }
        ++checked;
        auto analytic = rational_backward(x, c);
        auto rel = [](double a, double n) {
            return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
        };
        bool ok = true;

        const double fd_x =
            (rational_value(x + eps, c) - rational_value(x - eps, c)) /
            (2 * eps);
        ok = ok && rel(analytic.dx, fd_x) < tol;

        for (std::size_t j = 0; j < c.a.size(); ++j) {
            auto cp = c, cm = c;
            cp.a[j] += eps;
            cm.a[j] -= eps;
            const double fd =
                (rational_value(x, cp) - rational_value(x, cm)) / (2 * eps);
            ok = ok && rel(analytic.da[j], fd) < tol;
        }
        for (std::size_t k = 0; k < c.b.size(); ++k) {
            auto cp = c, cm = c;
            cp.b[k] += eps;
            cm.b[k] -= eps;
            const double fd =
                (rational_value(x, cp) - rational_value(x, cm)) / (2 * eps);
            ok = ok && rel(analytic.db[k], fd) < tol;
        }
        if (!ok) ++failures;
    }
    CHECK(failures == 0);
    CHECK(checked >= 900);
}

TEST_CASE("denominator keeps the function pole-free on a dense grid") {
    Rng rng(311);
    for (int draw = 0; draw < 100; ++draw) {
        auto c = random_coeffs(rng);
        for (double x : linspace(-100, 100, 4001)) {
            const double r = rational_value(x, c);
            CHECK(std::isfinite(r));
            // Reconstruct: R * (1 + |S|) must equal N, confirming the
            // implementation divides by the pole-free denominator.
            const double s = poly_naive(c.b, x, 1);
            const double n = poly_naive(c.a, x, 0);
            const double lhs = r * (1.0 + std::abs(s));
            CHECK(std::abs(lhs - n) <=
                  1e-6 * std::max({1.0, std::abs(n), std::abs(lhs)}));
        }
    }
}

TEST_CASE("tape op applies the rational elementwise with exact gradients") {
    Rng rng(331);
    int failures = 0;
    int checked = 0;
    for (int draw = 0; draw < 50; ++draw) {
        auto c = random_coeffs(rng);
        auto a = make_tensor({6}, c.a, true);
        auto b = make_tensor({4}, c.b, true);
        auto x = randn({5}, rng, 1.5, true);
        // Skip batches containing a point near a root of S.
        bool near_root = false;
        for (double xv : x->values) {
            const double lo = poly_naive(c.b, xv - 1e-3, 1);
            const double hi = poly_naive(c.b, xv + 1e-3, 1);
            if (lo * hi <= 0.0) near_root = true;
        }
        if (near_root) continue;
        ++checked;
        auto w = randn({5}, rng, 1.0, false);
        auto f = [&](Tape& t) {
            return sum_all(t, mul(t, rational_apply(t, x, a, b), w));
        };
        auto report = gradient_check(f, {x, a, b}, 1e-5, 1e-3);
        if (!report.pass) ++failures;
    }
    CHECK(failures == 0);
    CHECK(checked >= 25);
}

TEST_CASE("tape op rejects non-finite input naming the index") {
    Tape tape;
    auto c = init_constant(1.0);
    auto a = make_tensor({6}, c.a);
    auto b = make_tensor({4}, c.b);
    auto x = make_tensor({3}, {1.0, std::nan(""), 2.0});
    CHECK_THROWS_WITH_AS(rational_apply(tape, x, a, b),
                         doctest::Contains("index 1"), DomainError);
}

TEST_CASE("a gradient step at the loss minimum changes nothing") {
    auto c = init_constant(-2.0);
    auto a = make_tensor({6}, c.a, true);
    auto b = make_tensor({4}, c.b, true);
    auto x = make_tensor({3}, {-1.0, 0.0, 2.5});
    auto target = full({3}, -2.0);
    Tape tape;
    auto diff = sub(tape, rational_apply(tape, x, a, b), target);
    auto loss = sum_all(tape, mul(tape, diff, diff));
    CHECK(loss->values[0] == 0.0);
    tape.backward(loss);
    AdamOptimizer opt({a, b}, AdamConfig{});
    opt.step();
    CHECK(a->values == c.a);
    CHECK(b->values == c.b);
}

TEST_CASE("fit recovers exactly representable targets") {
    auto grid = linspace(-3, 3, 201);

    auto fit_const = fit_to_function([](double) { return 1.0; }, grid, 5, 4,
                                     FitOptions{});
    CHECK(fit_const.max_abs_error <= 1e-6);
    CHECK(fit_const.within_tolerance);
    for (double x : {-2.0, 0.0, 1.5})
        CHECK(rational_value(x, fit_const.coeffs) ==
              doctest::Approx(1.0).epsilon(1e-6));

    auto fit_id = fit_to_function([](double x) { return x; }, grid, 5, 4,
                                  FitOptions{});
    CHECK(fit_id.max_abs_error <= 1e-6);
    CHECK(fit_id.within_tolerance);
}

TEST_CASE("fit approximates ReLU within tolerance, pinned by the oracle") {
    auto grid = linspace(-3, 3, 201);
    auto fit = fit_to_function([](double x) { return x > 0 ? x : 0.0; }, grid, 5,
                               4, FitOptions{});
    CHECK(fit.max_abs_error <= 0.1);
    CHECK(fit.within_tolerance);
    CHECK(fit.max_abs_error <= kReluFitBaseline + 1e-9);
}

TEST_CASE("fit validates its grid") {
    CHECK_THROWS_AS(fit_to_function([](double x) { return x; },
                                    linspace(-3, 3, 20), 5, 4, FitOptions{}),
                    ConfigError);
    CHECK_THROWS_AS(fit_to_function([](double x) { return x; },
                                    linspace(-1, 1, 201), 5, 4, FitOptions{}),
                    ConfigError);
}
