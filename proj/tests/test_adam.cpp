#include <doctest.h>

#include <cmath>

#include "adaptlab/adam.hpp"

using namespace adaptlab;

TEST_CASE("zero gradient leaves parameters unchanged") {
    Tensor p;
    p.shape = {3};
    p.values = {1.0, -2.0, 0.5};
    AdamState st;
    AdamConfig cfg;
    std::vector<double> g(3, 0.0);
    for (int i = 0; i < 5; ++i) adam_step(p, g, st, cfg);
    CHECK(p.values == std::vector<double>{1.0, -2.0, 0.5});
    CHECK(st.step == 5);
}

TEST_CASE("first bias-corrected step moves by about lr") {
    Tensor p;
    p.shape = {1};
    p.values = {0.0};
    AdamState st;
    AdamConfig cfg;
    cfg.lr = 0.1;
    std::vector<double> g{1.0};
    adam_step(p, g, st, cfg);
    // m_hat = 1, v_hat = 1, update = lr / (1 + eps) -> just under 0.1.
    CHECK(p.values[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(st.step == 1);
}

TEST_CASE("identical parameters with identical gradients stay identical") {
    Tensor a, b;
    a.shape = b.shape = {2};
    a.values = b.values = {0.3, -0.7};
    AdamState sa, sb;
    AdamConfig cfg;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> g{std::sin(i * 0.1), std::cos(i * 0.2)};
        adam_step(a, g, sa, cfg);
        adam_step(b, g, sb, cfg);
    }
    CHECK(a.values == b.values);
}

TEST_CASE("gradient size mismatch is rejected") {
    Tensor p;
    p.shape = {2};
    p.values = {0.0, 0.0};
    AdamState st;
    AdamConfig cfg;
    std::vector<double> g{1.0};
    CHECK_THROWS_AS(adam_step(p, g, st, cfg), ConfigError);
}

TEST_CASE("optimizer steps all parameters from their own grads") {
    auto p1 = make_tensor({1}, {1.0}, true);
    auto p2 = make_tensor({1}, {1.0}, true);
    AdamOptimizer opt({p1, p2}, AdamConfig{});
    p1->grad[0] = 1.0;
    p2->grad[0] = -1.0;
    opt.step();
    CHECK(p1->values[0] < 1.0);
    CHECK(p2->values[0] > 1.0);
    opt.zero_grad();
    CHECK(p1->grad[0] == 0.0);
    CHECK(p2->grad[0] == 0.0);
}
