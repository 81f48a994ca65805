#include <doctest.h>

#include <cmath>
#include <set>

#include "adaptlab/rng.hpp"

using namespace adaptlab;

TEST_CASE("same seed reproduces the same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds and streams differ") {
    Rng a(42), b(43), c(42, 1);
    CHECK(a.next_u64() != b.next_u64());
    Rng a2(42);
    CHECK(a2.next_u64() != c.next_u64());
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
    Rng rng(7);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("normal draws have roughly standard moments") {
    Rng rng(11);
    const int n = 50000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("split streams are independent of parent position") {
    Rng parent(99);
    Rng child_before = parent.split(5);
    parent.next_u64();
    parent.next_u64();
    Rng child_after = parent.split(5);
    // Splitting is keyed, not positional: same tag, same stream.
    for (int i = 0; i < 10; ++i)
        CHECK(child_before.next_u64() == child_after.next_u64());

    Rng other = parent.split(6);
    Rng five = parent.split(5);
    CHECK(other.next_u64() != five.next_u64());
}

TEST_CASE("string splits hash distinct tags to distinct streams") {
    Rng parent(3);
    std::set<std::uint64_t> firsts;
    for (const char* tag : {"init", "gumbel", "shuffle", "data", "head"})
        firsts.insert(parent.split(tag).next_u64());
    CHECK(firsts.size() == 5);
}

TEST_CASE("uniform_int respects its bound") {
    Rng rng(13);
    for (int i = 0; i < 1000; ++i) CHECK(rng.uniform_int(7) < 7);
}
