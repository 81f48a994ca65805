// Serial-vs-OpenMP kernel comparison. Prints one table row per kernel and
// size with both timings, the speedup, and a bit-identity check of the
// parallel output against the serial reference.

#include <omp.h>

#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "adaptlab/kernels.hpp"
#include "adaptlab/rng.hpp"

using namespace adaptlab;
namespace sk = adaptlab::kernels::serial;
namespace pk = adaptlab::kernels::par;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = omp_get_wtime();
        fn();
        best = std::min(best, omp_get_wtime() - t0);
    }
    return best;
}

void report(const std::string& name, double serial_s, double par_s,
            bool identical) {
    std::printf("%-28s %10.3f ms %10.3f ms %7.2fx   %s\n", name.c_str(),
                serial_s * 1e3, par_s * 1e3, serial_s / par_s,
                identical ? "identical" : "MISMATCH");
}

bool bytes_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void bench_matmul(kernels::i64 m, kernels::i64 k, kernels::i64 n, int reps,
                  Rng& rng) {
    auto a = random_vec(static_cast<std::size_t>(m * k), rng);
    auto b = random_vec(static_cast<std::size_t>(k * n), rng);
    std::vector<double> cs(static_cast<std::size_t>(m * n)),
        cp(static_cast<std::size_t>(m * n));
    const double ts = time_best_of(
        reps, [&] { sk::matmul_nn(a.data(), b.data(), cs.data(), m, k, n); });
    const double tp = time_best_of(
        reps, [&] { pk::matmul_nn(a.data(), b.data(), cp.data(), m, k, n); });
    char name[64];
    std::snprintf(name, sizeof name, "matmul_nn %lldx%lldx%lld",
                  static_cast<long long>(m), static_cast<long long>(k),
                  static_cast<long long>(n));
    report(name, ts, tp, bytes_equal(cs, cp));
}

void bench_softmax(kernels::i64 rows, kernels::i64 cols, int reps, Rng& rng) {
    auto x = random_vec(static_cast<std::size_t>(rows * cols), rng);
    std::vector<double> ys(x.size()), yp(x.size());
    const double ts = time_best_of(
        reps, [&] { sk::softmax_rows(x.data(), ys.data(), rows, cols); });
    const double tp = time_best_of(
        reps, [&] { pk::softmax_rows(x.data(), yp.data(), rows, cols); });
    char name[64];
    std::snprintf(name, sizeof name, "softmax_rows %lldx%lld",
                  static_cast<long long>(rows), static_cast<long long>(cols));
    report(name, ts, tp, bytes_equal(ys, yp));
}

void bench_layernorm(kernels::i64 rows, kernels::i64 cols, int reps,
                     Rng& rng) {
    auto x = random_vec(static_cast<std::size_t>(rows * cols), rng);
    auto g = random_vec(static_cast<std::size_t>(cols), rng);
    auto b = random_vec(static_cast<std::size_t>(cols), rng);
    std::vector<double> ys(x.size()), yp(x.size());
    std::vector<double> ms(rows), is(rows), mp(rows), ip(rows);
    const double ts = time_best_of(reps, [&] {
        sk::layernorm_rows(x.data(), g.data(), b.data(), ys.data(), ms.data(),
                           is.data(), rows, cols, 1e-5);
    });
    const double tp = time_best_of(reps, [&] {
        pk::layernorm_rows(x.data(), g.data(), b.data(), yp.data(), mp.data(),
                           ip.data(), rows, cols, 1e-5);
    });
    char name[64];
    std::snprintf(name, sizeof name, "layernorm_rows %lldx%lld",
                  static_cast<long long>(rows), static_cast<long long>(cols));
    report(name, ts, tp, bytes_equal(ys, yp) && bytes_equal(ms, mp) &&
                             bytes_equal(is, ip));
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 5;
    if (argc > 1) reps = std::max(1, std::atoi(argv[1]));
    Rng rng(12);
    std::printf("threads: %d, best of %d reps\n\n", omp_get_max_threads(),
                reps);
    std::printf("%-28s %13s %13s %8s   %s\n", "kernel", "serial", "openmp",
                "speedup", "outputs");

    bench_matmul(64, 64, 64, reps, rng);
    bench_matmul(256, 256, 256, reps, rng);
    bench_matmul(512, 512, 512, reps, rng);
    bench_matmul(160, 64, 128, reps, rng);  // the training-step hot shape
    bench_softmax(4096, 64, reps, rng);
    bench_softmax(512, 512, reps, rng);
    bench_layernorm(4096, 64, reps, rng);
    bench_layernorm(512, 1024, reps, rng);
    return 0;
}
