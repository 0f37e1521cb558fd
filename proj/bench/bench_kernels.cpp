#include <random>

#include <benchmark/benchmark.h>

#include "cgmatch/kernels.hpp"

using namespace cgmatch;
using kernels::Backend;

namespace {

struct Fixture {
    kernels::DenseShape s;
    std::vector<double> x, w, b, y, dy, dx, dw, db;

    explicit Fixture(std::size_t rows, std::size_t in = 64, std::size_t out = 64)
        : s{rows, in, out}, x(rows * in), w(in * out), b(out), y(rows * out), dy(rows * out),
          dx(rows * in), dw(in * out), db(out) {
        std::mt19937_64 rng(7);
        std::normal_distribution<double> n;
        for (auto* v : {&x, &w, &b, &dy})
            for (auto& e : *v) e = n(rng);
    }
};

void BM_Forward(benchmark::State& st, Backend backend) {
    Fixture f(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) {
        kernels::dense_forward(backend, f.s, f.x, f.w, f.b, f.y);
        benchmark::DoNotOptimize(f.y.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_Backward(benchmark::State& st, Backend backend) {
    Fixture f(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) {
        kernels::dense_backward_input(backend, f.s, f.dy, f.w, f.dx);
        kernels::dense_backward_params(backend, f.s, f.x, f.dy, f.dw, f.db);
        benchmark::DoNotOptimize(f.dw.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Forward, serial, Backend::Serial)->Arg(64)->Arg(512)->Arg(2000);
BENCHMARK_CAPTURE(BM_Forward, openmp, Backend::OpenMP)->Arg(64)->Arg(512)->Arg(2000);
BENCHMARK_CAPTURE(BM_Backward, serial, Backend::Serial)->Arg(64)->Arg(512)->Arg(2000);
BENCHMARK_CAPTURE(BM_Backward, openmp, Backend::OpenMP)->Arg(64)->Arg(512)->Arg(2000);

BENCHMARK_MAIN();
