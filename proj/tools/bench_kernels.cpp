// Times the OpenMP forward/backward kernels against the serial reference.
#include "condlab/datasets.hpp"
#include "condlab/model.hpp"
#include "condlab/training.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>

using namespace condlab;

namespace {

template <class F>
double seconds_per_call(F&& f, int reps) {
    f(); // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

} // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 1;
    struct Case {
        const char* name;
        std::size_t n, w, m;
        std::vector<std::size_t> channels;
    };
    const Case cases[] = {
        {"L1 M=64 28x28 n=200", 200, 28, 5, {1, 64}},
        {"L2 M=32 16x16 n=200", 200, 16, 3, {1, 32, 32}},
        {"L3 M=16 16x16 n=100", 100, 16, 3, {3, 16, 16, 16}},
    };
    std::printf("threads %d\n", omp_get_max_threads());
    std::printf("%-24s %14s %14s %14s %14s\n", "case", "fwd serial", "fwd omp", "grad serial", "grad omp");
    for (const Case& c : cases) {
        CnnConfig cfg;
        cfg.input_w = cfg.input_h = c.w;
        cfg.m = c.m;
        cfg.channels = c.channels;
        const ImageBatch batch = synthesize(c.n, c.w, c.w, c.channels[0], 2.0, 1);
        const CnnParams p = init_params(cfg, 2);
        const double fs = seconds_per_call([&] { forward_serial(p, batch.images); }, reps);
        const double fo = seconds_per_call([&] { forward(p, batch.images); }, reps);
        const double gs = seconds_per_call([&] { grad_serial(p, batch, LossKind::Mse); }, reps);
        const double go = seconds_per_call([&] { grad(p, batch, LossKind::Mse); }, reps);
        std::printf("%-24s %13.6fs %13.6fs %13.6fs %13.6fs\n", c.name, fs, fo, gs, go);
    }
}
