// Compares three ways of driving the broadcast kernels: the serial
// virtual_index reference, the strided production loop pinned to one thread,
// and the strided loop under OpenMP. All three produce bit-identical tensors
// (the test suite asserts that); this tool reports what each costs.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <span>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bcad/arity_workload.hpp"
#include "bcad/broadcast.hpp"
#include "bcad/forward.hpp"
#include "bcad/hmlstm.hpp"
#include "bcad/parallel.hpp"
#include "bcad/rng.hpp"

namespace {

using bcad::Tensor;

double time_best_of(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

void report(const char* task, double reference_s, double serial_s, double parallel_s) {
    std::printf("%-26s reference %9.3f ms  strided(1t) %9.3f ms  strided(omp) %9.3f ms  speedup %.2fx\n",
                task, reference_s * 1e3, serial_s * 1e3, parallel_s * 1e3,
                serial_s / parallel_s);
}

} // namespace

int main(int argc, char** argv) {
    std::int64_t n = 1024;
    int reps = 5;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--n" && i + 1 < argc) n = std::atoll(argv[++i]);
        else if (arg == "--reps" && i + 1 < argc) reps = std::atoi(argv[++i]);
        else if (arg == "--quick") { n = 64; reps = 2; }
        else {
            std::fprintf(stderr, "usage: parallel_compare [--n SIDE] [--reps R] [--quick]\n");
            return 1;
        }
    }

#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d, n=%lld\n", omp_get_max_threads(),
                static_cast<long long>(n));
#else
    std::printf("built without OpenMP; all paths run serially, n=%lld\n",
                static_cast<long long>(n));
#endif

    bcad::Rng rng(7);
    const bcad::CellInputs<double> cell = bcad::random_cell_inputs<double>(n, rng);
    const bcad::BroadcastKernel<double> update = bcad::cell_update_kernel<double>();
    const std::array<const Tensor<double>*, 6> args{&cell.c_prev, &cell.f, &cell.i,
                                                    &cell.g,      &cell.z1, &cell.z2};
    const std::span<const Tensor<double>* const> span_args(args);

    const bcad::BroadcastKernel<double> product = bcad::tanh_product_kernel<double>(8);
    std::vector<Tensor<double>> xs;
    for (int j = 0; j < 8; ++j) xs.push_back(bcad::random_pm1<double>(bcad::Shape{n, n}, rng));
    std::vector<const Tensor<double>*> xptrs;
    for (const Tensor<double>& t : xs) xptrs.push_back(&t);
    const std::span<const Tensor<double>* const> span_xs(xptrs);

    struct Task {
        const char* name;
        std::function<void()> reference;
        std::function<void()> strided;
    };
    const Task tasks[] = {
        {"cell update primal",
         [&] { (void)bcad::broadcast_apply_reference(update, span_args); },
         [&] { (void)bcad::broadcast_apply(update, span_args); }},
        {"cell update forward diff",
         [&] { (void)bcad::broadcast_diag_jacobian_reference(update, span_args, true); },
         [&] { (void)bcad::broadcast_diag_jacobian(update, span_args, true); }},
        {"arity-8 forward diff",
         [&] { (void)bcad::broadcast_diag_jacobian_reference(product, span_xs, true); },
         [&] { (void)bcad::broadcast_diag_jacobian(product, span_xs, true); }},
    };

    for (const Task& task : tasks) {
        bcad::set_broadcast_threads(1);
        const double reference_s = time_best_of(reps, task.reference);
        const double serial_s = time_best_of(reps, task.strided);
        bcad::set_broadcast_threads(0);
        const double parallel_s = time_best_of(reps, task.strided);
        report(task.name, reference_s, serial_s, parallel_s);
    }
    return 0;
}
