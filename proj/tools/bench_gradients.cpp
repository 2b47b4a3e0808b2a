// Timing comparison of the serial and OpenMP batch-gradient paths. The two
// must agree bit-for-bit; this just measures throughput.

#include <chrono>
#include <cmath>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "otdrnet/dataset.hpp"
#include "otdrnet/gru_ae.hpp"
#include "otdrnet/sim.hpp"

using namespace otdrnet;

int main(int argc, char** argv) {
    int batch = argc > 1 ? std::atoi(argv[1]) : 128;
    int reps = argc > 2 ? std::atoi(argv[2]) : 5;

    SimConfig sim;
    Dataset ds = build_dataset(std::max(1, batch / kNumClasses + 1), sim, 42);

    std::vector<ModelInput> inputs;
    std::vector<EventLabel> labels;
    for (const auto& r : ds.rows) {
        inputs.push_back(row_input(r));
        labels.push_back(row_label(r));
    }
    std::vector<int> idx;
    for (int i = 0; i < batch; ++i) idx.push_back(i % static_cast<int>(inputs.size()));

    GruAeParams params = init_gru_ae(7);
    TaskWeights w;

    auto time_it = [&](auto&& fn, const char* name) {
        GruAeParams grads;
        double best = 1e300, loss = 0.0;
        for (int r = 0; r < reps; ++r) {
            grads.zero();
            auto t0 = std::chrono::steady_clock::now();
            loss = fn(inputs, labels, idx, params, w, grads);
            auto t1 = std::chrono::steady_clock::now();
            best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
        }
        std::printf("%-10s %8.1f samples/s  (best of %d, loss %.6f)\n", name,
                    batch / best, reps, loss);
        return grads;
    };

    std::printf("batch %d,", batch);
#ifdef _OPENMP
    std::printf(" %d threads\n", omp_get_max_threads());
#else
    std::printf(" OpenMP disabled\n");
#endif

    GruAeParams gs = time_it(batch_gradient_serial, "serial");
    GruAeParams gp = time_it(batch_gradient_parallel, "parallel");

    auto bs = gs.blocks();
    auto bp = gp.blocks();
    double max_diff = 0.0;
    for (size_t b = 0; b < bs.size(); ++b)
        for (size_t i = 0; i < bs[b]->v.size(); ++i)
            max_diff = std::max(max_diff, std::abs(bs[b]->v[i] - bp[b]->v[i]));
    std::printf("max |serial - parallel| gradient difference: %g %s\n", max_diff,
                max_diff == 0.0 ? "(bit-identical)" : "(MISMATCH)");
    return max_diff == 0.0 ? 0 : 1;
}
