// Parallel kernels against the serial reference on the desk geometry.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <cmath>

#include "bst/recon.hpp"

using namespace bst;

namespace {

struct Desk {
    ReconGeometryConfig cfg = ReconGeometryConfig::desk();
    ScanGeometry g = recon_geometry(cfg);
    PhantomImage f;
    Desk() {
        auto lib = MaterialLibrary::load_default();
        f = build_phantom(PhantomKind::two_sphere, cfg.scan_line_mm, recon_q_axis(cfg), recon_x1_axis(cfg), lib);
    }
};

const Desk& desk() {
    static Desk d;
    return d;
}

double q1_of(double t) { return t / std::sqrt(1 + t * t) / std::sqrt(2.0); }

void BM_forward_full_reference(benchmark::State& st) {
    const auto& d = desk();
    for (auto _ : st) benchmark::DoNotOptimize(reference::forward_full(d.f, d.g));
}

void BM_forward_full_parallel(benchmark::State& st) {
    const auto& d = desk();
    omp_set_num_threads(int(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(forward_full(d.f, d.g));
}

void BM_forward_curve_reference(benchmark::State& st) {
    const auto& d = desk();
    auto W = unit_weighting();
    for (auto _ : st)
        benchmark::DoNotOptimize(reference::forward_curve(d.f, d.g.energies, d.g.detectors_d1, q1_of, 1.0, W));
}

void BM_forward_curve_parallel(benchmark::State& st) {
    const auto& d = desk();
    auto W = unit_weighting();
    omp_set_num_threads(int(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(forward_curve(d.f, d.g.energies, d.g.detectors_d1, q1_of, 1.0, W));
}

void BM_matrix_apply(benchmark::State& st) {
    const auto& d = desk();
    static SystemMatrix A = assemble_matrix(d.g, d.f.q_axis, d.f.x1_axis, d.f.x2);
    omp_set_num_threads(int(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(A.apply(d.f.values));
}

void threads(benchmark::internal::Benchmark* b) {
    b->Arg(1);
    if (omp_get_max_threads() > 1) b->Arg(omp_get_max_threads());
}

}  // namespace

BENCHMARK(BM_forward_full_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forward_full_parallel)->Apply(threads)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forward_curve_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forward_curve_parallel)->Apply(threads)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_matrix_apply)->Apply(threads)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
