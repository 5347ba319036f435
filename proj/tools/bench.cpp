// Benchmark comparing the OpenMP kernels against their serial reference
// implementations: TPS application, displacement smoothing, and clamped
// nearest-neighbor geometry metrics.
#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "talo/deformation.hpp"
#include "talo/evaluation.hpp"

using talo::Vec3;

namespace {

std::vector<Vec3> random_points(size_t n, std::mt19937_64& rng, double extent) {
    std::vector<Vec3> out(n);
    std::uniform_real_distribution<double> u(-extent, extent);
    for (auto& p : out) p = Vec3(u(rng), u(rng), u(rng));
    return out;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

void report(const char* name, double serial_s, double parallel_s) {
    std::printf("%-24s serial %9.4f ms   parallel %9.4f ms   speedup %5.2fx\n", name,
                serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s);
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled; parallel kernels run serially\n");
#endif
    std::mt19937_64 rng(7);

    {
        const auto sources = random_points(500, rng, 50.0);
        auto targets = sources;
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (auto& t : targets) t += Vec3(u(rng), u(rng), u(rng));
        const talo::TpsModel model = talo::tps_fit(sources, targets, 1e-2);
        const auto queries = random_points(200000, rng, 50.0);

        std::vector<Vec3> out_serial, out_parallel;
        const double ts = time_best_of(3, [&] { out_serial = talo::reference::tps_apply(model, queries); });
        const double tp = time_best_of(3, [&] { out_parallel = talo::tps_apply(model, queries); });
        report("tps_apply (200k pts)", ts, tp);
    }

    {
        const auto points = random_points(3000, rng, 50.0);
        auto canonical = points;
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (auto& c : canonical) c += Vec3(u(rng), u(rng), u(rng));
        talo::SmoothingParams params;

        std::vector<Vec3> out_serial, out_parallel;
        const double ts = time_best_of(3, [&] {
            out_serial = talo::reference::smooth_displacements(points, canonical, params);
        });
        const double tp = time_best_of(3, [&] {
            out_parallel = talo::smooth_displacements(points, canonical, params);
        });
        report("smoothing (3k pts)", ts, tp);
    }

    {
        const auto pred = random_points(20000, rng, 50.0);
        const auto gt = random_points(20000, rng, 50.0);

        talo::GeometryMetrics m_serial, m_parallel;
        const double ts =
            time_best_of(1, [&] { m_serial = talo::reference::geometry_metrics(pred, gt); });
        const double tp = time_best_of(3, [&] { m_parallel = talo::geometry_metrics(pred, gt); });
        report("chamfer (20k x 20k)", ts, tp);
        std::printf("%-24s serial chamfer %.12f   parallel chamfer %.12f\n", "",
                    m_serial.chamfer, m_parallel.chamfer);
    }
    return 0;
}
