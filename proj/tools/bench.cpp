// Compares the serial reference kernels against the OpenMP code paths.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "layersim/mesh.hpp"
#include "layersim/cloth.hpp"
#include "layersim/parallel.hpp"
#include "layersim/rng.hpp"
#include "layersim/spatial_hash.hpp"
#include "layersim/tensor.hpp"

using namespace layersim;

namespace {

template <typename F>
double time_ms(F&& fn, int reps = 3) {
    double best = 1e300;
    for (int r = 0; r < reps; r++) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-22s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx\n", name, serial_ms, parallel_ms,
                parallel_ms > 0.0 ? serial_ms / parallel_ms : 0.0);
}

}  // namespace

int main(int argc, char** argv) {
    bool full = argc > 1 && std::strcmp(argv[1], "--full") == 0;
    std::printf("threads: %d\n", max_threads());
    Rng rng(42);

    {
        int n = full ? 384 : 192;
        std::vector<double> a(size_t(n) * n), b(size_t(n) * n), out(size_t(n) * n);
        for (double& x : a) x = rng.normal();
        for (double& x : b) x = rng.normal();
        double s = time_ms([&] { ref::matmul_serial(a.data(), b.data(), out.data(), n, n, n); });
        double p = time_ms([&] { matmul_kernel(a.data(), b.data(), out.data(), n, n, n); });
        report("matmul", s, p);
    }
    {
        int n = full ? 20000 : 6000;
        double radius = 0.05;
        std::vector<Vec3> pts(n);
        for (auto& v : pts) v = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
        EdgeKeySet none{EdgeSet{}};
        double s = time_ms([&] { ref::world_edges_self_bruteforce(pts, radius, none); });
        double p = time_ms([&] { world_edges_self(pts, radius, none); });
        report("world_edges", s, p);
    }
    {
        int nq = full ? 50000 : 10000, na = full ? 2000 : 800;
        std::vector<Vec3> q(nq), a(na);
        for (auto& v : q) v = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
        for (auto& v : a) v = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
        double s = time_ms([&] { ref::nearest_anchors_serial(q, a); });
        double p = time_ms([&] { nearest_anchors(q, a); });
        report("nearest_anchors", s, p);
    }
    {
        int n = full ? 400 : 200;
        ClothLayer layer = build_cloth_grid(n, n, 0.01, GarmentAttributes{});
        std::vector<Vec3> pos = layer.rest_positions;
        for (auto& v : pos) v.z = 0.01 * rng.normal();
        double s = time_ms([&] { ref::vertex_normals_serial(layer.topology, pos); });
        double p = time_ms([&] { vertex_normals(layer.topology, pos); });
        report("vertex_normals", s, p);
    }
    return 0;
}
