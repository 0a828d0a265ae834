#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "layersim/cloth.hpp"
#include "layersim/patch.hpp"
#include "layersim/rng.hpp"

using namespace layersim;

TEST_CASE("4x4 grid with patch size 2 gives four 4-vertex patches in a ring") {
    ClothLayer layer = build_cloth_grid(4, 4, 1.0, GarmentAttributes{});
    PatchGraph pg = patchify(layer.topology, 2);
    REQUIRE(pg.patch_count() == 4);
    std::set<int> seen;
    for (int p = 0; p < 4; p++) {
        CHECK(pg.patch_vertices[p].size() == 4);
        for (int v : pg.patch_vertices[p]) seen.insert(v);
    }
    CHECK(seen.size() == 16);  // disjoint cover

    // 2x2 patch grid: every patch touches exactly two 4-neighbors
    std::vector<int> degree(4, 0);
    for (size_t e = 0; e < pg.mesh_edges.size(); e++) degree[pg.mesh_edges.receivers[e]]++;
    for (int p = 0; p < 4; p++) CHECK(degree[p] == 2);
}

TEST_CASE("8x8 grid with patch size 4 gives four patches") {
    ClothLayer layer = build_cloth_grid(8, 8, 0.2, GarmentAttributes{});
    PatchGraph pg = patchify(layer.topology, 4);
    CHECK(pg.patch_count() == 4);
    for (int p = 0; p < 4; p++) CHECK(pg.patch_vertices[p].size() == 16);
}

TEST_CASE("patch size 1 reproduces the vertex grid") {
    int nx = 5, ny = 4;
    ClothLayer layer = build_cloth_grid(nx, ny, 1.0, GarmentAttributes{});
    PatchGraph pg = patchify(layer.topology, 1);
    REQUIRE(pg.patch_count() == nx * ny);
    for (int p = 0; p < pg.patch_count(); p++) CHECK(pg.patch_vertices[p].size() == 1);

    // adjacency is the 4-neighborhood of the vertex grid
    size_t expected_directed = size_t(2 * ((nx - 1) * ny + nx * (ny - 1)));
    CHECK(pg.mesh_edges.size() == expected_directed);
}

TEST_CASE("patchify requires UVs and a positive patch size") {
    MeshTopology bare;
    bare.vertex_count = 4;
    bare.faces = {{0, 1, 2}, {0, 2, 3}};
    bare.finalize();
    CHECK_THROWS_AS(patchify(bare, 2), std::invalid_argument);

    ClothLayer layer = build_cloth_grid(4, 4, 1.0, GarmentAttributes{});
    CHECK_THROWS_AS(patchify(layer.topology, 0), std::invalid_argument);
}

TEST_CASE("patch states are member means") {
    ClothLayer layer = build_cloth_grid(4, 4, 1.0, GarmentAttributes{});
    PatchGraph pg = patchify(layer.topology, 2);

    MeshState state;
    state.positions = layer.rest_positions;
    state.velocities.assign(16, Vec3(1, 2, 3));
    state.accelerations.assign(16, Vec3());
    PatchStates ps = patch_states(state, pg);

    // patch holding vertices (0,0),(1,0),(0,1),(1,1) has center (0.5,0.5,0)
    int p00 = pg.vertex_patch[0];
    CHECK(ps.positions[p00].x == doctest::Approx(0.5));
    CHECK(ps.positions[p00].y == doctest::Approx(0.5));
    CHECK(ps.velocities[p00].y == doctest::Approx(2.0));

    // two-point mean sanity
    std::vector<Vec3> two = {Vec3(0, 0, 0), Vec3(2, 0, 0)};
    PatchGraph tiny;
    tiny.patch_vertices = {{0, 1}};
    tiny.vertex_patch = {0, 0};
    tiny.cell_u = {0};
    tiny.cell_v = {0};
    CHECK(patch_centers(two, tiny)[0].x == doctest::Approx(1.0));
}

TEST_CASE("rigid transforms commute with patch averaging") {
    Rng rng(21);
    ClothLayer layer = build_cloth_grid(6, 6, 0.3, GarmentAttributes{});
    PatchGraph pg = patchify(layer.topology, 3);
    std::vector<Vec3> pos = layer.rest_positions;
    for (auto& p : pos) p.z += 0.1 * rng.normal();

    Quat q{0.9, 0.1, 0.2, 0.4};
    double n = q.norm();
    q = {q.w / n, q.x / n, q.y / n, q.z / n};
    Mat3 rot = quat_to_matrix(q);
    Vec3 shift(0.3, -0.2, 1.0);

    std::vector<Vec3> moved(pos.size());
    for (size_t i = 0; i < pos.size(); i++) moved[i] = rot * pos[i] + shift;

    std::vector<Vec3> centers = patch_centers(pos, pg);
    std::vector<Vec3> moved_centers = patch_centers(moved, pg);
    for (int p = 0; p < pg.patch_count(); p++) {
        Vec3 expect = rot * centers[p] + shift;
        CHECK((moved_centers[p] - expect).norm() < 1e-9);
    }
}

TEST_CASE("patch means match an independent per-coordinate summation") {
    Rng rng(22);
    ClothLayer layer = build_cloth_grid(7, 5, 0.2, GarmentAttributes{});
    PatchGraph pg = patchify(layer.topology, 3);
    std::vector<Vec3> pos(layer.topology.vertex_count);
    for (auto& p : pos) p = Vec3(rng.normal(), rng.normal(), rng.normal());

    std::vector<Vec3> centers = patch_centers(pos, pg);
    for (int p = 0; p < pg.patch_count(); p++) {
        double sx = 0, sy = 0, sz = 0;
        for (int v : pg.patch_vertices[p]) {
            sx += pos[v].x;
            sy += pos[v].y;
            sz += pos[v].z;
        }
        double inv = 1.0 / double(pg.patch_vertices[p].size());
        CHECK(centers[p].x == doctest::Approx(sx * inv).epsilon(1e-12));
        CHECK(centers[p].y == doctest::Approx(sy * inv).epsilon(1e-12));
        CHECK(centers[p].z == doctest::Approx(sz * inv).epsilon(1e-12));
    }
}

TEST_CASE("empty patch lists are rejected") {
    MeshState state;
    state.positions = {Vec3(0, 0, 0)};
    state.velocities = {Vec3()};
    state.accelerations = {Vec3()};
    PatchGraph broken;
    broken.patch_vertices = {{}};
    broken.vertex_patch = {0};
    broken.cell_u = {0};
    broken.cell_v = {0};
    CHECK_THROWS_AS(patch_states(state, broken), std::invalid_argument);
}
