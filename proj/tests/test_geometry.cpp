#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "layersim/cloth.hpp"
#include "layersim/mesh.hpp"
#include "layersim/rng.hpp"

using namespace layersim;

namespace {

// independent rotation construction from axis-angle (Rodrigues form)
Mat3 rodrigues(const Vec3& axis, double angle) {
    Vec3 u = axis.normalized();
    double c = std::cos(angle), s = std::sin(angle);
    Mat3 r;
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) {
            double uu = u[i] * u[j];
            r.m[i][j] = c * (i == j ? 1.0 : 0.0) + (1.0 - c) * uu;
        }
    r.m[0][1] -= s * u.z;
    r.m[0][2] += s * u.y;
    r.m[1][0] += s * u.z;
    r.m[1][2] -= s * u.x;
    r.m[2][0] -= s * u.y;
    r.m[2][1] += s * u.x;
    return r;
}

Quat quat_from_axis_angle(const Vec3& axis, double angle) {
    Vec3 u = axis.normalized();
    double s = std::sin(angle / 2);
    return Quat{std::cos(angle / 2), u.x * s, u.y * s, u.z * s};
}

}  // namespace

TEST_CASE("quaternion to matrix basics") {
    Mat3 id = quat_to_matrix(Quat{1, 0, 0, 0});
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) CHECK(id.m[i][j] == doctest::Approx(i == j ? 1.0 : 0.0));

    // quarter turn about z maps x to y
    double h = std::sqrt(0.5);
    Mat3 r = quat_to_matrix(Quat{h, 0, 0, h});
    Vec3 y = r * Vec3(1, 0, 0);
    CHECK(y.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y.y == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y.z == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(quat_to_matrix(Quat{2, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("quaternion matrices match the axis-angle construction") {
    Rng rng(3);
    for (int t = 0; t < 200; t++) {
        Vec3 axis(rng.normal(), rng.normal(), rng.normal());
        if (axis.norm() < 1e-6) continue;
        double angle = rng.uniform(-M_PI, M_PI);
        Mat3 a = quat_to_matrix(quat_from_axis_angle(axis, angle));
        Mat3 b = rodrigues(axis, angle);
        for (int i = 0; i < 3; i++)
            for (int j = 0; j < 3; j++) CHECK(a.m[i][j] == doctest::Approx(b.m[i][j]).epsilon(1e-12));
        CHECK(a.is_rotation(1e-12));
    }
}

TEST_CASE("q and -q give bit-identical matrices") {
    Rng rng(4);
    for (int t = 0; t < 100; t++) {
        Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        double n = q.norm();
        q = {q.w / n, q.x / n, q.y / n, q.z / n};
        Mat3 a = quat_to_matrix(q);
        Mat3 b = quat_to_matrix(Quat{-q.w, -q.x, -q.y, -q.z});
        for (int i = 0; i < 3; i++)
            for (int j = 0; j < 3; j++) CHECK(a.m[i][j] == b.m[i][j]);
    }
}

TEST_CASE("canonical frame carries the normal to +z") {
    Rng rng(5);
    Mat3 f = canonical_frame(Vec3(0, 0, 1), rng);
    CHECK(f.m[2][0] == doctest::Approx(0.0));
    CHECK(f.m[2][1] == doctest::Approx(0.0));
    CHECK(f.m[2][2] == doctest::Approx(1.0));
    CHECK(std::abs(f.row(0).dot(Vec3(0, 0, 1))) < 1e-12);

    for (int t = 0; t < 200; t++) {
        Vec3 n(rng.normal(), rng.normal(), rng.normal());
        if (n.norm() < 1e-6) continue;
        n = n.normalized();
        Mat3 fr = canonical_frame(n, rng);
        Vec3 local = fr * n;
        CHECK(local.x == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(local.y == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(local.z == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(fr.orthogonality_error() < 1e-9);
        CHECK(fr.det() == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(canonical_frame(Vec3(0, 0, 0), rng), std::invalid_argument);
}

TEST_CASE("two frames over one normal differ by a rotation about z") {
    Rng rng(6);
    for (int t = 0; t < 100; t++) {
        Vec3 n = Vec3(rng.normal(), rng.normal(), rng.normal());
        if (n.norm() < 1e-6) continue;
        n = n.normalized();
        Mat3 f1 = canonical_frame(n, rng);
        Mat3 f2 = canonical_frame(n, rng);
        Mat3 rel = f2 * f1.transposed();
        Vec3 z = rel * Vec3(0, 0, 1);
        CHECK(z.x == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(z.y == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(z.z == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("vertex normals on a flat grid point up") {
    ClothLayer layer = build_cloth_grid(6, 5, 0.1, GarmentAttributes{});
    VertexNormals vn = vertex_normals(layer.topology, layer.rest_positions);
    for (int v = 0; v < layer.topology.vertex_count; v++) {
        CHECK(vn.normals[v].z == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(vn.degenerate[v] == 0);
    }
}

TEST_CASE("vertex normals on a sphere discretization track the analytic direction") {
    // 20x20 latitude/longitude patch of the unit sphere (poles excluded)
    int n_theta = 20, n_phi = 20;
    MeshTopology topo;
    std::vector<Vec3> pos;
    topo.vertex_count = n_theta * n_phi;
    auto vid = [&](int i, int j) { return i * n_phi + j; };
    for (int i = 0; i < n_theta; i++)
        for (int j = 0; j < n_phi; j++) {
            double theta = M_PI * (0.15 + 0.7 * i / double(n_theta - 1));
            double phi = 2.0 * M_PI * j / double(n_phi);
            pos.push_back(Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)));
        }
    for (int i = 0; i + 1 < n_theta; i++)
        for (int j = 0; j < n_phi; j++) {
            int jn = (j + 1) % n_phi;
            topo.faces.push_back({vid(i, j), vid(i, jn), vid(i + 1, jn)});
            topo.faces.push_back({vid(i, j), vid(i + 1, jn), vid(i + 1, j)});
        }
    topo.finalize();

    VertexNormals vn = vertex_normals(topo, pos);
    double worst = 0.0;
    for (int i = 1; i + 1 < n_theta; i++)  // interior vertices have a full star
        for (int j = 0; j < n_phi; j++) {
            int v = vid(i, j);
            double cosang = std::clamp(vn.normals[v].dot(pos[v].normalized()), -1.0, 1.0);
            worst = std::max(worst, std::acos(cosang) * 180.0 / M_PI);
        }
    CHECK(worst < 5.0);
}

TEST_CASE("single triangle copies the face normal to all corners") {
    MeshTopology topo;
    topo.vertex_count = 3;
    topo.faces = {{0, 1, 2}};
    topo.finalize();
    std::vector<Vec3> pos = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    VertexNormals vn = vertex_normals(topo, pos);
    for (int v = 0; v < 3; v++) {
        CHECK(vn.normals[v].x == doctest::Approx(0.0));
        CHECK(vn.normals[v].y == doctest::Approx(0.0));
        CHECK(vn.normals[v].z == doctest::Approx(1.0));
    }
}

TEST_CASE("zero-area star flags degenerate and returns +z") {
    MeshTopology topo;
    topo.vertex_count = 3;
    topo.faces = {{0, 1, 2}};
    topo.finalize();
    std::vector<Vec3> pos = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};  // collinear
    VertexNormals vn = vertex_normals(topo, pos);
    for (int v = 0; v < 3; v++) {
        CHECK(vn.degenerate[v] == 1);
        CHECK(vn.normals[v].z == 1.0);
    }
}

TEST_CASE("gather and scatter normal paths agree") {
    Rng rng(7);
    ClothLayer layer = build_cloth_grid(9, 7, 0.13, GarmentAttributes{});
    std::vector<Vec3> pos = layer.rest_positions;
    for (auto& p : pos) p.z += 0.05 * rng.normal();
    VertexNormals a = vertex_normals(layer.topology, pos);
    VertexNormals b = ref::vertex_normals_serial(layer.topology, pos);
    for (int v = 0; v < layer.topology.vertex_count; v++) {
        CHECK(a.normals[v].x == doctest::Approx(b.normals[v].x).epsilon(1e-12));
        CHECK(a.normals[v].y == doctest::Approx(b.normals[v].y).epsilon(1e-12));
        CHECK(a.normals[v].z == doctest::Approx(b.normals[v].z).epsilon(1e-12));
    }
}
