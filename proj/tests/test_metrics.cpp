#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "layersim/cloth.hpp"
#include "layersim/metrics.hpp"
#include "layersim/rng.hpp"

using namespace layersim;
namespace fs = std::filesystem;

TEST_CASE("euclidean error on trivial fields") {
    std::vector<std::vector<Vec3>> truth = {{Vec3(0, 0, 0), Vec3(1, 1, 1)}, {Vec3(2, 0, 0), Vec3(0, 2, 0)}};
    CHECK(euclidean_error(truth, truth) == 0.0);

    std::vector<std::vector<Vec3>> off = truth;
    for (auto& frame : off)
        for (auto& p : frame) p += Vec3(0.01, 0, 0);
    CHECK(euclidean_error(off, truth) == doctest::Approx(0.01).epsilon(1e-12));

    CHECK_THROWS_AS(euclidean_error(off, {{Vec3()}}), std::invalid_argument);
}

TEST_CASE("euclidean error equals the direct triple loop") {
    Rng rng(71);
    std::vector<std::vector<Vec3>> a(4), b(4);
    for (int t = 0; t < 4; t++)
        for (int i = 0; i < 9; i++) {
            a[t].push_back(Vec3(rng.normal(), rng.normal(), rng.normal()));
            b[t].push_back(Vec3(rng.normal(), rng.normal(), rng.normal()));
        }
    double direct = 0.0;
    for (int t = 0; t < 4; t++) {
        double frame = 0.0;
        for (int i = 0; i < 9; i++) frame += (a[t][i] - b[t][i]).norm();
        direct += frame / 9.0;
    }
    direct /= 4.0;
    CHECK(euclidean_error(a, b) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("sequence order does not move the dataset mean and scale is linear") {
    Rng rng(72);
    std::vector<double> seq_errors;
    std::vector<std::vector<Vec3>> a(2), b(2);
    for (int t = 0; t < 2; t++)
        for (int i = 0; i < 5; i++) {
            a[t].push_back(Vec3(rng.normal(), rng.normal(), rng.normal()));
            b[t].push_back(Vec3(rng.normal(), rng.normal(), rng.normal()));
        }
    double e1 = euclidean_error(a, b);

    std::vector<std::vector<Vec3>> a2 = {a[1], a[0]}, b2 = {b[1], b[0]};
    CHECK(euclidean_error(a2, b2) == doctest::Approx(e1).epsilon(1e-12));  // frame permutation

    std::vector<std::vector<Vec3>> a3 = a, b3 = b;
    for (auto& frame : a3)
        for (auto& p : frame) p *= 2.5;
    for (auto& frame : b3)
        for (auto& p : frame) p *= 2.5;
    CHECK(euclidean_error(a3, b3) == doctest::Approx(2.5 * e1).epsilon(1e-12));
}

namespace {
std::vector<std::vector<SurfaceSample>> sphere_frames(int frames, int samples) {
    BodyCollider body;
    RigidShape s;
    s.kind = RigidShape::Sphere;
    s.radius = 0.5;
    body.shapes = {s};
    std::vector<SurfaceSample> local = body.sample_surface_local(samples);
    std::vector<std::vector<SurfaceSample>> out;
    for (int t = 0; t < frames; t++) {
        body.trajectory.push_back(RigidTransform{});
        out.push_back(body.sample_surface(local, t));
    }
    return out;
}
}  // namespace

TEST_CASE("body collision rate hits 0% outside and 100% mirrored inside") {
    auto body = sphere_frames(2, 64);
    std::vector<std::vector<Vec3>> outside(2), inside(2);
    for (int t = 0; t < 2; t++)
        for (const auto& s : body[t]) {
            outside[t].push_back(s.position + s.normal * 0.1);
            inside[t].push_back(s.position - s.normal * 0.1);
        }
    CHECK(collision_rate_body(outside, body, 0.0) == 0.0);
    CHECK(collision_rate_body(inside, body, 0.0) == 100.0);
}

TEST_CASE("garment collision rate: separated layers vs inward-displaced copy") {
    ClothLayer inner_layer = build_cloth_grid(6, 6, 0.1, GarmentAttributes{});
    std::vector<Vec3> inner = inner_layer.rest_positions;  // flat, normals +z
    double d_eps = 0.004;

    std::vector<Vec3> above(inner.size()), below(inner.size());
    for (size_t i = 0; i < inner.size(); i++) {
        above[i] = inner[i] + Vec3(0, 0, 0.5);       // outside any anchor radius
        below[i] = inner[i] + Vec3(0, 0, -0.5 * d_eps);  // behind the surface, within reach
    }
    CHECK(collision_rate_garment({inner}, {above}, inner_layer.topology, 0.0, 3 * d_eps) == 0.0);
    CHECK(collision_rate_garment({inner}, {below}, inner_layer.topology, 0.0, 3 * d_eps) == 100.0);
}

TEST_CASE("collision rates are invariant under a rigid motion of the scene") {
    Rng rng(73);
    auto body = sphere_frames(1, 48);
    ClothLayer sheet = build_cloth_grid(5, 5, 0.12, GarmentAttributes{});
    std::vector<std::vector<Vec3>> garment(1);
    for (const Vec3& p : sheet.rest_positions) garment[0].push_back(p + Vec3(-0.3, -0.3, 0.3));

    double base = collision_rate_body(garment, body, 0.0);

    Quat q{0.9, 0.2, -0.1, 0.35};
    double n = q.norm();
    Mat3 rot = quat_to_matrix(Quat{q.w / n, q.x / n, q.y / n, q.z / n});
    Vec3 shift(4, -1, 2);
    auto move_p = [&](const Vec3& p) { return rot * p + shift; };

    std::vector<std::vector<Vec3>> garment_m(1);
    for (const Vec3& p : garment[0]) garment_m[0].push_back(move_p(p));
    std::vector<std::vector<SurfaceSample>> body_m(1);
    for (const auto& s : body[0]) body_m[0].push_back({move_p(s.position), rot * s.normal});

    CHECK(collision_rate_body(garment_m, body_m, 0.0) == doctest::Approx(base));
}

TEST_CASE("eval CSV carries one row per sequence") {
    namespace fs = std::filesystem;
    EvalReport report;
    report.rows.push_back({"seq_a", 0.01, 1.5, 0.2, -1});
    report.rows.push_back({"seq_b", 0.02, 0.5, 0.0, -1});
    fs::path path = fs::temp_directory_path() / "ls_eval.csv";
    write_eval_csv(path.string(), report);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "sequence_id,euclid_err_m,coll_body_pct,coll_garment_pct");
    int rows = 0;
    while (std::getline(is, line))
        if (!line.empty()) rows++;
    CHECK(rows == 2);
    fs::remove(path);
    CHECK(report.mean_euclid() == doctest::Approx(0.015));
}
