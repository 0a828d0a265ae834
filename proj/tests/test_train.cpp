#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "layersim/train.hpp"
#include "layersim/verify.hpp"

using namespace layersim;

TEST_CASE("vertex and patch MSE examples") {
    std::vector<Vec3> truth = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    std::vector<Vec3> centers = {Vec3(0.5, 0, 0)};
    CHECK(loss_mse_plain(truth, truth, centers, centers) == 0.0);

    Vec3 c(0.1, -0.2, 0.3);
    std::vector<Vec3> off = {truth[0] + c, truth[1] + c};
    std::vector<Vec3> off_c = {centers[0] + c};
    CHECK(loss_mse_plain(off, truth, off_c, centers) == doctest::Approx(2.0 * c.norm2()).epsilon(1e-12));

    Rng rng(61);
    std::vector<Vec3> a(20), b(20), ca(4), cb(4);
    for (auto& v : a) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    for (auto& v : b) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    for (auto& v : ca) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    for (auto& v : cb) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    double direct = 0.0;
    for (int i = 0; i < 20; i++) direct += (a[i] - b[i]).norm2();
    direct /= 20.0;
    double cdir = 0.0;
    for (int i = 0; i < 4; i++) cdir += (ca[i] - cb[i]).norm2();
    cdir /= 4.0;
    CHECK(loss_mse_plain(a, b, ca, cb) == doctest::Approx(direct + cdir).epsilon(1e-12));

    CHECK_THROWS_AS(loss_mse_plain(a, {Vec3()}, ca, cb), std::invalid_argument);
}

TEST_CASE("normal loss is zero for identical or z-rotated flat sheets") {
    ClothLayer flat = build_cloth_grid(5, 5, 0.2, GarmentAttributes{});
    CHECK(loss_normal_plain(flat.rest_positions, flat.rest_positions, flat.topology) == 0.0);

    // a flat sheet rotated about z keeps all normals at +z
    std::vector<Vec3> spun(flat.rest_positions.size());
    for (size_t i = 0; i < spun.size(); i++) {
        const Vec3& p = flat.rest_positions[i];
        spun[i] = Vec3(-p.x, -p.y, p.z);  // rotation by pi about z
    }
    CHECK(loss_normal_plain(spun, flat.rest_positions, flat.topology) == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("normal loss matches direct evaluation on perturbed sheets") {
    Rng rng(62);
    ClothLayer flat = build_cloth_grid(6, 4, 0.25, GarmentAttributes{});
    std::vector<Vec3> bent = flat.rest_positions;
    for (auto& p : bent) p.z += 0.05 * rng.normal();

    VertexNormals np = vertex_normals(flat.topology, bent);
    VertexNormals nt = vertex_normals(flat.topology, flat.rest_positions);
    double direct = 0.0;
    for (int i = 0; i < flat.topology.vertex_count; i++) direct += (np.normals[i] - nt.normals[i]).norm2();
    direct /= flat.topology.vertex_count;
    CHECK(loss_normal_plain(bent, flat.rest_positions, flat.topology) == doctest::Approx(direct).epsilon(1e-12));
    CHECK(direct > 0.0);
}

TEST_CASE("collision penalty activates only behind the separation threshold") {
    std::vector<Vec3> anchors = {Vec3(0, 0, 0)};
    std::vector<Vec3> normals = {Vec3(0, 0, 1)};
    double d_eps = 0.004;

    CHECK(loss_collision_plain({Vec3(0, 0, 0.01)}, anchors, normals, d_eps) == 0.0);
    CHECK(loss_collision_plain({Vec3(0, 0, -0.01)}, anchors, normals, d_eps) ==
          doctest::Approx(1.96e-4).epsilon(1e-9));
    CHECK(loss_collision_plain({Vec3(0, 0, d_eps)}, anchors, normals, d_eps) == 0.0);  // boundary
    CHECK_THROWS_AS(loss_collision_plain({Vec3()}, {}, {}, d_eps), std::invalid_argument);
}

TEST_CASE("penalty grows monotonically with penetration depth") {
    std::vector<Vec3> anchors = {Vec3(0, 0, 0)};
    std::vector<Vec3> normals = {Vec3(0, 0, 1)};
    double prev = -1.0;
    for (int k = 0; k < 60; k++) {
        double z = 0.004 - k * 0.001;  // marching along -n
        double pen = loss_collision_plain({Vec3(0, 0, z)}, anchors, normals, 0.004);
        CHECK(pen >= prev);
        prev = pen;
    }
}

TEST_CASE("weighted total rejects NaN and respects the weights") {
    LossConfig cfg;
    cfg.lambda_m = 0;
    cfg.lambda_n = 0;
    cfg.lambda_b = 0;
    cfg.lambda_g = 0;
    CHECK(total_loss_plain(1, 2, 3, 4, cfg) == 0.0);

    cfg.lambda_m = 1;
    CHECK(total_loss_plain(0.7, 2, 3, 4, cfg) == doctest::Approx(0.7));

    cfg = LossConfig{};
    cfg.lambda_m = 1;
    cfg.lambda_n = 0.1;
    cfg.lambda_b = 1;
    cfg.lambda_g = 1;
    Rng rng(63);
    double a = std::abs(rng.normal()), b = std::abs(rng.normal()), c = std::abs(rng.normal()),
           d = std::abs(rng.normal());
    CHECK(total_loss_plain(a, b, c, d, cfg) == doctest::Approx(a + 0.1 * b + c + d).epsilon(1e-12));
    CHECK_THROWS_AS(total_loss_plain(std::nan(""), 0, 0, 0, cfg), std::invalid_argument);

    LossConfig bad;
    bad.lambda_m = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("graph losses vanish on the truth and match the plain route") {
    SequenceData seq = make_tiny_two_patch_sequence();
    SimulatorConfig mcfg = tiny_model_config();
    ModelParams params = ModelParams::init(mcfg, 3);
    LossConfig cfg;
    cfg.d_eps = seq.eps_garment;

    Graph g;
    ParamTensors pt = make_param_tensors(g, params, false);
    StepInput in = make_step_input(seq, 2, mcfg.history);
    Rng rng(4);
    StepPrediction pred = forward_step(g, pt, mcfg, in, rng);
    StepLoss loss = build_step_loss(g, pred, seq, 2, cfg);

    CHECK(loss.mse >= 0.0);
    CHECK(loss.normal >= 0.0);
    CHECK(loss.coll_body >= 0.0);
    CHECK(loss.coll_garment >= 0.0);
    CHECK(loss.value ==
          doctest::Approx(cfg.lambda_m * loss.mse + cfg.lambda_n * loss.normal + cfg.lambda_b * loss.coll_body +
                          cfg.lambda_g * loss.coll_garment)
              .epsilon(1e-12));

    // a "prediction" equal to the truth zeroes the distance terms
    StepPrediction exact;
    exact.tensor = g.constant({seq.total_vertex_count(), 3}, [&] {
        std::vector<double> flat;
        for (const Vec3& p : seq.garment_positions[3]) {
            flat.push_back(p.x);
            flat.push_back(p.y);
            flat.push_back(p.z);
        }
        return flat;
    }());
    exact.positions = seq.garment_positions[3];
    exact.tokens = pred.tokens;
    StepLoss zero = build_step_loss(g, exact, seq, 2, cfg);
    CHECK(zero.mse == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(zero.normal == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("adam drives a quadratic to its minimum") {
    SimulatorConfig cfg = tiny_model_config();
    ModelParams p;
    p.config = cfg;
    p.shapes["w"] = {4};
    p.values["w"] = {5.0, -3.0, 2.0, 9.0};
    Adam adam(0.05);
    for (int it = 0; it < 2000; it++) {
        std::map<std::string, std::vector<double>> grads;
        std::vector<double> grad(4);
        for (int i = 0; i < 4; i++) grad[i] = 2.0 * p.values["w"][i];
        grads["w"] = grad;
        adam.update(p, grads);
    }
    for (double v : p.values["w"]) CHECK(std::abs(v) < 1e-3);
}

TEST_CASE("training is reproducible bit for bit") {
    namespace fs = std::filesystem;
    SequenceData seq = make_tiny_two_patch_sequence();
    SimulatorConfig mcfg = tiny_model_config();
    TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.max_steps = 4;
    tcfg.noise_steps = 1;
    tcfg.seed = 11;
    tcfg.loss.d_eps = seq.eps_garment;

    TrainResult r1 = train(mcfg, tcfg, {seq});
    TrainResult r2 = train(mcfg, tcfg, {seq});

    fs::path p1 = fs::temp_directory_path() / "ls_train_a.lnpk";
    fs::path p2 = fs::temp_directory_path() / "ls_train_b.lnpk";
    save_checkpoint(p1.string(), r1.params);
    save_checkpoint(p2.string(), r2.params);
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    };
    CHECK(slurp(p1) == slurp(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("teacher forcing is the degenerate noise schedule") {
    SequenceData seq = make_tiny_two_patch_sequence();
    SimulatorConfig mcfg = tiny_model_config();
    ModelParams params = ModelParams::init(mcfg, 21);
    Adam adam(1e-4);
    TrainConfig tcfg;
    tcfg.noise_steps = 0;
    tcfg.loss.d_eps = seq.eps_garment;
    Rng rng(5);
    StepLoss loss = train_step(params, adam, seq, 2, tcfg, rng);
    CHECK(std::isfinite(loss.value));
    CHECK(adam.steps() == 1);
}

TEST_CASE("training log CSV has the advertised columns") {
    namespace fs = std::filesystem;
    std::vector<TrainLogRow> log(2);
    log[0].step = 1;
    log[0].total = 0.5;
    log[1].step = 2;
    log[1].total = 0.25;
    fs::path path = fs::temp_directory_path() / "ls_log.csv";
    write_train_log_csv(path.string(), log);
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header == "step,total,mse,normal,coll_body,coll_garment,seconds");
    fs::remove(path);
}
