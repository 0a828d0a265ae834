#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "layersim/model.hpp"
#include "layersim/verify.hpp"

using namespace layersim;

TEST_CASE("edge feature on a simple pair") {
    std::vector<double> f = edge_feature({1, 0}, {0, 1});
    CHECK(f[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(f[1] == doctest::Approx(1.0 / std::sqrt(2.0)));

    bool degen = false;
    std::vector<double> same = edge_feature({1, 2}, {1, 2}, &degen);
    CHECK(degen);
    CHECK(std::isfinite(same[0]));

    CHECK_THROWS_AS(edge_feature({1, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("semi-orthogonalization fixes an already orthonormal block") {
    Graph g;
    std::vector<double> raw(6 * 3, 0.0);
    raw[0 * 3 + 0] = 1.0;
    raw[1 * 3 + 1] = 1.0;
    raw[2 * 3 + 2] = 1.0;
    Tensor w = semi_orthogonalize(g, g.input({6, 3}, raw, false));
    for (int i = 0; i < 18; i++) CHECK(w.value()[i] == doctest::Approx(raw[i]).epsilon(1e-12));
}

TEST_CASE("semi-orthogonalization yields W^T W = I and rejects rank deficiency") {
    Rng rng(51);
    for (int rep = 0; rep < 20; rep++) {
        int d = 4 + int(rng.uniform_index(29));
        std::vector<double> raw(size_t(d) * 3);
        for (double& x : raw) x = rng.normal();
        Graph g;
        Tensor w = semi_orthogonalize(g, g.input({d, 3}, raw, false));
        const auto& v = w.value();
        for (int a = 0; a < 3; a++)
            for (int b = 0; b < 3; b++) {
                double dot = 0.0;
                for (int i = 0; i < d; i++) dot += v[size_t(i) * 3 + a] * v[size_t(i) * 3 + b];
                CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-9);
            }
    }

    Graph g;
    std::vector<double> degenerate(5 * 3);
    Rng rng2(52);
    for (int i = 0; i < 5; i++) {
        double x = rng2.normal();
        degenerate[i * 3 + 0] = x;
        degenerate[i * 3 + 1] = 2.0 * x;  // column 1 = 2 x column 0
        degenerate[i * 3 + 2] = rng2.normal();
    }
    CHECK_THROWS_AS(semi_orthogonalize(g, g.input({5, 3}, degenerate, false)), std::invalid_argument);
}

TEST_CASE("orthogonalization gradients pass finite differences") {
    Rng rng(53);
    int d = 6;
    std::vector<double> raw(size_t(d) * 3);
    for (double& x : raw) x = rng.normal();
    std::vector<double> weights(size_t(d) * 3);
    for (double& x : weights) x = (rng.normal() >= 0 ? 1.0 : -1.0) * (0.3 + std::abs(rng.normal()));

    auto build = [weights, d](Graph& g, const std::vector<Tensor>& t) {
        Tensor w = semi_orthogonalize(g, t[0]);
        return g.sum(g.mul(w, g.constant({d, 3}, weights)));
    };
    CHECK(gradcheck(build, {{d, 3}}, {raw}, 1e-6) < 1e-4);
}

TEST_CASE("rotation lift is the identity at R = I and reduces to R at d = 3") {
    Rng rng(54);
    int d = 10;
    std::vector<double> raw(size_t(d) * 3);
    for (double& x : raw) x = rng.normal();
    Graph g;
    std::vector<double> w = semi_orthogonalize(g, g.input({d, 3}, raw, false)).value();

    std::vector<double> phi_id = lift_rotation(Mat3::identity(), w, d);
    for (int i = 0; i < d; i++)
        for (int j = 0; j < d; j++)
            CHECK(phi_id[size_t(i) * d + j] == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));

    std::vector<double> eye3 = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    Quat q{0.8, 0.36, 0.36, 0.312};
    double n = q.norm();
    q = {q.w / n, q.x / n, q.y / n, q.z / n};
    Mat3 rot = quat_to_matrix(q);
    std::vector<double> phi3 = lift_rotation(rot, eye3, 3);
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) CHECK(phi3[size_t(i) * 3 + j] == doctest::Approx(rot.m[i][j]).epsilon(1e-12));
}

TEST_CASE("in-graph lift application matches the explicit matrix") {
    Rng rng(55);
    int d = 12, m = 7;
    std::vector<double> raw(size_t(d) * 3), feats(size_t(m) * d);
    for (double& x : raw) x = rng.normal();
    for (double& x : feats) x = rng.normal();
    std::vector<Mat3> rots;
    for (int i = 0; i < m; i++) {
        Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        double n = q.norm();
        rots.push_back(quat_to_matrix(Quat{q.w / n, q.x / n, q.y / n, q.z / n}));
    }

    Graph g;
    Tensor w = semi_orthogonalize(g, g.input({d, 3}, raw, false));
    Tensor f = g.constant({m, d}, feats);
    for (bool transpose : {false, true}) {
        Tensor lifted = lift_apply(g, f, w, rots, transpose);
        for (int i = 0; i < m; i++) {
            Mat3 r = transpose ? rots[i].transposed() : rots[i];
            std::vector<double> phi = lift_rotation(r, w.value(), d);
            for (int j = 0; j < d; j++) {
                double expect = 0.0;
                for (int k = 0; k < d; k++) expect += phi[size_t(j) * d + k] * feats[size_t(i) * d + k];
                CHECK(lifted.value()[size_t(i) * d + j] == doctest::Approx(expect).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("attention weights: singleton edges and tied senders") {
    Graph g;
    // one receiver with a single edge: weight 1 regardless of magnitude
    Tensor one = g.segment_softmax(g.constant({1}, {123.45}), {0});
    CHECK(one.value()[0] == doctest::Approx(1.0));

    // two identical senders: equal split
    Tensor two = g.segment_softmax(g.constant({2}, {7.7, 7.7}), {0, 0});
    CHECK(two.value()[0] == doctest::Approx(0.5));
    CHECK(two.value()[1] == doctest::Approx(0.5));
}

TEST_CASE("attention weights survive a shared lifted rotation of all features") {
    // rotating every canonical frame by Q and pre-rotating hidden features by
    // phi(Q) leaves the weights unchanged
    Rng rng(56);
    int d = 16, edges = 6;
    std::vector<double> raw(size_t(d) * 3);
    for (double& x : raw) x = rng.normal();
    Graph g;
    Tensor w = semi_orthogonalize(g, g.input({d, 3}, raw, false));
    Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    double n = q.norm();
    std::vector<double> phi = lift_rotation(quat_to_matrix(Quat{q.w / n, q.x / n, q.y / n, q.z / n}), w.value(), d);

    std::vector<double> qv(size_t(edges) * d), fv(size_t(edges) * d);
    for (double& x : qv) x = rng.normal();
    for (double& x : fv) x = rng.normal();
    std::vector<int> segs(edges, 0);

    auto weights_of = [&](const std::vector<double>& qq, const std::vector<double>& ff) {
        Graph h;
        Tensor logits = h.rowwise_dot(h.constant({edges, d}, qq), h.constant({edges, d}, ff));
        return h.segment_softmax(logits, segs).value();
    };
    auto rotate_rows = [&](const std::vector<double>& rows) {
        std::vector<double> out(rows.size(), 0.0);
        for (int e = 0; e < edges; e++)
            for (int i = 0; i < d; i++)
                for (int k = 0; k < d; k++)
                    out[size_t(e) * d + i] += phi[size_t(i) * d + k] * rows[size_t(e) * d + k];
        return out;
    };

    std::vector<double> w0 = weights_of(qv, fv);
    std::vector<double> w1 = weights_of(rotate_rows(qv), rotate_rows(fv));
    for (int e = 0; e < edges; e++) CHECK(std::abs(w0[e] - w1[e]) < 1e-9);
}

TEST_CASE("token features and edges ignore a global translation") {
    SequenceData seq = make_tiny_two_patch_sequence();
    SimulatorConfig cfg = tiny_model_config();
    StepInput in = make_step_input(seq, 2, cfg.history);
    StepInput moved = in;
    for (auto& frame : moved.x_hist)
        for (auto& p : frame) p += Vec3(3, -2, 5);
    for (auto& frame : moved.body_pos)
        for (auto& p : frame) p += Vec3(3, -2, 5);

    Rng r1(5), r2(5);
    TokenGraph a = encode_tokens(in, cfg, r1);
    TokenGraph b = encode_tokens(moved, cfg, r2);

    REQUIRE(a.patch_features.size() == b.patch_features.size());
    for (size_t i = 0; i < a.patch_features.size(); i++)
        CHECK(a.patch_features[i] == doctest::Approx(b.patch_features[i]).epsilon(1e-9));
    REQUIRE(a.edges.size() == b.edges.size());
    for (size_t e = 0; e < a.edges.size(); e++) {
        CHECK(a.edges.receivers[e] == b.edges.receivers[e]);
        CHECK(a.edges.senders[e] == b.edges.senders[e]);
    }
}

TEST_CASE("patch token feature width for one history step") {
    SimulatorConfig cfg = tiny_model_config();
    CHECK(cfg.history == 1);
    CHECK(cfg.patch_feature_dim() == 14);  // two velocities, a normal, five attributes
    CHECK(cfg.body_feature_dim() == 9);
}

TEST_CASE("zero decoder output leaves pure inertia") {
    SequenceData seq = make_tiny_two_patch_sequence();
    SimulatorConfig cfg = tiny_model_config();
    ModelParams params = ModelParams::init(cfg, 7);
    params.values["decoder.w4"].assign(params.values["decoder.w4"].size(), 0.0);
    params.values["decoder.b4"].assign(3, 0.0);

    Graph g;
    ParamTensors pt = make_param_tensors(g, params, false);
    StepInput in = make_step_input(seq, 2, cfg.history);
    Rng rng(8);
    StepPrediction pred = forward_step(g, pt, cfg, in, rng);

    for (int k = 0; k < seq.total_vertex_count(); k++) {
        Vec3 v_t = (in.x_hist[0][k] - in.x_hist[1][k]) / seq.dt;
        Vec3 expect = in.x_hist[0][k] + v_t * seq.dt;
        CHECK((pred.positions[k] - expect).norm() < 1e-12);
    }
}

TEST_CASE("constant decoder acceleration integrates like gravity") {
    SequenceData seq = make_tiny_two_patch_sequence();
    SimulatorConfig cfg = tiny_model_config();
    cfg.use_rotation_lift = false;  // identity frames make the check exact
    ModelParams params = ModelParams::init(cfg, 7);
    params.values["decoder.w4"].assign(params.values["decoder.w4"].size(), 0.0);
    params.values["decoder.b4"] = {0.0, 0.0, -9.8};

    // zero-velocity history isolates the acceleration path
    std::vector<std::vector<Vec3>> frozen(cfg.history + 2, seq.garment_positions[2]);
    Graph g;
    ParamTensors pt = make_param_tensors(g, params, false);
    StepInput in = make_step_input(seq, 2, cfg.history, &frozen);
    Rng rng(8);
    StepPrediction pred = forward_step(g, pt, cfg, in, rng);

    double dt = seq.dt;
    for (int k = 0; k < seq.total_vertex_count(); k++) {
        Vec3 delta = pred.positions[k] - seq.garment_positions[2][k];
        CHECK(delta.x == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(delta.z == doctest::Approx(dt * dt * -9.8));  // dt * (dt * alpha + 0)
        CHECK(delta.z == doctest::Approx(-0.0108889).epsilon(1e-4));
    }
}

TEST_CASE("rollout base cases") {
    SequenceData seq = make_tiny_two_patch_sequence();
    SimulatorConfig cfg = tiny_model_config();
    ModelParams params = ModelParams::init(cfg, 9);

    CHECK(rollout(params, seq, 2, 0, 1).frames.empty());

    RolloutResult one = rollout(params, seq, 2, 1, 1);
    REQUIRE(one.frames.size() == 1);
    CHECK(one.diverged_at == -1);

    // a single rollout step equals one forward pass under the same rng stream
    Graph g;
    ParamTensors pt = make_param_tensors(g, params, false);
    StepInput in = make_step_input(seq, 2, cfg.history);
    Rng rng(1);
    StepPrediction pred = forward_step(g, pt, cfg, in, rng);
    for (int k = 0; k < seq.total_vertex_count(); k++)
        CHECK((one.frames[0][k] - pred.positions[k]).norm() == 0.0);

    RolloutResult five = rollout(params, seq, 2, 2, 1);
    CHECK(five.diverged_at == -1);
    for (const auto& frame : five.frames)
        for (const Vec3& p : frame) CHECK(p.finite());
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    namespace fs = std::filesystem;
    SimulatorConfig cfg = tiny_model_config();
    cfg.use_rotation_lift = false;
    ModelParams params = ModelParams::init(cfg, 1234);
    fs::path path = fs::temp_directory_path() / "layersim_test.lnpk";
    save_checkpoint(path.string(), params);
    ModelParams loaded = load_checkpoint(path.string());
    fs::remove(path);

    CHECK(loaded.config.hidden == cfg.hidden);
    CHECK(loaded.config.use_rotation_lift == false);
    REQUIRE(loaded.shapes == params.shapes);
    for (const auto& [name, v] : params.values) CHECK(loaded.values.at(name) == v);
}
