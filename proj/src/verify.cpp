#include "layersim/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "layersim/lseq.hpp"
#include "layersim/oracle.hpp"
#include "layersim/spatial_hash.hpp"
#include "layersim/train.hpp"

namespace layersim {

namespace {

Mat3 random_rotation(Rng& rng) {
    Quat q;
    double n = 0.0;
    while (n < 1e-12) {
        q.w = rng.normal();
        q.x = rng.normal();
        q.y = rng.normal();
        q.z = rng.normal();
        n = q.norm();
    }
    q.w /= n;
    q.x /= n;
    q.y /= n;
    q.z /= n;
    return quat_to_matrix(q);
}

// random orthogonal d x d via Gram-Schmidt of a normal matrix
std::vector<double> random_orthogonal(int d, Rng& rng) {
    std::vector<double> m(size_t(d) * d);
    for (double& x : m) x = rng.normal();
    for (int j = 0; j < d; j++) {
        for (int i = 0; i < j; i++) {
            double dot = 0.0;
            for (int k = 0; k < d; k++) dot += m[size_t(k) * d + i] * m[size_t(k) * d + j];
            for (int k = 0; k < d; k++) m[size_t(k) * d + j] -= dot * m[size_t(k) * d + i];
        }
        double len = 0.0;
        for (int k = 0; k < d; k++) len += m[size_t(k) * d + j] * m[size_t(k) * d + j];
        len = std::sqrt(len);
        for (int k = 0; k < d; k++) m[size_t(k) * d + j] /= len;
    }
    return m;
}

std::vector<double> mat_apply(const std::vector<double>& m, const std::vector<double>& v, int d) {
    std::vector<double> out(d, 0.0);
    for (int i = 0; i < d; i++)
        for (int j = 0; j < d; j++) out[i] += m[size_t(i) * d + j] * v[j];
    return out;
}

std::vector<double> randn_vec(int d, Rng& rng) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    return v;
}

}  // namespace

CheckResult check_edge_feature_equivariance(int trials) {
    Rng rng(101);
    double worst = 0.0;
    for (int t = 0; t < trials; t++) {
        int d = 4 + int(rng.uniform_index(29));
        std::vector<double> r = randn_vec(d, rng), s = randn_vec(d, rng);
        std::vector<double> q = random_orthogonal(d, rng);
        std::vector<double> lhs = edge_feature(mat_apply(q, r, d), mat_apply(q, s, d));
        std::vector<double> rhs = mat_apply(q, edge_feature(r, s), d);
        for (int i = 0; i < d; i++) worst = std::max(worst, std::abs(lhs[i] - rhs[i]));
    }
    return {"edge_feature_equivariance", worst < 1e-9, worst, 1e-9, ""};
}

CheckResult check_attention_weight_invariance(int trials) {
    Rng rng(102);
    double worst = 0.0;
    for (int t = 0; t < trials; t++) {
        int d = 4 + int(rng.uniform_index(29));
        int edges = 2 + int(rng.uniform_index(7));
        std::vector<double> q = randn_vec(d, rng);
        std::vector<std::vector<double>> f;
        for (int e = 0; e < edges; e++) f.push_back(randn_vec(d, rng));
        std::vector<double> u = random_orthogonal(d, rng);

        auto weights = [&](const std::vector<double>& qq, const std::vector<std::vector<double>>& ff) {
            std::vector<double> logits(edges, 0.0);
            for (int e = 0; e < edges; e++)
                for (int i = 0; i < d; i++) logits[e] += qq[i] * ff[e][i];
            double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& l : logits) {
                l = std::exp(l - mx);
                z += l;
            }
            for (double& l : logits) l /= z;
            return logits;
        };

        std::vector<double> w0 = weights(q, f);
        std::vector<std::vector<double>> f_rot;
        for (const auto& fe : f) f_rot.push_back(mat_apply(u, fe, d));
        std::vector<double> w1 = weights(mat_apply(u, q, d), f_rot);
        for (int e = 0; e < edges; e++) worst = std::max(worst, std::abs(w0[e] - w1[e]));
    }
    return {"attention_weight_invariance", worst < 1e-9, worst, 1e-9, ""};
}

CheckResult check_lift_homomorphism(int trials) {
    Rng rng(103);
    double worst = 0.0;
    const int dims[3] = {8, 16, 32};
    for (int t = 0; t < trials; t++) {
        int d = dims[rng.uniform_index(3)];
        Graph g;
        Tensor raw = g.input({d, 3}, randn_vec(d * 3, rng), false);
        std::vector<double> w = semi_orthogonalize(g, raw).value();

        Mat3 r1 = random_rotation(rng), r2 = random_rotation(rng);
        std::vector<double> p1 = lift_rotation(r1, w, d);
        std::vector<double> p2 = lift_rotation(r2, w, d);
        std::vector<double> p12 = lift_rotation(r1 * r2, w, d);

        std::vector<double> prod(size_t(d) * d), gram(size_t(d) * d);
        matmul_kernel(p1.data(), p2.data(), prod.data(), d, d, d);
        for (size_t i = 0; i < prod.size(); i++) worst = std::max(worst, std::abs(prod[i] - p12[i]));

        // orthogonality: phi(r1) phi(r1)^T = I
        std::vector<double> p1t(size_t(d) * d);
        for (int i = 0; i < d; i++)
            for (int j = 0; j < d; j++) p1t[size_t(j) * d + i] = p1[size_t(i) * d + j];
        matmul_kernel(p1.data(), p1t.data(), gram.data(), d, d, d);
        for (int i = 0; i < d; i++)
            for (int j = 0; j < d; j++)
                worst = std::max(worst, std::abs(gram[size_t(i) * d + j] - (i == j ? 1.0 : 0.0)));
    }
    return {"rotation_lift_homomorphism", worst < 1e-9, worst, 1e-9, ""};
}

CheckResult check_edge_feature_identity(int trials) {
    Rng rng(104);
    double worst = 0.0;
    for (int t = 0; t < trials; t++) {
        int d = 2 + int(rng.uniform_index(31));
        std::vector<double> r = randn_vec(d, rng), s = randn_vec(d, rng);

        // mean/deviation form: (r + s - mu) / sigma with mu the midpoint and
        // sigma the average distance of r and s to it
        std::vector<double> mu(d);
        for (int i = 0; i < d; i++) mu[i] = 0.5 * (r[i] + s[i]);
        double dr = 0.0, ds = 0.0;
        for (int i = 0; i < d; i++) {
            dr += (r[i] - mu[i]) * (r[i] - mu[i]);
            ds += (s[i] - mu[i]) * (s[i] - mu[i]);
        }
        double sigma = 0.5 * (std::sqrt(dr) + std::sqrt(ds));
        std::vector<double> route_a(d);
        for (int i = 0; i < d; i++) route_a[i] = (r[i] + s[i] - mu[i]) / sigma;

        std::vector<double> route_b = edge_feature(r, s);
        for (int i = 0; i < d; i++) worst = std::max(worst, std::abs(route_a[i] - route_b[i]));
    }
    return {"edge_feature_simplified_identity", worst < 1e-12, worst, 1e-12, ""};
}

// ---- op gradient checks ---------------------------------------------------

namespace {

struct OpCase {
    std::string name;
    std::vector<Shape> shapes;
    std::vector<std::vector<double>> inputs;
    std::function<Tensor(Graph&, const std::vector<Tensor>&)> build;
};

// wraps an op output into a scalar through a fixed random weighting so the
// whole jacobian is exercised
std::function<Tensor(Graph&, const std::vector<Tensor>&)> weighted(
    std::function<Tensor(Graph&, const std::vector<Tensor>&)> op, std::vector<double> weights) {
    return [op = std::move(op), weights = std::move(weights)](Graph& g, const std::vector<Tensor>& in) {
        Tensor out = op(g, in);
        Shape s = out.shape();
        if (numel(s) == 1 && s.empty()) return out;
        Tensor w = g.constant(s, weights);
        return g.sum(g.mul(out, w));
    };
}

std::vector<double> safe_randn(int64_t n, Rng& rng, double keepout = 0.0) {
    std::vector<double> v(n);
    for (double& x : v) {
        x = rng.normal();
        if (keepout > 0.0 && std::abs(x) < keepout) x += (x >= 0.0 ? keepout : -keepout);
    }
    return v;
}

std::vector<double> positive_randn(int64_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = 0.5 + 1.5 * rng.uniform();
    return v;
}

// weights bounded away from zero keep the finite-difference probe
// well-conditioned (tiny weights drown the quotient in rounding noise)
std::vector<double> weight_randn(int64_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) {
        double r = rng.normal();
        x = (r >= 0.0 ? 1.0 : -1.0) * (0.3 + std::abs(r));
    }
    return v;
}

void add_case(std::vector<OpCase>& cases, const std::string& name, std::vector<Shape> shapes,
              std::vector<std::vector<double>> inputs, int64_t out_elems, Rng& rng,
              std::function<Tensor(Graph&, const std::vector<Tensor>&)> op) {
    OpCase c;
    c.name = name;
    c.shapes = std::move(shapes);
    c.inputs = std::move(inputs);
    c.build = weighted(std::move(op), weight_randn(out_elems, rng));
    cases.push_back(std::move(c));
}

std::vector<OpCase> make_op_cases(int per_op, Rng& rng) {
    std::vector<OpCase> cases;
    for (int k = 0; k < per_op; k++) {
        int m = 2 + int(rng.uniform_index(5));
        int d = 2 + int(rng.uniform_index(5));
        int n = 2 + int(rng.uniform_index(5));
        Shape md{m, d}, dn{d, n};
        int64_t e_md = int64_t(m) * d;

        add_case(cases, "add", {md, md}, {safe_randn(e_md, rng), safe_randn(e_md, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.add(t[0], t[1]); });
        add_case(cases, "sub", {md, md}, {safe_randn(e_md, rng), safe_randn(e_md, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.sub(t[0], t[1]); });
        add_case(cases, "mul", {md, md}, {safe_randn(e_md, rng), safe_randn(e_md, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.mul(t[0], t[1]); });
        add_case(cases, "relu", {md}, {safe_randn(e_md, rng, 0.01)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.relu(t[0]); });
        add_case(cases, "scale_const", {md}, {safe_randn(e_md, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.scale_const(t[0], -1.7); });
        add_case(cases, "scale", {md, {}}, {safe_randn(e_md, rng), positive_randn(1, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.scale(t[0], t[1]); });
        add_case(cases, "div_scalar", {md, {}}, {safe_randn(e_md, rng), positive_randn(1, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.div_scalar(t[0], t[1]); });
        add_case(cases, "matmul", {md, dn}, {safe_randn(e_md, rng), safe_randn(int64_t(d) * n, rng)},
                 int64_t(m) * n, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.matmul(t[0], t[1]); });
        add_case(cases, "transpose", {md}, {safe_randn(e_md, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.transpose(t[0]); });
        add_case(cases, "add_rowvec", {md, {d}}, {safe_randn(e_md, rng), safe_randn(d, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.add_rowvec(t[0], t[1]); });
        add_case(cases, "reshape", {md}, {safe_randn(e_md, rng)}, e_md, rng,
                 [m, d](Graph& g, const std::vector<Tensor>& t) { return g.reshape(t[0], Shape{d, m}); });
        add_case(cases, "concat", {md, md}, {safe_randn(e_md, rng), safe_randn(e_md, rng)}, 2 * e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.concat(0, {t[0], t[1]}); });
        {
            int len = 1 + int(rng.uniform_index(uint64_t(d)));
            int start = int(rng.uniform_index(uint64_t(d - len + 1)));
            add_case(cases, "slice", {md}, {safe_randn(e_md, rng)}, int64_t(m) * len, rng,
                     [start, len](Graph& g, const std::vector<Tensor>& t) { return g.slice(t[0], 1, start, len); });
        }
        add_case(cases, "sum", {md}, {safe_randn(e_md, rng)}, 1, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.sum(t[0]); });
        add_case(cases, "mean", {md}, {safe_randn(e_md, rng)}, 1, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.mean(t[0]); });
        add_case(cases, "l2norm", {md}, {safe_randn(e_md, rng)}, 1, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.l2norm(t[0]); });
        add_case(cases, "mse", {md, md}, {safe_randn(e_md, rng), safe_randn(e_md, rng)}, 1, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.mse(t[0], t[1]); });
        add_case(cases, "softmax", {md}, {safe_randn(e_md, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.softmax(t[0], 1); });
        {
            std::vector<int> idx(m + 2);
            for (int& i : idx) i = int(rng.uniform_index(uint64_t(m)));
            add_case(cases, "gather_rows", {md}, {safe_randn(e_md, rng)}, int64_t(idx.size()) * d, rng,
                     [idx](Graph& g, const std::vector<Tensor>& t) { return g.gather_rows(t[0], idx); });
        }
        {
            int out_rows = m + 1;
            std::vector<int> idx(m);
            for (int& i : idx) i = int(rng.uniform_index(uint64_t(out_rows)));
            add_case(cases, "scatter_add_rows", {md}, {safe_randn(e_md, rng)}, int64_t(out_rows) * d, rng,
                     [idx, out_rows](Graph& g, const std::vector<Tensor>& t) {
                         return g.scatter_add_rows(t[0], idx, out_rows);
                     });
        }
        add_case(cases, "scale_rows", {md, {m}}, {safe_randn(e_md, rng), safe_randn(m, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.scale_rows(t[0], t[1]); });
        add_case(cases, "rowwise_dot", {md, md}, {safe_randn(e_md, rng), safe_randn(e_md, rng)}, m, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.rowwise_dot(t[0], t[1]); });
        add_case(cases, "rowwise_norm", {md}, {safe_randn(e_md, rng, 0.05)}, m, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.rowwise_norm(t[0]); });
        add_case(cases, "rowwise_div", {md, {m}}, {safe_randn(e_md, rng), positive_randn(m, rng)}, e_md, rng,
                 [](Graph& g, const std::vector<Tensor>& t) { return g.rowwise_div(t[0], t[1]); });
        {
            Shape m3{m, 3};
            add_case(cases, "cross_rows", {m3, m3}, {safe_randn(3 * m, rng), safe_randn(3 * m, rng)}, 3 * m, rng,
                     [](Graph& g, const std::vector<Tensor>& t) { return g.cross_rows(t[0], t[1]); });
            std::vector<Mat3> rots;
            Rng rr(rng.bits());
            for (int i = 0; i < m; i++) rots.push_back(random_rotation(rr));
            bool tr = rng.uniform() < 0.5;
            add_case(cases, "rowwise_rot3", {m3}, {safe_randn(3 * m, rng)}, 3 * m, rng,
                     [rots, tr](Graph& g, const std::vector<Tensor>& t) { return g.rowwise_rot3(t[0], rots, tr); });
        }
        {
            std::vector<int> segs(m + 3);
            int cur = 0;
            for (int& s : segs) {
                s = cur;
                if (rng.uniform() < 0.4) cur++;
            }
            add_case(cases, "segment_softmax", {{int(segs.size())}}, {safe_randn(int64_t(segs.size()), rng)},
                     int64_t(segs.size()), rng,
                     [segs](Graph& g, const std::vector<Tensor>& t) { return g.segment_softmax(t[0], segs); });
        }
    }
    return cases;
}

}  // namespace

CheckResult check_op_gradients(int shapes_per_op, double tol) {
    Rng rng(105);
    std::vector<OpCase> cases = make_op_cases(shapes_per_op, rng);
    double worst = 0.0;
    std::string worst_name;
    for (const OpCase& c : cases) {
        double err = gradcheck(c.build, c.shapes, c.inputs, 1e-6);
        if (err > worst) {
            worst = err;
            worst_name = c.name;
        }
    }
    return {"primitive_op_gradients", worst < tol, worst, tol, "worst op: " + worst_name};
}

// ---- tiny scene -------------------------------------------------------------

SequenceData make_tiny_two_patch_sequence() {
    SceneConfig cfg;
    LayerSpec inner;
    inner.nx = 2;
    inner.ny = 2;
    inner.spacing = 0.4;
    inner.center = Vec3(0, 0, 0.50);
    inner.attrs = {0.5, 0.5, 0.5, 0.5, 0};
    LayerSpec outer;
    outer.nx = 2;
    outer.ny = 2;
    outer.spacing = 0.5;
    outer.center = Vec3(0, 0, 0.53);
    outer.attrs = {0.4, 0.3, 0.4, 0.3, 1};
    cfg.layers = {inner, outer};
    cfg.frames = 5;
    cfg.substeps = 4;
    cfg.patch_size = 2;
    RigidShape sphere;
    sphere.kind = RigidShape::Sphere;
    sphere.radius = 0.22;
    cfg.body_shapes = {sphere};
    cfg.body_motion.start = Vec3(0, 0, 0.1);
    cfg.body_motion.linear_velocity = Vec3(0.2, 0, 0.5);
    cfg.body_samples = 4;
    cfg.randomize_wind = false;
    WindInterval iv;
    iv.start = 0;
    iv.length = 5;
    iv.wind.quaternion = Quat{std::sqrt(0.5), std::sqrt(0.5), 0, 0};
    iv.wind.strength = 1.5;
    cfg.wind_intervals = {iv};
    return generate_sequence(cfg, 77);
}

SimulatorConfig tiny_model_config() {
    SimulatorConfig cfg;
    cfg.history = 1;
    cfg.layer_count = 2;
    cfg.hidden = 8;
    cfg.patch_size = 2;
    cfg.dt = 1.0 / 30.0;
    return cfg;
}

CheckResult check_full_loss_gradient(double tol) {
    SequenceData seq = make_tiny_two_patch_sequence();
    SimulatorConfig cfg = tiny_model_config();
    ModelParams params = ModelParams::init(cfg, 42);
    LossConfig loss_cfg;
    loss_cfg.d_eps = seq.eps_garment;

    std::vector<std::string> names;
    std::vector<Shape> shapes;
    std::vector<std::vector<double>> inputs;
    for (const auto& [name, shape] : params.shapes) {
        names.push_back(name);
        shapes.push_back(shape);
        inputs.push_back(params.values.at(name));
    }

    const int t = 2;
    auto build = [&](Graph& g, const std::vector<Tensor>& leaves) {
        ParamTensors pt;
        for (size_t i = 0; i < names.size(); i++) pt.t.emplace(names[i], leaves[i]);
        Rng rng(1234);
        StepInput in = make_step_input(seq, t, cfg.history);
        StepPrediction pred = forward_step(g, pt, cfg, in, rng);
        StepLoss loss = build_step_loss(g, pred, seq, t, loss_cfg);
        return loss.total;
    };

    double err = gradcheck(build, shapes, inputs, 1e-5);
    return {"full_step_loss_gradient", err < tol, err, tol, ""};
}

std::vector<std::pair<std::string, double>> per_block_gradcheck() {
    SequenceData seq = make_tiny_two_patch_sequence();
    SimulatorConfig cfg = tiny_model_config();
    ModelParams params = ModelParams::init(cfg, 42);
    LossConfig loss_cfg;
    loss_cfg.d_eps = seq.eps_garment;

    std::vector<std::string> names;
    for (const auto& [name, shape] : params.shapes) names.push_back(name);
    const int t = 2;

    std::vector<std::pair<std::string, double>> out;
    for (const std::string& block : names) {
        auto build = [&](Graph& g, const std::vector<Tensor>& leaves) {
            ParamTensors pt;
            for (const std::string& name : names) {
                if (name == block)
                    pt.t.emplace(name, leaves[0]);
                else
                    pt.t.emplace(name, g.constant(params.shapes.at(name), params.values.at(name)));
            }
            Rng rng(1234);
            StepInput in = make_step_input(seq, t, cfg.history);
            StepPrediction pred = forward_step(g, pt, cfg, in, rng);
            return build_step_loss(g, pred, seq, t, loss_cfg).total;
        };
        double err = gradcheck(build, {params.shapes.at(block)}, {params.values.at(block)}, 1e-5);
        out.emplace_back(block, err);
    }
    return out;
}

// ---- oracle properties -------------------------------------------------------

CheckResult check_com_ballistic(int steps) {
    SceneConfig cfg;
    LayerSpec layer;
    layer.nx = 8;
    layer.ny = 8;
    layer.spacing = 1.0 / 7.0;
    layer.center = Vec3(0, 0, 10.0);
    cfg.layers = {layer};
    cfg.damping = 0.0;
    cfg.randomize_wind = false;
    cfg.max_wind_intervals = 0;

    SceneRuntime scene = build_scene(cfg);
    OracleState st = initial_state(scene);
    Rng rng(7);
    for (auto& p : st.positions[0]) p.z += 0.01 * rng.normal();  // engage the springs
    for (auto& v : st.velocities[0]) v = Vec3(0.1 * rng.normal(), 0.1 * rng.normal(), 0.1 * rng.normal());

    int n = int(st.positions[0].size());
    Vec3 com0, vel0;
    for (const Vec3& p : st.positions[0]) com0 += p;
    for (const Vec3& v : st.velocities[0]) vel0 += v;
    com0 = com0 / double(n);
    vel0 = vel0 / double(n);

    double dt = cfg.dt / cfg.substeps;
    WindState calm;
    for (int s = 0; s < steps; s++) step_oracle(scene, st, calm, s * dt, dt);

    Vec3 com;
    for (const Vec3& p : st.positions[0]) com += p;
    com = com / double(n);

    // closed-form semi-implicit recurrence
    double k = double(steps);
    Vec3 expect = com0 + vel0 * (k * dt) + cfg.gravity * (dt * dt * k * (k + 1.0) / 2.0);
    double err = (com - expect).norm();
    return {"com_ballistic_exactness", err < 1e-9, err, 1e-9, ""};
}

CheckResult check_body_penetration() {
    SceneConfig cfg;
    LayerSpec inner;
    inner.spacing = 1.0 / 7.0;
    inner.center = Vec3(0, 0, 0.55);
    LayerSpec outer;
    outer.spacing = 1.2 / 7.0;
    outer.center = Vec3(0, 0, 0.58);
    outer.attrs = {0.4, 0.3, 0.4, 0.3, 1};
    cfg.layers = {inner, outer};
    cfg.frames = 40;
    RigidShape sphere;
    sphere.radius = 0.25;
    cfg.body_shapes = {sphere};
    cfg.body_motion.linear_velocity = Vec3(0.05, 0, 0);
    cfg.body_motion.oscillation_axis = Vec3(1, 0, 0);
    cfg.body_motion.oscillation_amplitude = 0.12;
    cfg.body_motion.oscillation_period = 1.5;
    cfg.randomize_wind = false;
    WindInterval iv;
    iv.start = 10;
    iv.length = 15;
    iv.wind.quaternion = Quat{std::sqrt(0.5), std::sqrt(0.5), 0, 0};
    iv.wind.strength = 2.0;
    cfg.wind_intervals = {iv};

    SequenceData seq = generate_sequence(cfg, 5);
    double worst = 1e300;
    for (int t = 1; t < seq.frame_count(); t++) {
        for (const Vec3& p : seq.garment_positions[t]) {
            double sd = seq.body.signed_distance(p, t, nullptr);
            worst = std::min(worst, sd);
        }
    }
    double margin = seq.eps_body - 1e-9;
    return {"post_step_body_penetration", worst >= margin, worst, margin, "min signed distance vs eps-1e-9"};
}

CheckResult check_generation_determinism() {
    SceneConfig cfg;
    LayerSpec inner;
    inner.center = Vec3(0, 0, 0.55);
    LayerSpec outer;
    outer.spacing = 1.2 / 7.0;
    outer.center = Vec3(0, 0, 0.58);
    cfg.layers = {inner, outer};
    cfg.frames = 12;
    RigidShape sphere;
    sphere.radius = 0.25;
    cfg.body_shapes = {sphere};
    cfg.body_samples = 64;

    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "layersim_verify";
    fs::create_directories(dir);
    std::string p1 = (dir / "a.lseq").string(), p2 = (dir / "b.lseq").string();
    write_lseq(p1, generate_sequence(cfg, 99));
    write_lseq(p2, generate_sequence(cfg, 99));

    auto slurp = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    };
    bool same = slurp(p1) == slurp(p2);
    fs::remove(p1);
    fs::remove(p2);
    return {"generation_determinism", same, same ? 0.0 : 1.0, 0.5, "byte-identical regeneration"};
}

CheckResult check_world_edges(int configs, int points) {
    Rng rng(106);
    bool all_equal = true;
    for (int c = 0; c < configs; c++) {
        double radius = 0.05 + 0.25 * rng.uniform();
        std::vector<Vec3> pts(points);
        for (auto& p : pts) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform());

        EdgeSet exclusions;
        int nex = int(rng.uniform_index(50));
        for (int e = 0; e < nex; e++) {
            int i = int(rng.uniform_index(uint64_t(points)));
            int j = int(rng.uniform_index(uint64_t(points)));
            if (i != j) {
                exclusions.add(i, j, EdgeKind::Mesh);
                exclusions.add(j, i, EdgeKind::Mesh);
            }
        }
        EdgeKeySet keys(exclusions);

        auto as_pairs = [](const EdgeSet& e) {
            std::vector<std::pair<int, int>> v;
            for (size_t i = 0; i < e.size(); i++) v.emplace_back(e.receivers[i], e.senders[i]);
            std::sort(v.begin(), v.end());
            return v;
        };
        if (as_pairs(world_edges_self(pts, radius, keys)) !=
            as_pairs(ref::world_edges_self_bruteforce(pts, radius, keys)))
            all_equal = false;

        // bipartite flavor on split halves
        std::vector<Vec3> recv(pts.begin(), pts.begin() + points / 2);
        std::vector<Vec3> send(pts.begin() + points / 2, pts.end());
        if (as_pairs(world_edges_bipartite(recv, send, radius)) !=
            as_pairs(ref::world_edges_bipartite_bruteforce(recv, send, radius)))
            all_equal = false;
    }
    return {"world_edges_vs_bruteforce", all_equal, all_equal ? 0.0 : 1.0, 0.5, "exact set equality"};
}

// ---- translation invariance ---------------------------------------------------

double translation_invariance_error(const ModelParams& params, const SequenceData& seq, int t,
                                    uint64_t rng_seed) {
    const SimulatorConfig& cfg = params.config;
    Vec3 shift(1, 1, 1);

    StepInput in = make_step_input(seq, t, cfg.history);
    StepInput in_shifted = in;
    for (auto& frame : in_shifted.x_hist)
        for (auto& p : frame) p += shift;
    for (auto& frame : in_shifted.body_pos)
        for (auto& p : frame) p += shift;

    Graph g1, g2;
    ParamTensors pt1 = make_param_tensors(g1, params, false);
    ParamTensors pt2 = make_param_tensors(g2, params, false);
    Rng r1(rng_seed), r2(rng_seed);
    StepPrediction p1 = forward_step(g1, pt1, cfg, in, r1);
    StepPrediction p2 = forward_step(g2, pt2, cfg, in_shifted, r2);

    double worst = 0.0;
    for (size_t i = 0; i < p1.positions.size(); i++) {
        Vec3 d1 = p1.positions[i] - in.x_hist[0][i];
        Vec3 d2 = p2.positions[i] - in_shifted.x_hist[0][i];
        worst = std::max(worst, (d1 - d2).norm());
    }
    return worst;
}

CheckResult check_translation_invariance() {
    SequenceData seq = make_tiny_two_patch_sequence();
    ModelParams params = ModelParams::init(tiny_model_config(), 42);
    double err = translation_invariance_error(params, seq, 2, 9);
    return {"translation_invariance", err < 1e-9, err, 1e-9, "displacement difference under +(1,1,1)"};
}

std::vector<CheckResult> run_property_suite() {
    std::vector<CheckResult> out;
    out.push_back(check_edge_feature_equivariance());
    out.push_back(check_attention_weight_invariance());
    out.push_back(check_lift_homomorphism());
    out.push_back(check_edge_feature_identity());
    out.push_back(check_world_edges());
    out.push_back(check_com_ballistic());
    out.push_back(check_body_penetration());
    out.push_back(check_generation_determinism());
    out.push_back(check_op_gradients());
    out.push_back(check_full_loss_gradient());
    out.push_back(check_translation_invariance());
    return out;
}

}  // namespace layersim
