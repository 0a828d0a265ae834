#include "layersim/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "layersim/patch.hpp"
#include "layersim/spatial_hash.hpp"

namespace layersim {

void LossConfig::validate() const {
    if (lambda_m < 0 || lambda_n < 0 || lambda_b < 0 || lambda_g < 0)
        throw std::invalid_argument("loss: weights must be >= 0");
    if (d_eps <= 0) throw std::invalid_argument("loss: d_eps must be positive");
}

// ---- plain losses -------------------------------------------------------

double loss_mse_plain(const std::vector<Vec3>& pred, const std::vector<Vec3>& truth,
                      const std::vector<Vec3>& pred_centers, const std::vector<Vec3>& truth_centers) {
    if (pred.size() != truth.size() || pred_centers.size() != truth_centers.size())
        throw std::invalid_argument("loss_mse: length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); i++) acc += (pred[i] - truth[i]).norm2();
    double out = pred.empty() ? 0.0 : acc / double(pred.size());
    acc = 0.0;
    for (size_t i = 0; i < pred_centers.size(); i++) acc += (pred_centers[i] - truth_centers[i]).norm2();
    out += pred_centers.empty() ? 0.0 : acc / double(pred_centers.size());
    return out;
}

double loss_normal_plain(const std::vector<Vec3>& pred, const std::vector<Vec3>& truth,
                         const MeshTopology& topo) {
    VertexNormals np = vertex_normals(topo, pred);
    VertexNormals nt = vertex_normals(topo, truth);
    double acc = 0.0;
    for (int i = 0; i < topo.vertex_count; i++) acc += (np.normals[i] - nt.normals[i]).norm2();
    return acc / double(topo.vertex_count);
}

double loss_collision_plain(const std::vector<Vec3>& queries, const std::vector<Vec3>& anchors,
                            const std::vector<Vec3>& anchor_normals, double d_eps) {
    if (anchors.empty()) throw std::invalid_argument("loss_collision: anchors must be nonempty");
    std::vector<int> nearest = nearest_anchors(queries, anchors);
    double acc = 0.0;
    int colliding = 0;
    for (size_t i = 0; i < queries.size(); i++) {
        int a = nearest[i];
        double pen = d_eps - (queries[i] - anchors[a]).dot(anchor_normals[a]);
        if (pen > 0.0) {
            acc += pen * pen;
            colliding++;
        }
    }
    return colliding > 0 ? acc / double(colliding) : 0.0;
}

double total_loss_plain(double mse, double normal, double coll_body, double coll_garment,
                        const LossConfig& cfg) {
    cfg.validate();
    const char* names[4] = {"mse", "normal", "collision_body", "collision_garment"};
    double vals[4] = {mse, normal, coll_body, coll_garment};
    for (int i = 0; i < 4; i++)
        if (std::isnan(vals[i])) throw std::invalid_argument(std::string("total_loss: NaN component ") + names[i]);
    return cfg.lambda_m * mse + cfg.lambda_n * normal + cfg.lambda_b * coll_body + cfg.lambda_g * coll_garment;
}

// ---- graph losses ---------------------------------------------------------

namespace {

std::vector<double> flatten(const std::vector<Vec3>& v) {
    std::vector<double> out(v.size() * 3);
    for (size_t i = 0; i < v.size(); i++) {
        out[3 * i] = v[i].x;
        out[3 * i + 1] = v[i].y;
        out[3 * i + 2] = v[i].z;
    }
    return out;
}

// differentiable area-weighted vertex normals over all garment layers at once
Tensor normals_in_graph(Graph& g, Tensor positions, const SequenceData& seq) {
    std::vector<int> fa, fb, fc;
    for (int l = 0; l < seq.layer_count(); l++) {
        int off = seq.layer_offset(l);
        for (const auto& f : seq.layers[l].topology.faces) {
            fa.push_back(off + f[0]);
            fb.push_back(off + f[1]);
            fc.push_back(off + f[2]);
        }
    }
    int n = seq.total_vertex_count();
    Tensor a = g.gather_rows(positions, fa);
    Tensor b = g.gather_rows(positions, fb);
    Tensor c = g.gather_rows(positions, fc);
    Tensor fn = g.cross_rows(g.sub(b, a), g.sub(c, a));
    Tensor acc = g.add(g.scatter_add_rows(fn, fa, n),
                       g.add(g.scatter_add_rows(fn, fb, n), g.scatter_add_rows(fn, fc, n)));
    return g.rowwise_div(acc, g.rowwise_norm(acc));
}

// mean squared Euclidean norm over rows: sum of squares / rows
Tensor mean_sq_rows(Graph& g, Tensor diff, int rows) {
    return g.scale_const(g.sum(g.mul(diff, diff)), 1.0 / double(std::max(1, rows)));
}

Tensor patch_centers_in_graph(Graph& g, Tensor positions, const SequenceData& seq) {
    std::vector<int> vertex_to_patch(seq.total_vertex_count());
    std::vector<double> counts;
    int base = 0;
    for (int l = 0; l < seq.layer_count(); l++) {
        const PatchGraph& pg = seq.patches[l];
        int off = seq.layer_offset(l);
        for (int v = 0; v < int(pg.vertex_patch.size()); v++) vertex_to_patch[off + v] = base + pg.vertex_patch[v];
        for (int p = 0; p < pg.patch_count(); p++) counts.push_back(double(pg.patch_vertices[p].size()));
        base += pg.patch_count();
    }
    Tensor sums = g.scatter_add_rows(positions, vertex_to_patch, base);
    return g.rowwise_div(sums, g.constant({base}, counts));
}

// max(d_eps - (x - x_a) . n_a, 0)^2 averaged over positive entries
Tensor collision_penalty(Graph& g, Tensor queries, Tensor anchor_pos, Tensor anchor_normals, double d_eps,
                         int* colliding_out) {
    int n = queries.shape()[0];
    Tensor margin = g.rowwise_dot(g.sub(queries, anchor_pos), anchor_normals);
    Tensor pen = g.relu(g.sub(g.constant({n}, std::vector<double>(n, d_eps)), margin));
    int colliding = 0;
    for (double v : pen.value())
        if (v > 0.0) colliding++;
    if (colliding_out) *colliding_out = colliding;
    if (colliding == 0) return g.constant(Shape{}, {0.0});
    return g.scale_const(g.sum(g.mul(pen, pen)), 1.0 / double(colliding));
}

}  // namespace

StepLoss build_step_loss(Graph& g, const StepPrediction& pred, const SequenceData& seq, int t,
                         const LossConfig& cfg) {
    cfg.validate();
    int n = seq.total_vertex_count();
    const std::vector<Vec3>& truth = seq.garment_positions.at(t + 1);
    Tensor truth_t = g.constant({n, 3}, flatten(truth));

    // vertex + patch-center MSE
    Tensor l_m = g.add(mean_sq_rows(g, g.sub(pred.tensor, truth_t), n),
                       mean_sq_rows(g, g.sub(patch_centers_in_graph(g, pred.tensor, seq),
                                             patch_centers_in_graph(g, truth_t, seq)),
                                    pred.tokens.patch_tokens));

    // vertex normal consistency
    Tensor n_pred = normals_in_graph(g, pred.tensor, seq);
    Tensor n_truth = normals_in_graph(g, truth_t, seq);
    Tensor l_n = mean_sq_rows(g, g.sub(n_pred, n_truth), n);

    // collision against the true body surface at t+1
    Tensor l_cb = g.constant(Shape{}, {0.0});
    const auto& body = seq.body_samples.at(t + 1);
    if (!body.empty()) {
        std::vector<Vec3> anchor_pos_v(body.size()), anchor_nrm_v(body.size());
        for (size_t b = 0; b < body.size(); b++) {
            anchor_pos_v[b] = body[b].position;
            anchor_nrm_v[b] = body[b].normal;
        }
        std::vector<int> nearest = nearest_anchors(pred.positions, anchor_pos_v);
        std::vector<Vec3> per_query_pos(n), per_query_nrm(n);
        for (int i = 0; i < n; i++) {
            per_query_pos[i] = anchor_pos_v[nearest[i]];
            per_query_nrm[i] = anchor_nrm_v[nearest[i]];
        }
        l_cb = collision_penalty(g, pred.tensor, g.constant({n, 3}, flatten(per_query_pos)),
                                 g.constant({n, 3}, flatten(per_query_nrm)), cfg.d_eps, nullptr);
    }

    // collision between predicted layers: outer queries vs inner anchors
    Tensor l_cg = g.constant(Shape{}, {0.0});
    if (seq.layer_count() == 2) {
        int n0 = seq.layer_vertex_count(0);
        int n1 = seq.layer_vertex_count(1);
        std::vector<Vec3> inner(pred.positions.begin(), pred.positions.begin() + n0);
        std::vector<Vec3> outer(pred.positions.begin() + n0, pred.positions.end());
        std::vector<int> nearest = nearest_anchors(outer, inner);
        std::vector<int> outer_rows(n1), anchor_rows(n1);
        for (int i = 0; i < n1; i++) {
            outer_rows[i] = n0 + i;
            anchor_rows[i] = nearest[i];
        }
        Tensor q = g.gather_rows(pred.tensor, outer_rows);
        Tensor a_pos = g.gather_rows(pred.tensor, anchor_rows);
        Tensor a_nrm = g.gather_rows(n_pred, anchor_rows);
        l_cg = collision_penalty(g, q, a_pos, a_nrm, cfg.d_eps, nullptr);
    }

    StepLoss out;
    out.mse = l_m.scalar();
    out.normal = l_n.scalar();
    out.coll_body = l_cb.scalar();
    out.coll_garment = l_cg.scalar();
    const char* names[4] = {"mse", "normal", "collision_body", "collision_garment"};
    double vals[4] = {out.mse, out.normal, out.coll_body, out.coll_garment};
    for (int i = 0; i < 4; i++)
        if (std::isnan(vals[i])) throw std::runtime_error(std::string("build_step_loss: NaN component ") + names[i]);

    out.total = g.add(g.add(g.scale_const(l_m, cfg.lambda_m), g.scale_const(l_n, cfg.lambda_n)),
                      g.add(g.scale_const(l_cb, cfg.lambda_b), g.scale_const(l_cg, cfg.lambda_g)));
    out.value = out.total.scalar();
    return out;
}

// ---- Adam -----------------------------------------------------------------

void Adam::update(ModelParams& params, const std::map<std::string, std::vector<double>>& grads) {
    steps_++;
    double bc1 = 1.0 - std::pow(beta1_, double(steps_));
    double bc2 = 1.0 - std::pow(beta2_, double(steps_));
    for (auto& [name, value] : params.values) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const std::vector<double>& grad = git->second;
        std::vector<double>& m = m_[name];
        std::vector<double>& v = v_[name];
        m.resize(value.size(), 0.0);
        v.resize(value.size(), 0.0);
        for (size_t i = 0; i < value.size(); i++) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

// ---- training -------------------------------------------------------------

namespace {

// gradient-free self-rollout producing the (noisy) history window at time t
std::vector<std::vector<Vec3>> noisy_history(const ModelParams& params, const SequenceData& seq, int t,
                                             int noise_steps, Rng& rng) {
    const SimulatorConfig& cfg = params.config;
    int start = t - noise_steps;
    std::vector<std::vector<Vec3>> hist;
    for (int i = 0; i <= cfg.history + 1; i++) hist.push_back(seq.garment_positions.at(start - i));
    for (int s = 0; s < noise_steps; s++) {
        StepInput in = make_step_input(seq, start + s, cfg.history, &hist);
        Graph g;
        ParamTensors pt = make_param_tensors(g, params, false);
        StepPrediction pred = forward_step(g, pt, cfg, in, rng);
        bool sane = true;
        for (const Vec3& p : pred.positions)
            if (!p.finite() || std::abs(p.x) > 1e3 || std::abs(p.y) > 1e3 || std::abs(p.z) > 1e3) sane = false;
        if (!sane) {  // fall back to clean history rather than training on garbage
            hist.clear();
            for (int i = 0; i <= cfg.history + 1; i++) hist.push_back(seq.garment_positions.at(start + s + 1 - i));
            continue;
        }
        hist.insert(hist.begin(), pred.positions);
        hist.pop_back();
    }
    return hist;
}

struct GradAccumulator {
    std::map<std::string, std::vector<double>> sums;
    int count = 0;

    void add(const ModelParams& params, const ParamTensors& pt) {
        for (const auto& [name, tensor] : pt.t) {
            const auto& grad = tensor.grad();
            auto& slot = sums[name];
            slot.resize(grad.size(), 0.0);
            for (size_t i = 0; i < grad.size(); i++) slot[i] += grad[i];
        }
        count++;
        (void)params;
    }

    std::map<std::string, std::vector<double>> mean() const {
        std::map<std::string, std::vector<double>> out = sums;
        for (auto& [name, v] : out)
            for (double& x : v) x /= double(std::max(1, count));
        return out;
    }
};

StepLoss supervised_step(const ModelParams& params, const SequenceData& seq, int t,
                         const LossConfig& loss_cfg, int noise_budget, Rng& rng, Graph& g,
                         ParamTensors& pt) {
    const SimulatorConfig& cfg = params.config;
    int tn = noise_budget > 0 ? int(rng.uniform_index(uint64_t(noise_budget) + 1)) : 0;
    std::vector<std::vector<Vec3>> hist;
    if (tn > 0)
        hist = noisy_history(params, seq, t, tn, rng);
    else
        for (int i = 0; i <= cfg.history + 1; i++) hist.push_back(seq.garment_positions.at(t - i));

    StepInput in = make_step_input(seq, t, cfg.history, &hist);
    pt = make_param_tensors(g, params, true);
    StepPrediction pred = forward_step(g, pt, cfg, in, rng);
    StepLoss loss = build_step_loss(g, pred, seq, t, loss_cfg);
    g.backward(loss.total);
    return loss;
}

}  // namespace

StepLoss train_step(ModelParams& params, Adam& adam, const SequenceData& seq, int t,
                    const TrainConfig& cfg, Rng& rng) {
    Graph g;
    ParamTensors pt;
    StepLoss loss = supervised_step(params, seq, t, cfg.loss, cfg.noise_steps, rng, g, pt);
    GradAccumulator acc;
    acc.add(params, pt);
    adam.update(params, acc.mean());
    return loss;
}

TrainResult train(const SimulatorConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::vector<SequenceData>& data) {
    if (data.empty()) throw std::invalid_argument("train: no training sequences");
    train_cfg.loss.validate();

    TrainResult result;
    result.params = ModelParams::init(model_cfg, train_cfg.seed);
    Adam adam(train_cfg.learning_rate);
    Rng rng(mix_seed(train_cfg.seed, 0x7261696eull));

    // all (sequence, t) samples with room for history and the noise rollout
    std::vector<std::pair<int, int>> samples;
    for (int s = 0; s < int(data.size()); s++) {
        int lo = model_cfg.history + 1 + train_cfg.noise_steps;
        int hi = data[s].frame_count() - 2;
        for (int t = lo; t <= hi; t++) samples.emplace_back(s, t);
    }
    if (samples.empty()) throw std::invalid_argument("train: sequences too short for the configured history");

    auto t_start = std::chrono::steady_clock::now();
    int step = 0;
    bool done = false;
    for (int epoch = 0; epoch < train_cfg.epochs && !done; epoch++) {
        // deterministic shuffle
        std::vector<int> order(samples.size());
        std::iota(order.begin(), order.end(), 0);
        for (int i = int(order.size()) - 1; i > 0; i--)
            std::swap(order[i], order[rng.uniform_index(uint64_t(i) + 1)]);

        for (size_t pos = 0; pos < order.size() && !done;) {
            GradAccumulator acc;
            StepLoss last;
            int in_batch = 0;
            for (; in_batch < train_cfg.batch_size && pos < order.size(); in_batch++, pos++) {
                auto [s, t] = samples[order[pos]];
                Graph g;
                ParamTensors pt;
                last = supervised_step(result.params, data[s], t, train_cfg.loss, train_cfg.noise_steps, rng, g, pt);
                acc.add(result.params, pt);
            }
            adam.update(result.params, acc.mean());
            step++;

            TrainLogRow row;
            row.step = step;
            row.total = last.value;
            row.mse = last.mse;
            row.normal = last.normal;
            row.coll_body = last.coll_body;
            row.coll_garment = last.coll_garment;
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
            result.log.push_back(row);

            if (train_cfg.max_steps > 0 && step >= train_cfg.max_steps) done = true;
        }
    }
    return result;
}

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_train_log_csv: cannot open " + path);
    os << "step,total,mse,normal,coll_body,coll_garment,seconds\n";
    for (const auto& r : log)
        os << r.step << "," << r.total << "," << r.mse << "," << r.normal << "," << r.coll_body << ","
           << r.coll_garment << "," << r.seconds << "\n";
}

}  // namespace layersim
