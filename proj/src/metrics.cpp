#include "layersim/metrics.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "layersim/spatial_hash.hpp"

namespace layersim {

double euclidean_error(const std::vector<std::vector<Vec3>>& pred,
                       const std::vector<std::vector<Vec3>>& truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("euclidean_error: frame count mismatch");
    if (pred.empty()) return 0.0;
    double frame_acc = 0.0;
    for (size_t t = 0; t < pred.size(); t++) {
        if (pred[t].size() != truth[t].size()) throw std::invalid_argument("euclidean_error: vertex count mismatch");
        double acc = 0.0;
        for (size_t i = 0; i < pred[t].size(); i++) acc += (pred[t][i] - truth[t][i]).norm();
        frame_acc += acc / double(pred[t].size());
    }
    return frame_acc / double(pred.size());
}

double collision_rate_body(const std::vector<std::vector<Vec3>>& garment_frames,
                           const std::vector<std::vector<SurfaceSample>>& body_frames, double d_pen) {
    if (garment_frames.size() != body_frames.size())
        throw std::invalid_argument("collision_rate_body: frame count mismatch");
    int64_t colliding = 0, total = 0;
    for (size_t t = 0; t < garment_frames.size(); t++) {
        const auto& body = body_frames[t];
        if (body.empty()) continue;
        std::vector<Vec3> anchors(body.size());
        for (size_t b = 0; b < body.size(); b++) anchors[b] = body[b].position;
        std::vector<int> nearest = nearest_anchors(garment_frames[t], anchors);
        for (size_t i = 0; i < garment_frames[t].size(); i++) {
            const SurfaceSample& a = body[nearest[i]];
            if ((garment_frames[t][i] - a.position).dot(a.normal) < d_pen) colliding++;
            total++;
        }
    }
    return total > 0 ? 100.0 * double(colliding) / double(total) : 0.0;
}

double collision_rate_garment(const std::vector<std::vector<Vec3>>& inner_frames,
                              const std::vector<std::vector<Vec3>>& outer_frames,
                              const MeshTopology& inner_topo, double d_pen, double anchor_radius) {
    if (inner_frames.size() != outer_frames.size())
        throw std::invalid_argument("collision_rate_garment: frame count mismatch");
    int64_t colliding = 0, total = 0;
    for (size_t t = 0; t < inner_frames.size(); t++) {
        VertexNormals vn = vertex_normals(inner_topo, inner_frames[t]);
        std::vector<int> nearest = nearest_anchors_within(outer_frames[t], inner_frames[t], anchor_radius);
        for (size_t o = 0; o < outer_frames[t].size(); o++) {
            total++;
            int a = nearest[o];
            if (a < 0) continue;
            if ((outer_frames[t][o] - inner_frames[t][a]).dot(vn.normals[a]) < d_pen) colliding++;
        }
    }
    return total > 0 ? 100.0 * double(colliding) / double(total) : 0.0;
}

double EvalReport::mean_euclid() const {
    double acc = 0.0;
    for (const auto& r : rows) acc += r.euclid_err_m;
    return rows.empty() ? 0.0 : acc / double(rows.size());
}
double EvalReport::mean_coll_body() const {
    double acc = 0.0;
    for (const auto& r : rows) acc += r.coll_body_pct;
    return rows.empty() ? 0.0 : acc / double(rows.size());
}
double EvalReport::mean_coll_garment() const {
    double acc = 0.0;
    for (const auto& r : rows) acc += r.coll_garment_pct;
    return rows.empty() ? 0.0 : acc / double(rows.size());
}

EvalRow evaluate_sequence(const ModelParams& params, const SequenceData& seq, const std::string& id,
                          uint64_t rng_seed) {
    int t0 = params.config.history + 1;
    int steps = seq.frame_count() - 1 - t0;
    if (steps <= 0) throw std::invalid_argument("evaluate_sequence: sequence too short");

    RolloutResult rr = rollout(params, seq, t0, steps, rng_seed);
    EvalRow row;
    row.id = id;
    row.diverged_at = rr.diverged_at;

    int got = int(rr.frames.size());
    std::vector<std::vector<Vec3>> truth;
    std::vector<std::vector<SurfaceSample>> body;
    for (int s = 0; s < got; s++) {
        truth.push_back(seq.garment_positions.at(t0 + 1 + s));
        body.push_back(seq.body_samples.at(t0 + 1 + s));
    }
    if (got == 0) {
        row.euclid_err_m = std::numeric_limits<double>::infinity();
        return row;
    }
    row.euclid_err_m = euclidean_error(rr.frames, truth);
    row.coll_body_pct = collision_rate_body(rr.frames, body, 0.0);
    if (seq.layer_count() == 2) {
        int n0 = seq.layer_vertex_count(0);
        std::vector<std::vector<Vec3>> inner, outer;
        for (const auto& f : rr.frames) {
            inner.emplace_back(f.begin(), f.begin() + n0);
            outer.emplace_back(f.begin() + n0, f.end());
        }
        row.coll_garment_pct =
            collision_rate_garment(inner, outer, seq.layers[0].topology, 0.0, 3.0 * seq.eps_garment);
    }
    return row;
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_eval_csv: cannot open " + path);
    os << "sequence_id,euclid_err_m,coll_body_pct,coll_garment_pct\n";
    for (const auto& r : report.rows)
        os << r.id << "," << r.euclid_err_m << "," << r.coll_body_pct << "," << r.coll_garment_pct << "\n";
}

}  // namespace layersim
