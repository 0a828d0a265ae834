#include "layersim/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "layersim/patch.hpp"
#include "layersim/spatial_hash.hpp"

#include <nlohmann/json.hpp>

namespace layersim {

using nlohmann::json;

void SimulatorConfig::validate() const {
    if (history < 1) throw std::invalid_argument("model: history must be >= 1");
    if (layer_count < 1) throw std::invalid_argument("model: layer_count must be >= 1");
    if (hidden < 4) throw std::invalid_argument("model: hidden width must be >= 4");
    if (patch_size < 1) throw std::invalid_argument("model: patch_size must be >= 1");
    if (dt <= 0.0) throw std::invalid_argument("model: dt must be positive");
}

// ---- parameters ---------------------------------------------------------

static std::map<std::string, Shape> parameter_shapes(const SimulatorConfig& cfg) {
    int d = cfg.hidden;
    std::map<std::string, Shape> s;
    s["embed.patch.w"] = {cfg.patch_feature_dim(), d};
    s["embed.patch.b"] = {d};
    s["embed.body.w"] = {cfg.body_feature_dim(), d};
    s["embed.body.b"] = {d};
    s["embed.wind.w"] = {4, d};
    s["embed.wind.b"] = {d};
    s["embed.gravity.w"] = {3, d};
    s["embed.gravity.b"] = {d};
    for (int l = 0; l < cfg.layer_count; l++) {
        std::string p = "layer" + std::to_string(l) + ".";
        s[p + "wq"] = {d, d};
        s[p + "wr"] = {d, d};
        s[p + "ws"] = {d, d};
        s[p + "rot_lift"] = {d, 3};
        s[p + "psi.w1"] = {d, d};
        s[p + "psi.b1"] = {d};
        s[p + "psi.w2"] = {d, d};
        s[p + "psi.b2"] = {d};
        s[p + "mlp.w1"] = {d, d};
        s[p + "mlp.b1"] = {d};
        s[p + "mlp.w2"] = {d, d};
        s[p + "mlp.b2"] = {d};
    }
    s["decoder.rot_lift"] = {d, 3};
    s["decoder.w1"] = {3 + 2 * d, d};
    s["decoder.b1"] = {d};
    s["decoder.w2"] = {d, d};
    s["decoder.b2"] = {d};
    s["decoder.w3"] = {d, d};
    s["decoder.b3"] = {d};
    s["decoder.w4"] = {d, 3};
    s["decoder.b4"] = {3};
    return s;
}

ModelParams ModelParams::init(const SimulatorConfig& config, uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    p.shapes = parameter_shapes(config);
    Rng rng(seed);
    for (const auto& [name, shape] : p.shapes) {
        std::vector<double> v(numel(shape));
        if (shape.size() == 1) {
            // biases start at zero
        } else {
            int fan_in = shape[0], fan_out = shape[1];
            double scale = name.find("rot_lift") != std::string::npos
                               ? 1.0
                               : std::sqrt(2.0 / double(fan_in + fan_out));
            for (double& x : v) x = scale * rng.normal();
        }
        p.values[name] = std::move(v);
    }
    return p;
}

int64_t ModelParams::total_parameters() const {
    int64_t n = 0;
    for (const auto& [name, shape] : shapes) n += numel(shape);
    return n;
}

// ---- checkpoint I/O -----------------------------------------------------

static json config_to_json(const SimulatorConfig& c) {
    return {{"history", c.history},         {"layer_count", c.layer_count},
            {"hidden", c.hidden},           {"patch_size", c.patch_size},
            {"radius_patch", c.radius_patch}, {"radius_body", c.radius_body},
            {"dt", c.dt},                   {"use_rotation_lift", c.use_rotation_lift}};
}

static SimulatorConfig config_from_json(const json& j) {
    SimulatorConfig c;
    c.history = j.at("history").get<int>();
    c.layer_count = j.at("layer_count").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.radius_patch = j.at("radius_patch").get<double>();
    c.radius_body = j.at("radius_body").get<double>();
    c.dt = j.at("dt").get<double>();
    c.use_rotation_lift = j.at("use_rotation_lift").get<bool>();
    return c;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
    json manifest = json::array();
    uint64_t offset = 0;
    for (const auto& [name, shape] : params.shapes) {
        manifest.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
        offset += uint64_t(numel(shape)) * 8;
    }
    json header = {{"config", config_to_json(params.config)}, {"tensors", manifest}};
    std::string header_str = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write("LNPK", 4);
    uint32_t version = 1;
    os.write(reinterpret_cast<const char*>(&version), 4);
    uint64_t header_len = header_str.size();
    os.write(reinterpret_cast<const char*>(&header_len), 8);
    os.write(header_str.data(), std::streamsize(header_str.size()));
    for (const auto& [name, shape] : params.shapes) {
        const auto& v = params.values.at(name);
        os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 8));
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4] = {};
    is.read(magic, 4);
    if (std::memcmp(magic, "LNPK", 4) != 0) throw std::runtime_error("load_checkpoint: bad magic in " + path);
    uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) throw std::runtime_error("load_checkpoint: unsupported version");
    uint64_t header_len = 0;
    is.read(reinterpret_cast<char*>(&header_len), 8);
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), std::streamsize(header_len));
    json header = json::parse(header_str);

    ModelParams p;
    p.config = config_from_json(header.at("config"));
    std::streampos blob_start = is.tellg();
    for (const auto& t : header.at("tensors")) {
        std::string name = t.at("name").get<std::string>();
        Shape shape = t.at("shape").get<Shape>();
        uint64_t offset = t.at("offset").get<uint64_t>();
        std::vector<double> v(numel(shape));
        is.seekg(blob_start + std::streampos(offset));
        is.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 8));
        p.shapes[name] = shape;
        p.values[name] = std::move(v);
    }
    if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return p;
}

// ---- step input -----------------------------------------------------------

StepInput make_step_input(const SequenceData& seq, int t, int history,
                          const std::vector<std::vector<Vec3>>* override_hist) {
    if (t + 1 >= seq.frame_count()) throw std::invalid_argument("make_step_input: no frame t+1 in sequence");
    if (t - history - 1 < 0) throw std::invalid_argument("make_step_input: not enough history before t");

    StepInput in;
    in.seq = &seq;
    in.dt = seq.dt;
    if (override_hist) {
        if (int(override_hist->size()) != history + 2)
            throw std::invalid_argument("make_step_input: override history must hold h+2 frames");
        in.x_hist = *override_hist;
    } else {
        for (int i = 0; i <= history + 1; i++) in.x_hist.push_back(seq.garment_positions.at(t - i));
    }
    for (int i = 0; i <= history + 1; i++) {
        int frame = std::max(0, t + 1 - i);
        const auto& samples = seq.body_samples.at(frame);
        std::vector<Vec3> pos(samples.size()), nrm(samples.size());
        for (size_t b = 0; b < samples.size(); b++) {
            pos[b] = samples[b].position;
            nrm[b] = samples[b].normal;
        }
        in.body_pos.push_back(std::move(pos));
        in.body_normals.push_back(std::move(nrm));
    }
    in.wind = seq.wind.at(t + 1);
    in.gravity = seq.gravity;
    return in;
}

// ---- encoding -------------------------------------------------------------

std::vector<double> edge_feature(const std::vector<double>& r, const std::vector<double>& s, bool* degenerate) {
    if (r.size() != s.size()) throw std::invalid_argument("edge_feature: dimension mismatch");
    double diff2 = 0.0;
    for (size_t i = 0; i < r.size(); i++) diff2 += (r[i] - s[i]) * (r[i] - s[i]);
    double denom = std::sqrt(diff2);
    bool degen = denom < 1e-12;
    if (degen) denom = 1e-12;
    if (degenerate) *degenerate = degen;
    std::vector<double> f(r.size());
    for (size_t i = 0; i < r.size(); i++) f[i] = (r[i] + s[i]) / denom;
    return f;
}

static double resolve_radius(double configured, const SequenceData& seq) {
    if (configured > 0.0) return configured;
    double diam = 0.0;
    for (size_t l = 0; l < seq.layers.size(); l++)
        diam = std::max(diam, patch_diameter(seq.patches[l], seq.layers[l].rest_positions));
    return 2.5 * diam;
}

TokenGraph encode_tokens(const StepInput& in, const SimulatorConfig& cfg, Rng& rng) {
    const SequenceData& seq = *in.seq;
    int h = cfg.history;
    if (int(in.x_hist.size()) < h + 2) throw std::invalid_argument("encode_tokens: missing garment history");
    if (int(in.body_pos.size()) < h + 2) throw std::invalid_argument("encode_tokens: missing body history");

    TokenGraph tg;
    int pfd = cfg.patch_feature_dim();

    // velocity history over all garment vertices, newest first
    int total_verts = seq.total_vertex_count();
    std::vector<std::vector<Vec3>> vel_hist(h + 1);
    for (int i = 0; i <= h; i++) {
        vel_hist[i].resize(total_verts);
        for (int v = 0; v < total_verts; v++)
            vel_hist[i][v] = (in.x_hist[i][v] - in.x_hist[i + 1][v]) / in.dt;
    }

    tg.patch_of_vertex.assign(total_verts, -1);
    for (int l = 0; l < seq.layer_count(); l++) {
        const PatchGraph& pg = seq.patches[l];
        const ClothLayer& layer = seq.layers[l];
        int off = seq.layer_offset(l);
        int patch_base = tg.patch_tokens;

        std::vector<Vec3> pos_l(in.x_hist[0].begin() + off, in.x_hist[0].begin() + off + layer.topology.vertex_count);
        VertexNormals vn = vertex_normals(layer.topology, pos_l);
        std::vector<Vec3> pn = patch_mean_normals(pg, vn.normals);
        std::vector<Vec3> centers = patch_centers(pos_l, pg);

        for (int p = 0; p < pg.patch_count(); p++) {
            for (int i = 0; i <= h; i++) {
                Vec3 pv;
                for (int v : pg.patch_vertices[p]) pv += vel_hist[i][off + v];
                pv = pv / double(pg.patch_vertices[p].size());
                tg.patch_features.push_back(pv.x);
                tg.patch_features.push_back(pv.y);
                tg.patch_features.push_back(pv.z);
            }
            tg.patch_features.push_back(pn[p].x);
            tg.patch_features.push_back(pn[p].y);
            tg.patch_features.push_back(pn[p].z);
            tg.patch_features.push_back(layer.attrs.mass_density);
            tg.patch_features.push_back(layer.attrs.bend_stiffness);
            tg.patch_features.push_back(layer.attrs.stretch_stiffness);
            tg.patch_features.push_back(layer.attrs.friction);
            tg.patch_features.push_back(double(layer.attrs.layer));
            tg.patch_centers.push_back(centers[p]);
            tg.patch_layer.push_back(l);
        }
        for (int v = 0; v < layer.topology.vertex_count; v++)
            tg.patch_of_vertex[off + v] = patch_base + pg.vertex_patch[v];
        tg.patch_tokens += pg.patch_count();
    }
    if (int(tg.patch_features.size()) != tg.patch_tokens * pfd)
        throw std::logic_error("encode_tokens: patch feature layout mismatch");

    // body tokens, features at t+1 with history
    int nb = int(in.body_pos[0].size());
    tg.body_tokens = nb;
    for (int b = 0; b < nb; b++) {
        for (int i = 0; i <= h; i++) {
            Vec3 v = (in.body_pos[i][b] - in.body_pos[i + 1][b]) / in.dt;
            tg.body_features.push_back(v.x);
            tg.body_features.push_back(v.y);
            tg.body_features.push_back(v.z);
        }
        tg.body_features.push_back(in.body_normals[0][b].x);
        tg.body_features.push_back(in.body_normals[0][b].y);
        tg.body_features.push_back(in.body_normals[0][b].z);
    }

    Vec3 wd = in.wind.direction();
    tg.wind_features = {wd.x, wd.y, wd.z, in.wind.strength};
    tg.gravity_features = {in.gravity.x, in.gravity.y, in.gravity.z};

    // edges: patch mesh adjacency, patch-patch proximity, patch-body
    // proximity, then wind and gravity into every patch
    EdgeSet mesh_edges;
    int patch_base = 0;
    for (int l = 0; l < seq.layer_count(); l++) {
        const EdgeSet& pm = seq.patches[l].mesh_edges;
        for (size_t e = 0; e < pm.size(); e++)
            mesh_edges.add(pm.receivers[e] + patch_base, pm.senders[e] + patch_base, EdgeKind::Mesh);
        patch_base += seq.patches[l].patch_count();
    }
    tg.edges.append(mesh_edges);

    double r_patch = resolve_radius(cfg.radius_patch, seq);
    tg.edges.append(world_edges_self(tg.patch_centers, r_patch, EdgeKeySet(mesh_edges), EdgeKind::World));

    if (nb > 0) {
        double r_body = resolve_radius(cfg.radius_body, seq);
        EdgeSet pb = world_edges_bipartite(tg.patch_centers, in.body_pos[0], r_body, EdgeKind::Body);
        for (size_t e = 0; e < pb.size(); e++)
            tg.edges.add(pb.receivers[e], pb.senders[e] + tg.patch_tokens, EdgeKind::Body);
    }
    for (int p = 0; p < tg.patch_tokens; p++) {
        tg.edges.add(p, tg.wind_token(), EdgeKind::Wind);
        tg.edges.add(p, tg.gravity_token(), EdgeKind::Gravity);
    }

    // stable sort by receiver so softmax segments are contiguous
    std::vector<int> order(tg.edges.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return tg.edges.receivers[a] < tg.edges.receivers[b]; });
    EdgeSet sorted;
    for (int e : order) sorted.add(tg.edges.receivers[e], tg.edges.senders[e], tg.edges.kinds[e]);
    tg.edges = std::move(sorted);

    // canonical frames; identity when the rotation lift is disabled
    tg.frames.assign(tg.total_tokens(), Mat3::identity());
    if (cfg.use_rotation_lift) {
        for (int b = 0; b < nb; b++)
            tg.frames[tg.patch_tokens + b] = canonical_frame(in.body_normals[0][b].normalized(), rng);
        Vec3 wdir = in.wind.direction();
        tg.frames[tg.wind_token()] = canonical_frame(wdir.normalized(), rng);
        Vec3 gdir = in.gravity.norm() > 1e-12 ? in.gravity.normalized() : Vec3(0, 0, -1);
        tg.frames[tg.gravity_token()] = canonical_frame(gdir, rng);
    }
    return tg;
}

// ---- rotation lift --------------------------------------------------------

std::vector<double> lift_rotation(const Mat3& rot, const std::vector<double>& w, int d) {
    if (int(w.size()) != d * 3) throw std::invalid_argument("lift_rotation: W must be d x 3");
    // phi = W R W^T + I - W W^T, assembled column-block-wise
    std::vector<double> wr(d * 3, 0.0);  // W * R
    for (int i = 0; i < d; i++)
        for (int j = 0; j < 3; j++)
            for (int k = 0; k < 3; k++) wr[i * 3 + j] += w[i * 3 + k] * rot.m[k][j];
    std::vector<double> phi(size_t(d) * d, 0.0);
    for (int i = 0; i < d; i++) {
        for (int j = 0; j < d; j++) {
            double acc = i == j ? 1.0 : 0.0;
            for (int k = 0; k < 3; k++) acc += (wr[i * 3 + k] - w[i * 3 + k]) * w[j * 3 + k];
            phi[size_t(i) * d + j] = acc;
        }
    }
    return phi;
}

Tensor semi_orthogonalize(Graph& g, Tensor raw) {
    const Shape& s = raw.shape();
    if (s.size() != 2 || s[1] != 3)
        throw std::invalid_argument("semi_orthogonalize: expected [d,3], got " + shape_str(s));
    std::vector<Tensor> basis;
    for (int j = 0; j < 3; j++) {
        Tensor c = g.slice(raw, 1, j, 1);  // [d,1]
        for (int i = 0; i < int(basis.size()); i++) {
            Tensor dot = g.reshape(g.matmul(g.transpose(basis[i]), c), Shape{});
            c = g.sub(c, g.scale(basis[i], dot));
        }
        Tensor len = g.l2norm(c);
        if (len.scalar() < 1e-10)
            throw std::invalid_argument("semi_orthogonalize: raw matrix is rank-deficient (column " +
                                        std::to_string(j) + ")");
        basis.push_back(g.div_scalar(c, len));
    }
    return g.concat(1, basis);
}

Tensor lift_apply(Graph& g, Tensor features, Tensor w, const std::vector<Mat3>& rots, bool transpose) {
    Tensor p = g.matmul(features, w);  // [m,3] rows are W^T f
    Tensor pr = g.rowwise_rot3(p, rots, transpose);
    Tensor dp = g.sub(pr, p);
    return g.add(features, g.matmul(dp, g.transpose(w)));
}

// ---- forward ---------------------------------------------------------------

Tensor ParamTensors::at(const std::string& name) const {
    auto it = t.find(name);
    if (it == t.end()) throw std::invalid_argument("missing parameter tensor: " + name);
    return it->second;
}

ParamTensors make_param_tensors(Graph& g, const ModelParams& params, bool requires_grad) {
    ParamTensors pt;
    for (const auto& [name, shape] : params.shapes)
        pt.t.emplace(name, g.input(shape, params.values.at(name), requires_grad));
    return pt;
}

static Tensor mlp2(Graph& g, const ParamTensors& pt, const std::string& prefix, Tensor x) {
    Tensor h = g.relu(g.add_rowvec(g.matmul(x, pt.at(prefix + ".w1")), pt.at(prefix + ".b1")));
    return g.add_rowvec(g.matmul(h, pt.at(prefix + ".w2")), pt.at(prefix + ".b2"));
}

StepPrediction forward_step(Graph& g, const ParamTensors& pt, const SimulatorConfig& cfg,
                            const StepInput& in, Rng& rng) {
    cfg.validate();
    const SequenceData& seq = *in.seq;
    TokenGraph tg = encode_tokens(in, cfg, rng);
    int d = cfg.hidden;
    int T = tg.total_tokens();

    // embed all tokens into the shared hidden space
    Tensor tok_p = g.add_rowvec(
        g.matmul(g.constant({tg.patch_tokens, cfg.patch_feature_dim()}, tg.patch_features), pt.at("embed.patch.w")),
        pt.at("embed.patch.b"));
    Tensor tok_b = g.add_rowvec(
        g.matmul(g.constant({tg.body_tokens, cfg.body_feature_dim()}, tg.body_features), pt.at("embed.body.w")),
        pt.at("embed.body.b"));
    Tensor tok_w = g.add_rowvec(g.matmul(g.constant({1, 4}, tg.wind_features), pt.at("embed.wind.w")),
                                pt.at("embed.wind.b"));
    Tensor tok_g = g.add_rowvec(g.matmul(g.constant({1, 3}, tg.gravity_features), pt.at("embed.gravity.w")),
                                pt.at("embed.gravity.b"));
    Tensor tokens = g.concat(0, {tok_p, tok_b, tok_w, tok_g});

    const std::vector<int>& recv = tg.edges.receivers;
    const std::vector<int>& send = tg.edges.senders;
    int E = int(tg.edges.size());

    std::vector<int> canon_pos, plain_pos;
    std::vector<Mat3> canon_rots;
    for (int e = 0; e < E; e++) {
        EdgeKind k = tg.edges.kinds[e];
        if (k == EdgeKind::Body || k == EdgeKind::Wind || k == EdgeKind::Gravity) {
            canon_pos.push_back(e);
            canon_rots.push_back(tg.frames[send[e]]);
        } else {
            plain_pos.push_back(e);
        }
    }
    std::vector<int> rows_with = recv;
    std::sort(rows_with.begin(), rows_with.end());
    rows_with.erase(std::unique(rows_with.begin(), rows_with.end()), rows_with.end());
    std::vector<int> rows_without;
    {
        size_t c = 0;
        for (int t = 0; t < T; t++) {
            if (c < rows_with.size() && rows_with[c] == t) c++;
            else rows_without.push_back(t);
        }
    }

    for (int l = 0; l < cfg.layer_count; l++) {
        std::string p = "layer" + std::to_string(l) + ".";
        Tensor w_lift = semi_orthogonalize(g, pt.at(p + "rot_lift"));
        Tensor q_all = g.matmul(tokens, pt.at(p + "wq"));
        Tensor r_all = g.matmul(tokens, pt.at(p + "wr"));
        Tensor s_all = g.matmul(tokens, pt.at(p + "ws"));

        Tensor q_e = g.gather_rows(q_all, recv);
        Tensor r_e = g.gather_rows(r_all, recv);
        Tensor s_e = g.gather_rows(s_all, send);
        Tensor f_e = g.rowwise_div(g.add(r_e, s_e), g.rowwise_norm(g.sub(r_e, s_e)));

        Tensor weights = g.segment_softmax(g.rowwise_dot(q_e, f_e), recv);

        // canonical senders: rotate into their frame, transform, rotate back
        Tensor contrib = g.zeros({E, d});
        if (!canon_pos.empty()) {
            Tensor fc = g.gather_rows(f_e, canon_pos);
            Tensor lifted = lift_apply(g, fc, w_lift, canon_rots, false);
            Tensor fr = mlp2(g, pt, p + "psi", lifted);
            Tensor back = lift_apply(g, fr, w_lift, canon_rots, true);
            contrib = g.add(contrib, g.scatter_add_rows(back, canon_pos, E));
        }
        if (!plain_pos.empty())
            contrib = g.add(contrib, g.scatter_add_rows(g.gather_rows(f_e, plain_pos), plain_pos, E));

        Tensor agg = g.scatter_add_rows(g.scale_rows(contrib, weights), recv, T);
        Tensor u = g.add(tokens, agg);
        Tensor out = g.add(u, mlp2(g, pt, p + "mlp", u));

        // receivers take the update; tokens without incident edges pass through
        Tensor kept = g.scatter_add_rows(g.gather_rows(out, rows_with), rows_with, T);
        if (!rows_without.empty())
            kept = g.add(kept, g.scatter_add_rows(g.gather_rows(tokens, rows_without), rows_without, T));
        tokens = kept;
    }

    // ---- decoder ----
    int N = seq.total_vertex_count();
    const std::vector<Vec3>& x_t = in.x_hist[0];

    // nearest body sample at time t per vertex; gravity frame when bodiless
    std::vector<int> nearest;
    if (tg.body_tokens > 0) nearest = nearest_anchors(x_t, in.body_pos[1]);

    std::vector<Mat3> dec_frames(std::max(tg.body_tokens, 0), Mat3::identity());
    Mat3 gravity_frame = Mat3::identity();
    if (cfg.use_rotation_lift) {
        for (int b = 0; b < tg.body_tokens; b++)
            dec_frames[b] = canonical_frame(in.body_normals[1][b].normalized(), rng);
        Vec3 gdir = in.gravity.norm() > 1e-12 ? in.gravity.normalized() : Vec3(0, 0, -1);
        gravity_frame = canonical_frame(gdir, rng);
    }

    // neighbor patches of a vertex: its own patch plus UV-adjacent ones
    std::vector<std::vector<int>> patch_nbrs(tg.patch_tokens);
    {
        int base = 0;
        for (int l = 0; l < seq.layer_count(); l++) {
            const EdgeSet& pm = seq.patches[l].mesh_edges;
            for (size_t e = 0; e < pm.size(); e++)
                patch_nbrs[base + pm.receivers[e]].push_back(base + pm.senders[e]);
            base += seq.patches[l].patch_count();
        }
    }

    std::vector<int> pair_vertex, pair_patch, pair_ref;
    std::vector<Mat3> pair_frames, vertex_frames;
    std::vector<double> rel_values;
    std::vector<double> counts;
    vertex_frames.resize(N);
    counts.assign(N, 0.0);
    for (int k = 0; k < N; k++) {
        int own = tg.patch_of_vertex[k];
        Mat3 frame = tg.body_tokens > 0 ? dec_frames[nearest[k]] : gravity_frame;
        int ref_token = tg.body_tokens > 0 ? tg.patch_tokens + nearest[k] : tg.gravity_token();
        vertex_frames[k] = frame;
        std::vector<int> nbrs = {own};
        nbrs.insert(nbrs.end(), patch_nbrs[own].begin(), patch_nbrs[own].end());
        for (int p : nbrs) {
            pair_vertex.push_back(k);
            pair_patch.push_back(p);
            pair_ref.push_back(ref_token);
            pair_frames.push_back(frame);
            Vec3 rel = frame * (x_t[k] - tg.patch_centers[p]);
            rel_values.push_back(rel.x);
            rel_values.push_back(rel.y);
            rel_values.push_back(rel.z);
            counts[k] += 1.0;
        }
    }
    int M = int(pair_vertex.size());

    Tensor w_dec = semi_orthogonalize(g, pt.at("decoder.rot_lift"));
    Tensor v_patch = lift_apply(g, g.gather_rows(tokens, pair_patch), w_dec, pair_frames, false);
    Tensor v_ref = lift_apply(g, g.gather_rows(tokens, pair_ref), w_dec, pair_frames, false);
    Tensor dec_in = g.concat(1, {g.constant({M, 3}, rel_values), v_patch, v_ref});

    Tensor h1 = g.relu(g.add_rowvec(g.matmul(dec_in, pt.at("decoder.w1")), pt.at("decoder.b1")));
    Tensor h2 = g.relu(g.add_rowvec(g.matmul(h1, pt.at("decoder.w2")), pt.at("decoder.b2")));
    Tensor h3 = g.relu(g.add_rowvec(g.matmul(h2, pt.at("decoder.w3")), pt.at("decoder.b3")));
    Tensor pair_accel = g.add_rowvec(g.matmul(h3, pt.at("decoder.w4")), pt.at("decoder.b4"));  // [M,3]

    Tensor alpha_canon = g.rowwise_div(g.scatter_add_rows(pair_accel, pair_vertex, N), g.constant({N}, counts));
    Tensor alpha = g.rowwise_rot3(alpha_canon, vertex_frames, true);

    std::vector<double> v_t_flat(3 * N), x_t_flat(3 * N);
    for (int k = 0; k < N; k++) {
        Vec3 v = (in.x_hist[0][k] - in.x_hist[1][k]) / in.dt;
        v_t_flat[3 * k] = v.x;
        v_t_flat[3 * k + 1] = v.y;
        v_t_flat[3 * k + 2] = v.z;
        x_t_flat[3 * k] = x_t[k].x;
        x_t_flat[3 * k + 1] = x_t[k].y;
        x_t_flat[3 * k + 2] = x_t[k].z;
    }
    Tensor beta = g.add(g.scale_const(alpha, in.dt), g.constant({N, 3}, v_t_flat));
    Tensor x_new = g.add(g.scale_const(beta, in.dt), g.constant({N, 3}, x_t_flat));

    StepPrediction pred;
    pred.tensor = x_new;
    pred.tokens = std::move(tg);
    pred.positions.resize(N);
    const auto& xv = x_new.value();
    for (int k = 0; k < N; k++) pred.positions[k] = Vec3(xv[3 * k], xv[3 * k + 1], xv[3 * k + 2]);
    return pred;
}

RolloutResult rollout(const ModelParams& params, const SequenceData& seq, int t0, int steps,
                      uint64_t rng_seed) {
    const SimulatorConfig& cfg = params.config;
    cfg.validate();
    RolloutResult out;
    if (steps <= 0) return out;
    if (t0 - cfg.history - 1 < 0) throw std::invalid_argument("rollout: t0 leaves no room for history");
    if (t0 + steps >= seq.frame_count()) throw std::invalid_argument("rollout: steps exceed sequence length");

    std::vector<std::vector<Vec3>> hist;  // newest first
    for (int i = 0; i <= cfg.history + 1; i++) hist.push_back(seq.garment_positions.at(t0 - i));

    Rng rng(rng_seed);
    for (int s = 0; s < steps; s++) {
        int t = t0 + s;
        StepInput in = make_step_input(seq, t, cfg.history, &hist);
        Graph g;
        ParamTensors pt = make_param_tensors(g, params, false);
        StepPrediction pred = forward_step(g, pt, cfg, in, rng);

        for (const Vec3& p : pred.positions)
            if (!p.finite() || std::abs(p.x) > 1e3 || std::abs(p.y) > 1e3 || std::abs(p.z) > 1e3) {
                out.diverged_at = s;
                return out;
            }
        out.frames.push_back(pred.positions);
        hist.insert(hist.begin(), pred.positions);
        hist.pop_back();
    }
    return out;
}

}  // namespace layersim
