#include "layersim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "layersim/parallel.hpp"
#include "layersim/rng.hpp"
#include "layersim/spatial_hash.hpp"

#include <nlohmann/json.hpp>

namespace layersim {

double SceneConfig::cloth_size() const {
    double size = 0.0;
    for (const auto& l : layers) size = std::max(size, l.spacing * double(std::max(l.nx, l.ny) - 1));
    return size;
}

void SceneConfig::validate() const {
    if (dt <= 0.0) throw std::invalid_argument("scene: dt must be positive");
    if (frames < 1) throw std::invalid_argument("scene: frames must be >= 1");
    if (substeps < 1) throw std::invalid_argument("scene: substeps must be >= 1");
    if (layers.empty() || layers.size() > 2) throw std::invalid_argument("scene: expected 1 or 2 layers");
    if (layers.size() == 2) {
        // inner footprint strictly inside the outer one at rest
        const LayerSpec& in = layers[0];
        const LayerSpec& out = layers[1];
        double in_hx = 0.5 * in.spacing * (in.nx - 1), in_hy = 0.5 * in.spacing * (in.ny - 1);
        double out_hx = 0.5 * out.spacing * (out.nx - 1), out_hy = 0.5 * out.spacing * (out.ny - 1);
        bool inside = in.center.x - in_hx > out.center.x - out_hx && in.center.x + in_hx < out.center.x + out_hx &&
                      in.center.y - in_hy > out.center.y - out_hy && in.center.y + in_hy < out.center.y + out_hy;
        if (!inside) throw std::invalid_argument("scene: inner layer must sit strictly inside the outer layer");
    }
    for (size_t a = 0; a < wind_intervals.size(); a++)
        for (size_t b = a + 1; b < wind_intervals.size(); b++) {
            const auto& u = wind_intervals[a];
            const auto& v = wind_intervals[b];
            if (u.start < v.start + v.length && v.start < u.start + u.length)
                throw std::invalid_argument("scene: wind intervals overlap");
        }
}

std::vector<Vec3> wind_force(const WindState& wind, const std::vector<Vec3>& normals,
                             const std::vector<double>& areas) {
    std::vector<Vec3> force(normals.size());
    if (wind.strength == 0.0) return force;
    Vec3 d = wind.direction();
    for (size_t i = 0; i < normals.size(); i++) {
        double facing = std::max(0.0, normals[i].dot(d));
        force[i] = d * (wind.strength * areas[i] * facing);
    }
    return force;
}

// ---- spring forces ---------------------------------------------------

namespace {

SpringIndex index_springs(const ClothLayer& layer) {
    SpringIndex idx;
    idx.all = layer.springs.structural;
    idx.all.insert(idx.all.end(), layer.springs.shear.begin(), layer.springs.shear.end());
    idx.all.insert(idx.all.end(), layer.springs.bend.begin(), layer.springs.bend.end());

    int n = layer.topology.vertex_count;
    idx.offsets.assign(n + 1, 0);
    for (const auto& s : idx.all) {
        idx.offsets[s.i + 1]++;
        idx.offsets[s.j + 1]++;
    }
    for (int v = 0; v < n; v++) idx.offsets[v + 1] += idx.offsets[v];
    idx.incident.assign(idx.all.size() * 2, 0);
    std::vector<int> cursor(idx.offsets.begin(), idx.offsets.end() - 1);
    for (int s = 0; s < int(idx.all.size()); s++) {
        idx.incident[cursor[idx.all[s].i]++] = s + 1;
        idx.incident[cursor[idx.all[s].j]++] = -(s + 1);
    }
    return idx;
}

// forces per spring, then a one-writer-per-vertex gather
void accumulate_spring_forces(const SpringIndex& idx, const std::vector<Vec3>& pos, std::vector<Vec3>& force,
                              std::vector<Vec3>& per_spring) {
    per_spring.resize(idx.all.size());
    parallel_for(int64_t(idx.all.size()), [&](int64_t s) {
        const Spring& sp = idx.all[s];
        Vec3 d = pos[sp.j] - pos[sp.i];
        double len = d.norm();
        per_spring[s] = len > 1e-12 ? d * (sp.stiffness * (len - sp.rest_length) / len) : Vec3();
    });
    parallel_for(int64_t(force.size()), [&](int64_t v) {
        Vec3 f = force[v];
        for (int k = idx.offsets[v]; k < idx.offsets[v + 1]; k++) {
            int e = idx.incident[k];
            f += e > 0 ? per_spring[e - 1] : -per_spring[-e - 1];
        }
        force[v] = f;
    });
}

}  // namespace

// ---- collisions ------------------------------------------------------

void collide_body(std::vector<Vec3>& positions, std::vector<Vec3>& velocities,
                  const BodyCollider& body, const RigidTransform& xf_now, const RigidTransform& xf_prev,
                  double dt, double eps, double friction) {
    if (body.empty()) return;
    parallel_for(int64_t(positions.size()), [&](int64_t i) {
        Vec3 local = xf_now.to_local(positions[i]);
        Vec3 ln;
        double sd = body.signed_distance_local(local, &ln);
        if (sd >= eps) return;
        Vec3 n = xf_now.apply_dir(ln);
        positions[i] += n * (eps - sd);

        Vec3 v_surf = dt > 0.0 ? (xf_now.apply(local) - xf_prev.apply(local)) / dt : Vec3();
        Vec3 v_rel = velocities[i] - v_surf;
        double vn = v_rel.dot(n);
        if (vn < 0.0) {
            Vec3 vt = v_rel - n * vn;
            double tn = vt.norm();
            double scale = tn > 1e-12 ? std::max(0.0, 1.0 - friction * (-vn) / tn) : 0.0;
            velocities[i] = v_surf + vt * scale;
        }
    }, 64);
}

void collide_layers(std::vector<Vec3>& inner_pos, std::vector<Vec3>& inner_vel,
                    const std::vector<Vec3>& inner_normals, double inner_mass,
                    std::vector<Vec3>& outer_pos, std::vector<Vec3>& outer_vel, double outer_mass,
                    double eps, double friction) {
    if (inner_pos.empty() || outer_pos.empty() || eps <= 0.0) return;
    std::vector<int> nearest = nearest_anchors_within(outer_pos, inner_pos, eps);

    double w_out = inner_mass / (inner_mass + outer_mass);
    double w_in = 1.0 - w_out;
    for (size_t o = 0; o < outer_pos.size(); o++) {
        int j = nearest[o];
        if (j < 0) continue;
        const Vec3& n = inner_normals[j];
        double margin = (outer_pos[o] - inner_pos[j]).dot(n);
        if (margin >= eps) continue;
        double delta = eps - margin;
        outer_pos[o] += n * (delta * w_out);
        inner_pos[j] -= n * (delta * w_in);

        Vec3 v_rel = outer_vel[o] - inner_vel[j];
        double vn = v_rel.dot(n);
        if (vn < 0.0) {
            outer_vel[o] += n * (-vn * w_out);
            inner_vel[j] -= n * (-vn * w_in);
            Vec3 vt = v_rel - n * vn;
            double tn = vt.norm();
            if (tn > 1e-12) {
                double scale = std::max(0.0, 1.0 - friction * (-vn) / tn);
                Vec3 dv = vt * (scale - 1.0);
                outer_vel[o] += dv * w_out;
                inner_vel[j] -= dv * w_in;
            }
        }
    }
}

// ---- scene setup and stepping ----------------------------------------

SceneRuntime build_scene(const SceneConfig& config) {
    config.validate();
    SceneRuntime scene;
    scene.config = config;
    for (size_t l = 0; l < config.layers.size(); l++) {
        const LayerSpec& spec = config.layers[l];
        GarmentAttributes attrs = spec.attrs;
        attrs.layer = int(l);
        ClothLayer layer = build_cloth_grid(spec.nx, spec.ny, spec.spacing, attrs);
        Vec3 offset = spec.center - Vec3(0.5 * spec.spacing * (spec.nx - 1), 0.5 * spec.spacing * (spec.ny - 1), 0.0);
        for (auto& p : layer.rest_positions) p += offset;
        layer.pinned = spec.pins;
        for (int pin : layer.pinned)
            if (pin < 0 || pin >= layer.topology.vertex_count)
                throw std::invalid_argument("scene: pinned index out of range");
        scene.layers.push_back(std::move(layer));
    }
    for (const auto& layer : scene.layers) scene.spring_index.push_back(index_springs(layer));
    scene.body.shapes = config.body_shapes;
    scene.motion = config.body_motion;

    double size = config.cloth_size();
    scene.eps_body = config.eps_body > 0.0 ? config.eps_body : 0.004 * size;
    scene.eps_garment = config.eps_garment > 0.0 ? config.eps_garment : 0.004 * size;
    return scene;
}

OracleState initial_state(const SceneRuntime& scene) {
    OracleState st;
    for (const auto& layer : scene.layers) {
        st.positions.push_back(layer.rest_positions);
        st.velocities.emplace_back(layer.rest_positions.size());
    }
    return st;
}

void step_oracle(const SceneRuntime& scene, OracleState& state, const WindState& wind,
                 double seconds, double dt) {
    const SceneConfig& cfg = scene.config;
    std::vector<Vec3> per_spring;
    for (size_t l = 0; l < scene.layers.size(); l++) {
        const ClothLayer& layer = scene.layers[l];
        auto& x = state.positions[l];
        auto& v = state.velocities[l];
        double m = layer.vertex_mass;

        VertexNormals vn = vertex_normals(layer.topology, x);
        std::vector<Vec3> force = wind_force(wind, vn.normals, layer.vertex_area);
        accumulate_spring_forces(scene.spring_index[l], x, force, per_spring);

        parallel_for(int64_t(x.size()), [&](int64_t i) {
            Vec3 f = force[i] + cfg.gravity * m - v[i] * cfg.damping;
            v[i] += f * (dt / m);
            x[i] += v[i] * dt;
        }, 64);
        for (int pin : layer.pinned) {
            x[pin] = layer.rest_positions[pin];
            v[pin] = Vec3();
        }
        for (size_t i = 0; i < x.size(); i++)
            if (!x[i].finite() || !v[i].finite())
                throw OracleDivergence("step_oracle: non-finite state (bad forces)", -1);
    }

    // collision projection: body, then layer-layer, then a body cleanup
    // pass (the layer impulse can push the inner layer back into the body)
    RigidTransform xf_now = scene.motion.at(seconds + dt);
    RigidTransform xf_prev = scene.motion.at(seconds);
    if (!scene.body.empty()) {
        for (size_t l = 0; l < scene.layers.size(); l++)
            collide_body(state.positions[l], state.velocities[l], scene.body, xf_now, xf_prev, dt,
                         scene.eps_body, scene.layers[l].attrs.friction);
    }
    if (scene.layers.size() == 2) {
        VertexNormals inner_n = vertex_normals(scene.layers[0].topology, state.positions[0]);
        double mu = 0.5 * (scene.layers[0].attrs.friction + scene.layers[1].attrs.friction);
        collide_layers(state.positions[0], state.velocities[0], inner_n.normals, scene.layers[0].vertex_mass,
                       state.positions[1], state.velocities[1], scene.layers[1].vertex_mass,
                       scene.eps_garment, mu);
    }
    if (!scene.body.empty()) {
        for (int iter = 0; iter < 3; iter++) {
            bool dirty = false;
            for (size_t l = 0; l < scene.layers.size(); l++) {
                for (const Vec3& p : state.positions[l]) {
                    Vec3 n;
                    if (scene.body.signed_distance_local(xf_now.to_local(p), &n) < scene.eps_body - 1e-12) {
                        dirty = true;
                        break;
                    }
                }
            }
            if (!dirty) break;
            for (size_t l = 0; l < scene.layers.size(); l++)
                collide_body(state.positions[l], state.velocities[l], scene.body, xf_now, xf_prev, dt,
                             scene.eps_body, scene.layers[l].attrs.friction);
        }
    }
    for (size_t l = 0; l < scene.layers.size(); l++) {
        const ClothLayer& layer = scene.layers[l];
        for (int pin : layer.pinned) {
            state.positions[l][pin] = layer.rest_positions[pin];
            state.velocities[l][pin] = Vec3();
        }
    }
}

// ---- sequence generation ----------------------------------------------

namespace {

Quat random_unit_quat(Rng& rng) {
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
    return q;
}

std::vector<WindInterval> random_wind_schedule(const SceneConfig& cfg, Rng& rng) {
    std::vector<WindInterval> out;
    if (cfg.max_wind_intervals < 1 || cfg.frames < 4) return out;
    int count = 1 + int(rng.uniform_index(uint64_t(cfg.max_wind_intervals)));
    int cursor = 0;
    for (int k = 0; k < count; k++) {
        int remaining = cfg.frames - cursor;
        int min_len = std::max(2, cfg.frames / 8);
        if (remaining < min_len + 1) break;
        int len = min_len + int(rng.uniform_index(uint64_t(std::max(1, remaining / 2 - min_len + 1))));
        int slack = remaining - len;
        int start = cursor + int(rng.uniform_index(uint64_t(std::max(1, slack))));
        WindInterval iv;
        iv.start = start;
        iv.length = len;
        iv.wind.quaternion = random_unit_quat(rng);
        iv.wind.strength = rng.uniform(0.0, cfg.max_wind_strength) * cfg.wind_strength_scale;
        out.push_back(iv);
        cursor = start + len;
    }
    return out;
}

WindState wind_at_frame(const std::vector<WindInterval>& schedule, int frame) {
    for (const auto& iv : schedule)
        if (frame >= iv.start && frame < iv.start + iv.length) return iv.wind;
    return WindState{};  // identity quaternion, zero strength
}

std::string collider_description(const SceneConfig& cfg) {
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& s : cfg.body_shapes) {
        shapes.push_back({{"kind", s.kind == RigidShape::Sphere ? "sphere" : "capsule"},
                          {"a", {s.a.x, s.a.y, s.a.z}},
                          {"b", {s.b.x, s.b.y, s.b.z}},
                          {"radius", s.radius}});
    }
    const BodyMotion& m = cfg.body_motion;
    nlohmann::json j = {{"shapes", shapes},
                        {"motion",
                         {{"start", {m.start.x, m.start.y, m.start.z}},
                          {"linear_velocity", {m.linear_velocity.x, m.linear_velocity.y, m.linear_velocity.z}},
                          {"oscillation_axis", {m.oscillation_axis.x, m.oscillation_axis.y, m.oscillation_axis.z}},
                          {"oscillation_amplitude", m.oscillation_amplitude},
                          {"oscillation_period", m.oscillation_period},
                          {"oscillation_phase", m.oscillation_phase}}},
                        {"samples", cfg.body_samples}};
    return j.dump();
}

}  // namespace

SequenceData generate_sequence(const SceneConfig& config, uint64_t seed) {
    SceneRuntime scene = build_scene(config);
    Rng rng(seed);

    std::vector<WindInterval> schedule =
        config.randomize_wind ? random_wind_schedule(config, rng) : config.wind_intervals;

    SequenceData seq;
    seq.layers = scene.layers;
    for (const auto& layer : scene.layers) seq.patches.push_back(patchify(layer.topology, config.patch_size));
    seq.dt = config.dt;
    seq.seed = seed;
    seq.patch_size = config.patch_size;
    seq.eps_body = scene.eps_body;
    seq.eps_garment = scene.eps_garment;
    seq.gravity = config.gravity;
    seq.collider_json = collider_description(config);
    seq.body.shapes = scene.body.shapes;
    for (const auto& iv : schedule)
        if (iv.wind.strength >= config.windy_threshold * config.wind_strength_scale) seq.windy = true;

    std::vector<SurfaceSample> local_samples = scene.body.sample_surface_local(config.body_samples);

    OracleState state = initial_state(scene);
    auto record = [&](int frame) {
        std::vector<Vec3> all;
        for (const auto& layer_pos : state.positions) all.insert(all.end(), layer_pos.begin(), layer_pos.end());
        seq.garment_positions.push_back(std::move(all));
        seq.body.trajectory.push_back(scene.motion.at(frame * config.dt));
        seq.body_samples.push_back(seq.body.sample_surface(local_samples, frame));
        seq.wind.push_back(wind_at_frame(schedule, frame));
    };

    record(0);
    double sub_dt = config.dt / config.substeps;
    for (int t = 1; t < config.frames; t++) {
        WindState wind = wind_at_frame(schedule, t);
        for (int s = 0; s < config.substeps; s++)
            step_oracle(scene, state, wind, (t - 1) * config.dt + s * sub_dt, sub_dt);
        for (const auto& layer_pos : state.positions)
            for (const Vec3& p : layer_pos) {
                if (!p.finite() || std::abs(p.x) > 1e3 || std::abs(p.y) > 1e3 || std::abs(p.z) > 1e3) {
                    std::ostringstream msg;
                    msg << "generate_sequence: oracle diverged at frame " << t;
                    throw OracleDivergence(msg.str(), t);
                }
            }
        record(t);
    }
    return seq;
}

}  // namespace layersim
