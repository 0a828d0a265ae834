#include "layersim/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace layersim {

using nlohmann::json;

namespace {

// object reader that rejects unknown keys
class StrictObj {
  public:
    StrictObj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw std::invalid_argument("config: " + path_ + " must be an object");
    }

    const json* get(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <typename T>
    void read(const std::string& key, T& dst) {
        if (const json* v = get(key)) {
            try {
                dst = v->get<T>();
            } catch (const json::exception&) {
                throw std::invalid_argument("config: bad value for " + path_ + "." + key);
            }
        }
    }

    void read_vec3(const std::string& key, Vec3& dst) {
        if (const json* v = get(key)) {
            if (!v->is_array() || v->size() != 3)
                throw std::invalid_argument("config: " + path_ + "." + key + " must be [x,y,z]");
            dst = Vec3((*v)[0].get<double>(), (*v)[1].get<double>(), (*v)[2].get<double>());
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw std::invalid_argument("config: unknown key " + path_ + "." + it.key());
    }

    const json& raw() const { return j_; }
    const std::string& path() const { return path_; }

  private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

GarmentAttributes parse_attributes(const json& j, const std::string& path, GarmentAttributes base) {
    StrictObj o(j, path);
    o.read("mass_density", base.mass_density);
    o.read("bend_stiffness", base.bend_stiffness);
    o.read("stretch_stiffness", base.stretch_stiffness);
    o.read("friction", base.friction);
    o.finish();
    return base;
}

LayerSpec parse_layer(const json& j, const std::string& path, LayerSpec base) {
    StrictObj o(j, path);
    o.read("nx", base.nx);
    o.read("ny", base.ny);
    o.read("spacing", base.spacing);
    o.read_vec3("center", base.center);
    if (const json* a = o.get("attributes")) base.attrs = parse_attributes(*a, path + ".attributes", base.attrs);
    o.read("pins", base.pins);
    o.finish();
    return base;
}

RigidShape parse_shape(const json& j, const std::string& path) {
    StrictObj o(j, path);
    RigidShape s;
    std::string kind = "sphere";
    o.read("kind", kind);
    if (kind == "sphere")
        s.kind = RigidShape::Sphere;
    else if (kind == "capsule")
        s.kind = RigidShape::Capsule;
    else
        throw std::invalid_argument("config: " + path + ".kind must be sphere or capsule");
    o.read_vec3("a", s.a);
    o.read_vec3("b", s.b);
    o.read("radius", s.radius);
    o.finish();
    return s;
}

void parse_scene(const json& j, SceneConfig& s) {
    StrictObj o(j, "scene");
    if (const json* layers = o.get("layers")) {
        if (!layers->is_array() || layers->empty() || layers->size() > 2)
            throw std::invalid_argument("config: scene.layers must hold 1 or 2 layers");
        std::vector<LayerSpec> parsed;
        for (size_t i = 0; i < layers->size(); i++) {
            LayerSpec base = i < s.layers.size() ? s.layers[i] : s.layers.back();
            parsed.push_back(parse_layer((*layers)[i], "scene.layers[" + std::to_string(i) + "]", base));
        }
        s.layers = std::move(parsed);
    }
    o.read("dt", s.dt);
    o.read("frames", s.frames);
    o.read("substeps", s.substeps);
    o.read_vec3("gravity", s.gravity);
    o.read("damping", s.damping);
    if (const json* body = o.get("body")) {
        StrictObj b(*body, "scene.body");
        if (const json* shapes = b.get("shapes")) {
            s.body_shapes.clear();
            for (size_t i = 0; i < shapes->size(); i++)
                s.body_shapes.push_back(parse_shape((*shapes)[i], "scene.body.shapes[" + std::to_string(i) + "]"));
        }
        if (const json* motion = b.get("motion")) {
            StrictObj m(*motion, "scene.body.motion");
            m.read_vec3("start", s.body_motion.start);
            m.read_vec3("linear_velocity", s.body_motion.linear_velocity);
            m.read_vec3("oscillation_axis", s.body_motion.oscillation_axis);
            m.read("oscillation_amplitude", s.body_motion.oscillation_amplitude);
            m.read("oscillation_period", s.body_motion.oscillation_period);
            m.read("oscillation_phase", s.body_motion.oscillation_phase);
            m.finish();
        }
        b.read("samples", s.body_samples);
        b.finish();
    }
    if (const json* wind = o.get("wind")) {
        StrictObj w(*wind, "scene.wind");
        w.read("randomize", s.randomize_wind);
        w.read("max_intervals", s.max_wind_intervals);
        w.read("strength_scale", s.wind_strength_scale);
        w.read("max_strength", s.max_wind_strength);
        w.read("windy_threshold", s.windy_threshold);
        if (const json* ivs = w.get("intervals")) {
            s.wind_intervals.clear();
            for (size_t i = 0; i < ivs->size(); i++) {
                StrictObj iv((*ivs)[i], "scene.wind.intervals[" + std::to_string(i) + "]");
                WindInterval out;
                iv.read("start", out.start);
                iv.read("length", out.length);
                if (const json* q = iv.get("quaternion")) {
                    if (!q->is_array() || q->size() != 4)
                        throw std::invalid_argument("config: wind quaternion must be [w,x,y,z]");
                    out.wind.quaternion = {(*q)[0].get<double>(), (*q)[1].get<double>(), (*q)[2].get<double>(),
                                           (*q)[3].get<double>()};
                }
                iv.read("strength", out.wind.strength);
                iv.finish();
                s.wind_intervals.push_back(out);
            }
        }
        w.finish();
    }
    o.read("eps_body", s.eps_body);
    o.read("eps_garment", s.eps_garment);
    o.read("patch_size", s.patch_size);
    o.read("seed", s.seed);
    o.finish();
}

void parse_model(const json& j, SimulatorConfig& m) {
    StrictObj o(j, "model");
    o.read("history", m.history);
    o.read("layer_count", m.layer_count);
    o.read("hidden", m.hidden);
    o.read("patch_size", m.patch_size);
    o.read("radius_patch", m.radius_patch);
    o.read("radius_body", m.radius_body);
    o.read("dt", m.dt);
    o.read("use_rotation_lift", m.use_rotation_lift);
    o.finish();
}

void parse_train(const json& j, TrainConfig& t) {
    StrictObj o(j, "train");
    o.read("noise_steps", t.noise_steps);
    o.read("learning_rate", t.learning_rate);
    o.read("epochs", t.epochs);
    o.read("batch_size", t.batch_size);
    o.read("max_steps", t.max_steps);
    o.read("seed", t.seed);
    if (const json* loss = o.get("loss")) {
        StrictObj l(*loss, "train.loss");
        l.read("lambda_m", t.loss.lambda_m);
        l.read("lambda_n", t.loss.lambda_n);
        l.read("lambda_b", t.loss.lambda_b);
        l.read("lambda_g", t.loss.lambda_g);
        l.read("d_eps", t.loss.d_eps);
        l.finish();
    }
    o.finish();
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    // canonical two-layer scene: inner and outer 8x8 grids above a drifting,
    // oscillating sphere, one randomized wind interval
    LayerSpec inner;
    inner.nx = 8;
    inner.ny = 8;
    inner.spacing = 1.0 / 7.0;
    inner.center = Vec3(0, 0, 0.55);
    inner.attrs = {0.5, 0.5, 0.5, 0.5, 0};
    LayerSpec outer;
    outer.nx = 8;
    outer.ny = 8;
    outer.spacing = 1.2 / 7.0;
    outer.center = Vec3(0, 0, 0.58);
    outer.attrs = {0.4, 0.3, 0.4, 0.3, 1};
    c.scene.layers = {inner, outer};

    RigidShape sphere;
    sphere.kind = RigidShape::Sphere;
    sphere.a = Vec3(0, 0, 0);
    sphere.b = Vec3(0, 0, 0);
    sphere.radius = 0.25;
    c.scene.body_shapes = {sphere};
    c.scene.body_motion.start = Vec3(0, 0, 0);
    c.scene.body_motion.linear_velocity = Vec3(0.05, 0, 0);
    c.scene.body_motion.oscillation_axis = Vec3(1, 0, 0);
    c.scene.body_motion.oscillation_amplitude = 0.12;
    c.scene.body_motion.oscillation_period = 1.5;

    c.train.loss.d_eps = -1.0;  // resolved from the data's eps_garment
    c.model.dt = c.scene.dt;
    return c;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig c = defaults();
    StrictObj o(j, "$");
    if (const json* s = o.get("scene")) parse_scene(*s, c.scene);
    if (const json* m = o.get("model")) parse_model(*m, c.model);
    if (const json* t = o.get("train")) parse_train(*t, c.train);
    if (const json* e = o.get("eval")) {
        StrictObj ev(*e, "eval");
        ev.read("d_pen", c.eval.d_pen);
        ev.read("rng_seed", c.eval.rng_seed);
        ev.finish();
    }
    o.finish();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_json_text(buf.str());
}

std::string RunConfig::to_json_text() const {
    json layers = json::array();
    for (const auto& l : scene.layers) {
        layers.push_back({{"nx", l.nx},
                          {"ny", l.ny},
                          {"spacing", l.spacing},
                          {"center", {l.center.x, l.center.y, l.center.z}},
                          {"attributes",
                           {{"mass_density", l.attrs.mass_density},
                            {"bend_stiffness", l.attrs.bend_stiffness},
                            {"stretch_stiffness", l.attrs.stretch_stiffness},
                            {"friction", l.attrs.friction}}},
                          {"pins", l.pins}});
    }
    json shapes = json::array();
    for (const auto& s : scene.body_shapes)
        shapes.push_back({{"kind", s.kind == RigidShape::Sphere ? "sphere" : "capsule"},
                          {"a", {s.a.x, s.a.y, s.a.z}},
                          {"b", {s.b.x, s.b.y, s.b.z}},
                          {"radius", s.radius}});
    json intervals = json::array();
    for (const auto& iv : scene.wind_intervals)
        intervals.push_back({{"start", iv.start},
                             {"length", iv.length},
                             {"quaternion",
                              {iv.wind.quaternion.w, iv.wind.quaternion.x, iv.wind.quaternion.y,
                               iv.wind.quaternion.z}},
                             {"strength", iv.wind.strength}});

    json j = {
        {"scene",
         {{"layers", layers},
          {"dt", scene.dt},
          {"frames", scene.frames},
          {"substeps", scene.substeps},
          {"gravity", {scene.gravity.x, scene.gravity.y, scene.gravity.z}},
          {"damping", scene.damping},
          {"body",
           {{"shapes", shapes},
            {"motion",
             {{"start", {scene.body_motion.start.x, scene.body_motion.start.y, scene.body_motion.start.z}},
              {"linear_velocity",
               {scene.body_motion.linear_velocity.x, scene.body_motion.linear_velocity.y,
                scene.body_motion.linear_velocity.z}},
              {"oscillation_axis",
               {scene.body_motion.oscillation_axis.x, scene.body_motion.oscillation_axis.y,
                scene.body_motion.oscillation_axis.z}},
              {"oscillation_amplitude", scene.body_motion.oscillation_amplitude},
              {"oscillation_period", scene.body_motion.oscillation_period},
              {"oscillation_phase", scene.body_motion.oscillation_phase}}},
            {"samples", scene.body_samples}}},
          {"wind",
           {{"randomize", scene.randomize_wind},
            {"max_intervals", scene.max_wind_intervals},
            {"strength_scale", scene.wind_strength_scale},
            {"max_strength", scene.max_wind_strength},
            {"windy_threshold", scene.windy_threshold},
            {"intervals", intervals}}},
          {"eps_body", scene.eps_body},
          {"eps_garment", scene.eps_garment},
          {"patch_size", scene.patch_size},
          {"seed", scene.seed}}},
        {"model",
         {{"history", model.history},
          {"layer_count", model.layer_count},
          {"hidden", model.hidden},
          {"patch_size", model.patch_size},
          {"radius_patch", model.radius_patch},
          {"radius_body", model.radius_body},
          {"dt", model.dt},
          {"use_rotation_lift", model.use_rotation_lift}}},
        {"train",
         {{"noise_steps", train.noise_steps},
          {"learning_rate", train.learning_rate},
          {"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"max_steps", train.max_steps},
          {"seed", train.seed},
          {"loss",
           {{"lambda_m", train.loss.lambda_m},
            {"lambda_n", train.loss.lambda_n},
            {"lambda_b", train.loss.lambda_b},
            {"lambda_g", train.loss.lambda_g},
            {"d_eps", train.loss.d_eps}}}}},
        {"eval", {{"d_pen", eval.d_pen}, {"rng_seed", eval.rng_seed}}}};
    return j.dump(2);
}

}  // namespace layersim
