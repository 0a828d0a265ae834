#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "layersim/sequence.hpp"

namespace layersim {

struct LayerSpec {
    int nx = 8, ny = 8;
    double spacing = 1.0 / 7.0;
    Vec3 center = Vec3(0, 0, 0.55);
    GarmentAttributes attrs;
    std::vector<int> pins;  // vertex indices held fixed in place
};

struct WindInterval {
    int start = 0;
    int length = 0;
    WindState wind;
};

// Scripted rigid motion: linear drift plus sinusoidal oscillation,
// evaluated at continuous time so substeps see a smooth trajectory.
struct BodyMotion {
    Vec3 start;
    Vec3 linear_velocity;
    Vec3 oscillation_axis;
    double oscillation_amplitude = 0.0;
    double oscillation_period = 2.0;  // seconds
    double oscillation_phase = 0.0;   // radians

    RigidTransform at(double seconds) const {
        RigidTransform xf;
        xf.translation = start + linear_velocity * seconds;
        if (oscillation_amplitude != 0.0 && oscillation_period > 0.0) {
            double s = std::sin(2.0 * M_PI * seconds / oscillation_period + oscillation_phase);
            xf.translation += oscillation_axis * (oscillation_amplitude * s);
        }
        return xf;
    }
};

struct SceneConfig {
    std::vector<LayerSpec> layers;  // inner first; outer must enclose it in xy extent
    double dt = 1.0 / 30.0;
    int frames = 50;
    int substeps = 8;
    Vec3 gravity = Vec3(0, 0, -9.8);
    double damping = 0.02;  // kg/s, applied as -damping * v

    std::vector<RigidShape> body_shapes;
    BodyMotion body_motion;
    int body_samples = 400;

    std::vector<WindInterval> wind_intervals;  // used when randomize_wind is false
    bool randomize_wind = true;
    int max_wind_intervals = 1;
    double wind_strength_scale = 0.01;  // native strength = sampled strength * scale
    double max_wind_strength = 400.0;   // sampling range upper bound (pre-scale)
    double windy_threshold = 50.0;      // split tag: windy if any interval >= this (pre-scale)

    double eps_body = -1.0;     // < 0: resolved to 0.004 * cloth size
    double eps_garment = -1.0;  // < 0: resolved to 0.004 * cloth size
    int patch_size = 4;
    uint64_t seed = 0;

    double cloth_size() const;
    void validate() const;
};

struct OracleDivergence : std::runtime_error {
    int frame;
    explicit OracleDivergence(const std::string& what, int frame_) : std::runtime_error(what), frame(frame_) {}
};

// Pressure-style wind load: strength * area * max(0, n . d) * d with d the
// rotated +z axis. Zero strength gives exactly zero force.
std::vector<Vec3> wind_force(const WindState& wind, const std::vector<Vec3>& normals,
                             const std::vector<double>& areas);

// Projects penetrating points to signed distance eps along the collider
// normal and clamps their inward normal velocity to the surface velocity,
// with Coulomb-style tangential friction.
void collide_body(std::vector<Vec3>& positions, std::vector<Vec3>& velocities,
                  const BodyCollider& body, const RigidTransform& xf_now, const RigidTransform& xf_prev,
                  double dt, double eps, double friction);

// Separates outer-layer vertices from nearby inner-layer vertices along the
// inner normal; position and velocity corrections split by mass. Serial:
// several outer vertices may touch the same inner vertex.
void collide_layers(std::vector<Vec3>& inner_pos, std::vector<Vec3>& inner_vel,
                    const std::vector<Vec3>& inner_normals, double inner_mass,
                    std::vector<Vec3>& outer_pos, std::vector<Vec3>& outer_vel, double outer_mass,
                    double eps, double friction);

// Mutable integration state for one scene.
struct OracleState {
    std::vector<std::vector<Vec3>> positions;   // per layer
    std::vector<std::vector<Vec3>> velocities;  // per layer
};

// Flattened springs with signed CSR incidence per vertex: +(s+1) when the
// vertex is endpoint i, -(s+1) when it is endpoint j.
struct SpringIndex {
    std::vector<Spring> all;
    std::vector<int> offsets;
    std::vector<int> incident;
};

struct SceneRuntime {
    std::vector<ClothLayer> layers;
    std::vector<SpringIndex> spring_index;  // one per layer
    BodyCollider body;  // shapes only; transforms come from motion
    BodyMotion motion;
    SceneConfig config;
    double eps_body = 0.0, eps_garment = 0.0;
};

SceneRuntime build_scene(const SceneConfig& config);
OracleState initial_state(const SceneRuntime& scene);

// One semi-implicit Euler step of length dt starting at time `seconds`:
// forces, integration, then collision projection (body first, then
// layer-layer, then a body cleanup pass so nothing ends inside the body).
void step_oracle(const SceneRuntime& scene, OracleState& state, const WindState& wind,
                 double seconds, double dt);

// Runs the configured scene and returns every frame. Deterministic in
// (config, seed); wind schedule randomization draws only from `seed`.
SequenceData generate_sequence(const SceneConfig& config, uint64_t seed);

}  // namespace layersim
