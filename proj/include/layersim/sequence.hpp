#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layersim/cloth.hpp"
#include "layersim/collider.hpp"
#include "layersim/mesh.hpp"
#include "layersim/patch.hpp"

namespace layersim {

// Wind as a frame: rotation carrying +z to the flow direction, plus a
// scalar strength. Strength uses native units (paper-style magnitudes get
// multiplied by the configured scale before they land here).
struct WindState {
    Quat quaternion;
    double strength = 0.0;

    Vec3 direction() const { return quat_to_matrix(quaternion) * Vec3(0, 0, 1); }
};

// A generated (or predicted) animation: static scene description plus
// per-frame garment positions, body surface samples, and wind. Velocities
// and accelerations are derived by finite differences over frames.
struct SequenceData {
    // static
    std::vector<ClothLayer> layers;     // inner first
    std::vector<PatchGraph> patches;    // one per layer, same order
    BodyCollider body;                  // shapes + per-frame transforms
    double dt = 1.0 / 30.0;
    uint64_t seed = 0;
    int patch_size = 4;
    double eps_body = 0.004;
    double eps_garment = 0.004;
    Vec3 gravity = Vec3(0, 0, -9.8);
    bool windy = false;
    std::string collider_json;          // the scene's collider description

    // per frame
    std::vector<std::vector<Vec3>> garment_positions;  // layer 0 vertices then layer 1
    std::vector<std::vector<SurfaceSample>> body_samples;
    std::vector<WindState> wind;

    int frame_count() const { return int(garment_positions.size()); }
    int layer_count() const { return int(layers.size()); }
    int layer_vertex_count(int layer) const { return layers[layer].topology.vertex_count; }
    int total_vertex_count() const {
        int n = 0;
        for (const auto& l : layers) n += l.topology.vertex_count;
        return n;
    }
    int layer_offset(int layer) const {
        int off = 0;
        for (int l = 0; l < layer; l++) off += layers[l].topology.vertex_count;
        return off;
    }

    // positions of one layer within a frame
    std::vector<Vec3> layer_positions(int frame, int layer) const {
        const auto& all = garment_positions.at(frame);
        int off = layer_offset(layer);
        int n = layer_vertex_count(layer);
        return std::vector<Vec3>(all.begin() + off, all.begin() + off + n);
    }

    // finite-difference velocities for a frame (zero for frame 0)
    std::vector<Vec3> frame_velocities(int frame) const {
        const auto& x = garment_positions.at(frame);
        std::vector<Vec3> v(x.size());
        if (frame > 0) {
            const auto& prev = garment_positions[frame - 1];
            for (size_t i = 0; i < x.size(); i++) v[i] = (x[i] - prev[i]) / dt;
        }
        return v;
    }

    std::vector<Vec3> body_sample_velocities(int frame) const {
        const auto& s = body_samples.at(frame);
        std::vector<Vec3> v(s.size());
        if (frame > 0) {
            const auto& prev = body_samples[frame - 1];
            for (size_t i = 0; i < s.size(); i++) v[i] = (s[i].position - prev[i].position) / dt;
        }
        return v;
    }
};

}  // namespace layersim
