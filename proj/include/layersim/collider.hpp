#pragma once

#include <vector>

#include "layersim/vec3.hpp"

namespace layersim {

struct RigidTransform {
    Vec3 translation;
    Quat rotation;

    Vec3 apply(const Vec3& local) const { return quat_to_matrix(rotation) * local + translation; }
    Vec3 apply_dir(const Vec3& local) const { return quat_to_matrix(rotation) * local; }
    Vec3 to_local(const Vec3& world) const {
        return quat_to_matrix(rotation).transposed() * (world - translation);
    }
};

// Sphere (endpoint a only) or capsule (segment a..b) in body-local
// coordinates.
struct RigidShape {
    enum Kind { Sphere, Capsule } kind = Sphere;
    Vec3 a, b;
    double radius = 0.1;
};

struct SurfaceSample {
    Vec3 position;
    Vec3 normal;
};

// Union of convex shapes moving on a scripted rigid trajectory. Signed
// distance is the minimum over shapes; surface samples are fixed in local
// coordinates and follow the trajectory.
struct BodyCollider {
    std::vector<RigidShape> shapes;
    std::vector<RigidTransform> trajectory;  // one transform per frame

    bool empty() const { return shapes.empty(); }

    // signed distance and outward normal in local coordinates
    double signed_distance_local(const Vec3& p, Vec3* normal) const;

    // world-space signed distance/normal at a frame
    double signed_distance(const Vec3& p, int frame, Vec3* normal) const;

    // Deterministic area-stratified surface samples in local coordinates.
    std::vector<SurfaceSample> sample_surface_local(int count) const;

    // Samples transformed by the frame's rigid transform.
    std::vector<SurfaceSample> sample_surface(const std::vector<SurfaceSample>& local, int frame) const;
};

}  // namespace layersim
