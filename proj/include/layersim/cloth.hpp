#pragma once

#include <vector>

#include "layersim/mesh.hpp"

namespace layersim {

struct Spring {
    int i = 0, j = 0;
    double rest_length = 0.0;
    double stiffness = 0.0;  // N/m
};

// Structural springs sit on grid edges, shear on quad diagonals, bend on
// two-apart pairs along rows/columns.
struct SpringSet {
    std::vector<Spring> structural;
    std::vector<Spring> shear;
    std::vector<Spring> bend;

    size_t total() const { return structural.size() + shear.size() + bend.size(); }
};

// One simulated garment layer: grid topology, rest shape, springs and the
// per-vertex constants derived from the attributes.
struct ClothLayer {
    MeshTopology topology;
    std::vector<Vec3> rest_positions;
    SpringSet springs;
    GarmentAttributes attrs;
    double vertex_mass = 0.0;           // kg, uniform over the layer
    std::vector<double> vertex_area;    // m^2, one third of incident rest face areas
    std::vector<int> pinned;            // vertex indices held fixed
};

// Base constants multiplied by the normalized attribute values.
inline constexpr double kBaseVertexMass = 0.05;        // kg at mass_density = 1
inline constexpr double kBaseStructuralStiffness = 60.0;  // N/m at stretch = 1
inline constexpr double kBaseShearStiffness = 24.0;
inline constexpr double kBaseBendStiffness = 10.0;     // N/m at bend = 1

// Planar nx x ny grid in the local xy plane, z = 0, UVs normalized grid
// coordinates. Faces wind counter-clockwise seen from +z.
ClothLayer build_cloth_grid(int nx, int ny, double spacing, const GarmentAttributes& attrs);

}  // namespace layersim
