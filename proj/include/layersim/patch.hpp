#pragma once

#include <vector>

#include "layersim/mesh.hpp"

namespace layersim {

// Static patch structure: a disjoint cover of the garment vertices by UV
// grid cells, plus patch-level adjacency. Per-frame states live in
// PatchStates and are always the arithmetic mean of the member vertices.
struct PatchGraph {
    std::vector<std::vector<int>> patch_vertices;
    std::vector<int> vertex_patch;
    EdgeSet mesh_edges;       // 4-neighborhood of UV cells, both directions
    std::vector<int> cell_u;  // UV cell coordinates per patch
    std::vector<int> cell_v;

    int patch_count() const { return int(patch_vertices.size()); }
};

struct PatchStates {
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
    std::vector<Vec3> accelerations;
};

// Partitions the UV square into cells of P x P vertices. Grid meshes get
// contiguous index blocks; vertices sharing a cell form one patch. Patches
// are UV-cell-adjacent (4-neighborhood) in mesh_edges.
PatchGraph patchify(const MeshTopology& topo, int patch_size);

// Member means of position/velocity/acceleration per patch.
PatchStates patch_states(const MeshState& state, const PatchGraph& patches);

// Member means of positions only.
std::vector<Vec3> patch_centers(const std::vector<Vec3>& positions, const PatchGraph& patches);

// Normalized mean of member vertex normals, one per patch.
std::vector<Vec3> patch_mean_normals(const PatchGraph& patches, const std::vector<Vec3>& normals);

// Largest pairwise member distance over all patches; the length scale for
// patch-level interaction radii.
double patch_diameter(const PatchGraph& patches, const std::vector<Vec3>& positions);

}  // namespace layersim
