#include "layersim/patch.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace layersim {

// Groups near-equal coordinates (tolerance 1e-9) and returns the group index
// per value; recovers integer grid coordinates from normalized UVs.
static std::vector<int> group_coords(const std::vector<double>& vals) {
    std::vector<double> sorted(vals);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> reps;
    for (double v : sorted)
        if (reps.empty() || v - reps.back() > 1e-9) reps.push_back(v);

    std::vector<int> idx(vals.size());
    for (size_t i = 0; i < vals.size(); i++) {
        auto it = std::lower_bound(reps.begin(), reps.end(), vals[i] - 1e-9);
        idx[i] = int(it - reps.begin());
    }
    return idx;
}

PatchGraph patchify(const MeshTopology& topo, int patch_size) {
    if (!topo.has_uv()) throw std::invalid_argument("patchify: topology has no UV coordinates");
    if (patch_size < 1) throw std::invalid_argument("patchify: patch size must be >= 1");

    std::vector<double> us(topo.vertex_count), vs(topo.vertex_count);
    for (int i = 0; i < topo.vertex_count; i++) {
        us[i] = topo.uv[i][0];
        vs[i] = topo.uv[i][1];
    }
    std::vector<int> iu = group_coords(us);
    std::vector<int> iv = group_coords(vs);

    // nonempty cells become patches, in (cell_v, cell_u) order
    std::map<std::pair<int, int>, int> cell_to_patch;
    for (int i = 0; i < topo.vertex_count; i++)
        cell_to_patch.emplace(std::make_pair(iv[i] / patch_size, iu[i] / patch_size), 0);
    int next = 0;
    for (auto& kv : cell_to_patch) kv.second = next++;

    PatchGraph g;
    g.patch_vertices.resize(next);
    g.vertex_patch.resize(topo.vertex_count);
    g.cell_u.resize(next);
    g.cell_v.resize(next);
    for (auto& kv : cell_to_patch) {
        g.cell_v[kv.second] = kv.first.first;
        g.cell_u[kv.second] = kv.first.second;
    }
    for (int i = 0; i < topo.vertex_count; i++) {
        int p = cell_to_patch.at({iv[i] / patch_size, iu[i] / patch_size});
        g.vertex_patch[i] = p;
        g.patch_vertices[p].push_back(i);
    }

    for (const auto& kv : cell_to_patch) {
        auto [cv, cu] = kv.first;
        int p = kv.second;
        const std::pair<int, int> nbrs[4] = {{cv, cu - 1}, {cv, cu + 1}, {cv - 1, cu}, {cv + 1, cu}};
        for (const auto& nb : nbrs) {
            auto it = cell_to_patch.find(nb);
            if (it != cell_to_patch.end()) g.mesh_edges.add(p, it->second, EdgeKind::Mesh);
        }
    }
    return g;
}

PatchStates patch_states(const MeshState& state, const PatchGraph& patches) {
    PatchStates out;
    int np = patches.patch_count();
    out.positions.resize(np);
    out.velocities.resize(np);
    out.accelerations.resize(np);
    for (int p = 0; p < np; p++) {
        const auto& members = patches.patch_vertices[p];
        if (members.empty()) throw std::invalid_argument("patch_states: empty patch");
        Vec3 x, v, a;
        for (int i : members) {
            x += state.positions.at(i);
            v += state.velocities.at(i);
            a += state.accelerations.at(i);
        }
        double inv = 1.0 / double(members.size());
        out.positions[p] = x * inv;
        out.velocities[p] = v * inv;
        out.accelerations[p] = a * inv;
    }
    return out;
}

std::vector<Vec3> patch_centers(const std::vector<Vec3>& positions, const PatchGraph& patches) {
    std::vector<Vec3> out(patches.patch_count());
    for (int p = 0; p < patches.patch_count(); p++) {
        const auto& members = patches.patch_vertices[p];
        if (members.empty()) throw std::invalid_argument("patch_centers: empty patch");
        Vec3 x;
        for (int i : members) x += positions.at(i);
        out[p] = x / double(members.size());
    }
    return out;
}

std::vector<Vec3> patch_mean_normals(const PatchGraph& patches, const std::vector<Vec3>& normals) {
    std::vector<Vec3> out(patches.patch_count());
    for (int p = 0; p < patches.patch_count(); p++) {
        Vec3 n;
        for (int i : patches.patch_vertices[p]) n += normals.at(i);
        double len = n.norm();
        out[p] = len > 1e-14 ? n / len : Vec3(0, 0, 1);
    }
    return out;
}

double patch_diameter(const PatchGraph& patches, const std::vector<Vec3>& positions) {
    double d2max = 0.0;
    for (const auto& members : patches.patch_vertices)
        for (size_t a = 0; a < members.size(); a++)
            for (size_t b = a + 1; b < members.size(); b++)
                d2max = std::max(d2max, (positions[members[a]] - positions[members[b]]).norm2());
    return std::sqrt(d2max);
}

}  // namespace layersim
