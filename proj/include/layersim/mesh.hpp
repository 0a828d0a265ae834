#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "layersim/rng.hpp"
#include "layersim/vec3.hpp"

namespace layersim {

enum class EdgeKind : uint8_t { Mesh, World, Body, Wind, Gravity };

// Directed interaction edges, receiver <- sender, struct-of-arrays.
struct EdgeSet {
    std::vector<int> receivers;
    std::vector<int> senders;
    std::vector<EdgeKind> kinds;

    size_t size() const { return receivers.size(); }
    void add(int r, int s, EdgeKind k) {
        receivers.push_back(r);
        senders.push_back(s);
        kinds.push_back(k);
    }
    void append(const EdgeSet& o) {
        receivers.insert(receivers.end(), o.receivers.begin(), o.receivers.end());
        senders.insert(senders.end(), o.senders.begin(), o.senders.end());
        kinds.insert(kinds.end(), o.kinds.begin(), o.kinds.end());
    }
};

struct MeshTopology {
    int vertex_count = 0;
    std::vector<std::array<int, 3>> faces;
    std::vector<std::array<int, 2>> edges;  // union of face edges, deduplicated, i < j
    std::vector<std::array<double, 2>> uv;  // in [0,1]^2, one per vertex (may be empty)

    // CSR adjacency vertex -> incident faces, filled by finalize()
    std::vector<int> vf_offsets;
    std::vector<int> vf_faces;

    bool has_uv() const { return uv.size() == size_t(vertex_count); }

    // Derives edges and the vertex->face adjacency from faces. Must be
    // called once after faces are set; the topology is immutable afterwards.
    void finalize();
};

// Normalized physical attributes of one garment layer.
struct GarmentAttributes {
    double mass_density = 0.5;     // in [0,1], scales per-vertex mass
    double bend_stiffness = 0.5;   // in [0,1]
    double stretch_stiffness = 0.5;  // in [0,1]
    double friction = 0.5;         // in [0,1]
    int layer = 0;                 // 0 = inner, 1 = outer
};

struct MeshState {
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
    std::vector<Vec3> accelerations;
    int t = 0;
    double dt = 1.0 / 30.0;
};

struct VertexNormals {
    std::vector<Vec3> normals;
    std::vector<uint8_t> degenerate;  // 1 where the face star had zero area
};

// Area-weighted vertex normals. Faces wind counter-clockwise; a vertex whose
// incident faces sum to a zero vector gets (0,0,1) and a degenerate flag.
VertexNormals vertex_normals(const MeshTopology& topo, const std::vector<Vec3>& positions);

// Orthonormal frame whose rows are the local x,y,z axes with z = normal and
// a uniformly random in-plane x axis, so frame * normal = (0,0,1).
Mat3 canonical_frame(const Vec3& normal, Rng& rng);

namespace ref {
// Serial scatter-add reference for vertex normals (accumulates face by face
// instead of gathering per vertex).
VertexNormals vertex_normals_serial(const MeshTopology& topo, const std::vector<Vec3>& positions);
}  // namespace ref

}  // namespace layersim
