#include "layersim/mesh.hpp"

#include <algorithm>
#include <stdexcept>

#include "layersim/parallel.hpp"

namespace layersim {

void MeshTopology::finalize() {
    for (const auto& f : faces)
        for (int k = 0; k < 3; k++)
            if (f[k] < 0 || f[k] >= vertex_count) throw std::invalid_argument("MeshTopology: face index out of range");

    edges.clear();
    for (const auto& f : faces) {
        for (int k = 0; k < 3; k++) {
            int a = f[k], b = f[(k + 1) % 3];
            edges.push_back({std::min(a, b), std::max(a, b)});
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    // counting sort of faces by vertex
    vf_offsets.assign(vertex_count + 1, 0);
    for (const auto& f : faces)
        for (int k = 0; k < 3; k++) vf_offsets[f[k] + 1]++;
    for (int v = 0; v < vertex_count; v++) vf_offsets[v + 1] += vf_offsets[v];
    vf_faces.assign(faces.size() * 3, 0);
    std::vector<int> cursor(vf_offsets.begin(), vf_offsets.end() - 1);
    for (int fi = 0; fi < int(faces.size()); fi++)
        for (int k = 0; k < 3; k++) vf_faces[cursor[faces[fi][k]]++] = fi;
}

static Vec3 face_area_normal(const MeshTopology& topo, const std::vector<Vec3>& pos, int fi) {
    const auto& f = topo.faces[fi];
    return (pos[f[1]] - pos[f[0]]).cross(pos[f[2]] - pos[f[0]]);
}

VertexNormals vertex_normals(const MeshTopology& topo, const std::vector<Vec3>& positions) {
    if (positions.size() != size_t(topo.vertex_count))
        throw std::invalid_argument("vertex_normals: position count does not match topology");
    if (topo.vf_offsets.size() != size_t(topo.vertex_count) + 1)
        throw std::invalid_argument("vertex_normals: topology not finalized");

    VertexNormals out;
    out.normals.resize(topo.vertex_count);
    out.degenerate.assign(topo.vertex_count, 0);

    // gather per vertex over its incident faces; one writer per vertex
    parallel_for(topo.vertex_count, [&](int64_t v) {
        Vec3 sum;
        for (int k = topo.vf_offsets[v]; k < topo.vf_offsets[v + 1]; k++)
            sum += face_area_normal(topo, positions, topo.vf_faces[k]);
        double n = sum.norm();
        if (n < 1e-14) {
            out.normals[v] = Vec3(0, 0, 1);
            out.degenerate[v] = 1;
        } else {
            out.normals[v] = sum / n;
        }
    });
    return out;
}

Mat3 canonical_frame(const Vec3& normal, Rng& rng) {
    double n = normal.norm();
    if (std::abs(n - 1.0) > 1e-6) throw std::invalid_argument("canonical_frame: normal not unit length");
    Vec3 z = normal / n;

    // random in-plane x axis: project a random direction onto the plane
    Vec3 x;
    for (;;) {
        Vec3 r(rng.normal(), rng.normal(), rng.normal());
        x = r - z * r.dot(z);
        double xn = x.norm();
        if (xn > 1e-8) {
            x = x / xn;
            break;
        }
    }
    Vec3 y = z.cross(x);

    Mat3 f;
    f.m[0][0] = x.x; f.m[0][1] = x.y; f.m[0][2] = x.z;
    f.m[1][0] = y.x; f.m[1][1] = y.y; f.m[1][2] = y.z;
    f.m[2][0] = z.x; f.m[2][1] = z.y; f.m[2][2] = z.z;
    return f;
}

namespace ref {

VertexNormals vertex_normals_serial(const MeshTopology& topo, const std::vector<Vec3>& positions) {
    VertexNormals out;
    out.normals.assign(topo.vertex_count, Vec3());
    out.degenerate.assign(topo.vertex_count, 0);
    for (int fi = 0; fi < int(topo.faces.size()); fi++) {
        Vec3 an = face_area_normal(topo, positions, fi);
        for (int k = 0; k < 3; k++) out.normals[topo.faces[fi][k]] += an;
    }
    for (int v = 0; v < topo.vertex_count; v++) {
        double n = out.normals[v].norm();
        if (n < 1e-14) {
            out.normals[v] = Vec3(0, 0, 1);
            out.degenerate[v] = 1;
        } else {
            out.normals[v] = out.normals[v] / n;
        }
    }
    return out;
}

}  // namespace ref
}  // namespace layersim
