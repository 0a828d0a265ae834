#include "layersim/cloth.hpp"

#include <cmath>
#include <stdexcept>

namespace layersim {

ClothLayer build_cloth_grid(int nx, int ny, double spacing, const GarmentAttributes& attrs) {
    if (nx < 2 || ny < 2) throw std::invalid_argument("build_cloth_grid: grid must be at least 2x2");
    if (spacing <= 0.0) throw std::invalid_argument("build_cloth_grid: spacing must be positive");

    ClothLayer layer;
    layer.attrs = attrs;
    layer.vertex_mass = kBaseVertexMass * attrs.mass_density;

    MeshTopology& topo = layer.topology;
    topo.vertex_count = nx * ny;
    topo.uv.resize(topo.vertex_count);
    layer.rest_positions.resize(topo.vertex_count);
    auto vid = [nx](int ix, int iy) { return iy * nx + ix; };

    for (int iy = 0; iy < ny; iy++)
        for (int ix = 0; ix < nx; ix++) {
            layer.rest_positions[vid(ix, iy)] = Vec3(ix * spacing, iy * spacing, 0.0);
            topo.uv[vid(ix, iy)] = {double(ix) / double(nx - 1), double(iy) / double(ny - 1)};
        }

    for (int iy = 0; iy + 1 < ny; iy++)
        for (int ix = 0; ix + 1 < nx; ix++) {
            int i0 = vid(ix, iy), i1 = vid(ix + 1, iy), i2 = vid(ix + 1, iy + 1), i3 = vid(ix, iy + 1);
            topo.faces.push_back({i0, i1, i2});
            topo.faces.push_back({i0, i2, i3});
        }
    topo.finalize();

    auto add = [&](std::vector<Spring>& dst, int i, int j, double k) {
        double rest = (layer.rest_positions[i] - layer.rest_positions[j]).norm();
        dst.push_back({i, j, rest, k});
    };
    double k_struct = kBaseStructuralStiffness * attrs.stretch_stiffness;
    double k_shear = kBaseShearStiffness * attrs.stretch_stiffness;
    double k_bend = kBaseBendStiffness * attrs.bend_stiffness;

    for (int iy = 0; iy < ny; iy++)
        for (int ix = 0; ix < nx; ix++) {
            if (ix + 1 < nx) add(layer.springs.structural, vid(ix, iy), vid(ix + 1, iy), k_struct);
            if (iy + 1 < ny) add(layer.springs.structural, vid(ix, iy), vid(ix, iy + 1), k_struct);
            if (ix + 1 < nx && iy + 1 < ny) {
                add(layer.springs.shear, vid(ix, iy), vid(ix + 1, iy + 1), k_shear);
                add(layer.springs.shear, vid(ix + 1, iy), vid(ix, iy + 1), k_shear);
            }
            if (ix + 2 < nx) add(layer.springs.bend, vid(ix, iy), vid(ix + 2, iy), k_bend);
            if (iy + 2 < ny) add(layer.springs.bend, vid(ix, iy), vid(ix, iy + 2), k_bend);
        }

    // lumped rest areas, one third of each incident face
    layer.vertex_area.assign(topo.vertex_count, 0.0);
    for (const auto& f : topo.faces) {
        Vec3 an = (layer.rest_positions[f[1]] - layer.rest_positions[f[0]])
                      .cross(layer.rest_positions[f[2]] - layer.rest_positions[f[0]]);
        double third = an.norm() / 6.0;
        for (int k = 0; k < 3; k++) layer.vertex_area[f[k]] += third;
    }
    return layer;
}

}  // namespace layersim
