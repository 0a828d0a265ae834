#include "layersim/obj_export.hpp"

#include <cinttypes>
#include <cstdio>
#include <stdexcept>

namespace layersim {

void export_obj(const std::string& path, const SequenceData& seq, int frame) {
    if (frame < 0 || frame >= seq.frame_count())
        throw std::invalid_argument("export_obj: frame " + std::to_string(frame) + " out of range");

    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("export_obj: cannot open " + path);

    const auto& pos = seq.garment_positions[frame];
    std::fprintf(f, "# layersim frame %d\n", frame);
    int base = 1;
    for (int l = 0; l < seq.layer_count(); l++) {
        const MeshTopology& topo = seq.layers[l].topology;
        int off = seq.layer_offset(l);
        std::fprintf(f, "o layer%d\n", l);
        for (int v = 0; v < topo.vertex_count; v++)
            std::fprintf(f, "v %.9g %.9g %.9g\n", pos[off + v].x, pos[off + v].y, pos[off + v].z);
        for (const auto& face : topo.faces)
            std::fprintf(f, "f %d %d %d\n", base + face[0], base + face[1], base + face[2]);
        base += topo.vertex_count;
    }
    std::fclose(f);
}

}  // namespace layersim
