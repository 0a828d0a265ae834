#include "layersim/lseq.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace layersim {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "LSEQ I/O assumes a little-endian host");

namespace {

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_f32(std::ostream& os, float v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_vec3(std::ostream& os, const Vec3& v) {
    put_f32(os, float(v.x));
    put_f32(os, float(v.y));
    put_f32(os, float(v.z));
}

uint32_t get_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t get_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
float get_f32(std::istream& is) {
    float v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
Vec3 get_vec3(std::istream& is) {
    float x = get_f32(is), y = get_f32(is), z = get_f32(is);
    return Vec3(x, y, z);
}

json layer_to_json(const ClothLayer& layer, const PatchGraph& patches) {
    json faces = json::array();
    for (const auto& f : layer.topology.faces) faces.push_back({f[0], f[1], f[2]});
    json uv = json::array();
    for (const auto& u : layer.topology.uv) uv.push_back({u[0], u[1]});
    json rest = json::array();
    for (const auto& p : layer.rest_positions) rest.push_back({p.x, p.y, p.z});
    return {{"vertex_count", layer.topology.vertex_count},
            {"faces", faces},
            {"uv", uv},
            {"rest_positions", rest},
            {"pinned", layer.pinned},
            {"vertex_mass", layer.vertex_mass},
            {"attributes",
             {{"mass_density", layer.attrs.mass_density},
              {"bend_stiffness", layer.attrs.bend_stiffness},
              {"stretch_stiffness", layer.attrs.stretch_stiffness},
              {"friction", layer.attrs.friction},
              {"layer", layer.attrs.layer}}},
            {"patch_map", patches.vertex_patch},
            {"patch_cells_u", patches.cell_u},
            {"patch_cells_v", patches.cell_v}};
}

ClothLayer layer_from_json(const json& j, PatchGraph& patches) {
    ClothLayer layer;
    layer.topology.vertex_count = j.at("vertex_count").get<int>();
    for (const auto& f : j.at("faces")) layer.topology.faces.push_back({f[0].get<int>(), f[1].get<int>(), f[2].get<int>()});
    for (const auto& u : j.at("uv")) layer.topology.uv.push_back({u[0].get<double>(), u[1].get<double>()});
    layer.topology.finalize();
    for (const auto& p : j.at("rest_positions"))
        layer.rest_positions.push_back(Vec3(p[0].get<double>(), p[1].get<double>(), p[2].get<double>()));
    layer.pinned = j.at("pinned").get<std::vector<int>>();
    layer.vertex_mass = j.at("vertex_mass").get<double>();
    const json& a = j.at("attributes");
    layer.attrs.mass_density = a.at("mass_density").get<double>();
    layer.attrs.bend_stiffness = a.at("bend_stiffness").get<double>();
    layer.attrs.stretch_stiffness = a.at("stretch_stiffness").get<double>();
    layer.attrs.friction = a.at("friction").get<double>();
    layer.attrs.layer = a.at("layer").get<int>();

    patches.vertex_patch = j.at("patch_map").get<std::vector<int>>();
    patches.cell_u = j.at("patch_cells_u").get<std::vector<int>>();
    patches.cell_v = j.at("patch_cells_v").get<std::vector<int>>();
    int np = int(patches.cell_u.size());
    patches.patch_vertices.assign(np, {});
    for (int v = 0; v < int(patches.vertex_patch.size()); v++)
        patches.patch_vertices.at(patches.vertex_patch[v]).push_back(v);
    for (int p = 0; p < np; p++) {
        for (int q = 0; q < np; q++) {
            if (p == q) continue;
            int du = std::abs(patches.cell_u[p] - patches.cell_u[q]);
            int dv = std::abs(patches.cell_v[p] - patches.cell_v[q]);
            if (du + dv == 1) patches.mesh_edges.add(p, q, EdgeKind::Mesh);
        }
    }
    return layer;
}

}  // namespace

void write_lseq(const std::string& path, const SequenceData& seq) {
    json layers = json::array();
    for (size_t l = 0; l < seq.layers.size(); l++) layers.push_back(layer_to_json(seq.layers[l], seq.patches[l]));
    json header = {{"dt", seq.dt},
                   {"frames", seq.frame_count()},
                   {"seed", seq.seed},
                   {"patch_size", seq.patch_size},
                   {"eps_body", seq.eps_body},
                   {"eps_garment", seq.eps_garment},
                   {"gravity", {seq.gravity.x, seq.gravity.y, seq.gravity.z}},
                   {"windy", seq.windy},
                   {"body_sample_count", seq.body_samples.empty() ? 0 : int(seq.body_samples[0].size())},
                   {"collider", seq.collider_json.empty() ? json::object() : json::parse(seq.collider_json)},
                   {"layers", layers}};
    std::string header_str = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_lseq: cannot open " + path);
    os.write("LSEQ", 4);
    put_u32(os, 1);
    put_u64(os, header_str.size());
    os.write(header_str.data(), std::streamsize(header_str.size()));

    for (int t = 0; t < seq.frame_count(); t++) {
        for (const Vec3& p : seq.garment_positions[t]) put_vec3(os, p);
        for (const auto& s : seq.body_samples[t]) put_vec3(os, s.position);
        for (const auto& s : seq.body_samples[t]) put_vec3(os, s.normal);
        const WindState& w = seq.wind[t];
        put_f32(os, float(w.quaternion.w));
        put_f32(os, float(w.quaternion.x));
        put_f32(os, float(w.quaternion.y));
        put_f32(os, float(w.quaternion.z));
        put_f32(os, float(w.strength));
    }
    if (!os) throw std::runtime_error("write_lseq: write failed for " + path);
}

SequenceData read_lseq(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_lseq: cannot open " + path);
    char magic[4] = {};
    is.read(magic, 4);
    if (std::memcmp(magic, "LSEQ", 4) != 0) throw std::runtime_error("read_lseq: bad magic in " + path);
    uint32_t version = get_u32(is);
    if (version != 1) throw std::runtime_error("read_lseq: unsupported version");
    uint64_t header_len = get_u64(is);
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), std::streamsize(header_len));
    json header = json::parse(header_str);

    SequenceData seq;
    seq.dt = header.at("dt").get<double>();
    seq.seed = header.at("seed").get<uint64_t>();
    seq.patch_size = header.at("patch_size").get<int>();
    seq.eps_body = header.at("eps_body").get<double>();
    seq.eps_garment = header.at("eps_garment").get<double>();
    const auto& gj = header.at("gravity");
    seq.gravity = Vec3(gj[0].get<double>(), gj[1].get<double>(), gj[2].get<double>());
    seq.windy = header.at("windy").get<bool>();
    seq.collider_json = header.at("collider").dump();
    for (const auto& jl : header.at("layers")) {
        PatchGraph patches;
        seq.layers.push_back(layer_from_json(jl, patches));
        seq.patches.push_back(std::move(patches));
    }

    int frames = header.at("frames").get<int>();
    int samples = header.at("body_sample_count").get<int>();
    int total = seq.total_vertex_count();
    for (int t = 0; t < frames; t++) {
        std::vector<Vec3> pos(total);
        for (int i = 0; i < total; i++) pos[i] = get_vec3(is);
        seq.garment_positions.push_back(std::move(pos));
        std::vector<SurfaceSample> body(samples);
        for (int i = 0; i < samples; i++) body[i].position = get_vec3(is);
        for (int i = 0; i < samples; i++) body[i].normal = get_vec3(is);
        seq.body_samples.push_back(std::move(body));
        WindState w;
        w.quaternion.w = get_f32(is);
        w.quaternion.x = get_f32(is);
        w.quaternion.y = get_f32(is);
        w.quaternion.z = get_f32(is);
        w.strength = get_f32(is);
        seq.wind.push_back(w);
        if (!is) throw std::runtime_error("read_lseq: truncated file " + path);
    }
    return seq;
}

}  // namespace layersim
