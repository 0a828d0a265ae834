#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "layersim/config.hpp"
#include "layersim/lseq.hpp"
#include "layersim/obj_export.hpp"
#include "layersim/oracle.hpp"
#include "layersim/verify.hpp"

using namespace layersim;
namespace fs = std::filesystem;

namespace {
std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}
}  // namespace

TEST_CASE("sequence files start with the magic and round-trip") {
    SequenceData seq = make_tiny_two_patch_sequence();
    fs::path path = fs::temp_directory_path() / "ls_fmt.lseq";
    write_lseq(path.string(), seq);

    std::string bytes = slurp(path);
    REQUIRE(bytes.size() > 16);
    CHECK(bytes.substr(0, 4) == "LSEQ");
    uint32_t version;
    std::memcpy(&version, bytes.data() + 4, 4);
    CHECK(version == 1);

    SequenceData back = read_lseq(path.string());
    CHECK(back.frame_count() == seq.frame_count());
    CHECK(back.layer_count() == seq.layer_count());
    CHECK(back.dt == seq.dt);
    CHECK(back.seed == seq.seed);
    CHECK(back.patch_size == seq.patch_size);
    CHECK(back.eps_garment == seq.eps_garment);
    CHECK(back.gravity.z == seq.gravity.z);
    CHECK(back.windy == seq.windy);
    REQUIRE(back.total_vertex_count() == seq.total_vertex_count());
    for (int t = 0; t < seq.frame_count(); t++) {
        for (int i = 0; i < seq.total_vertex_count(); i++) {
            // storage is f32: identical after one round-trip of the write
            CHECK(back.garment_positions[t][i].x == doctest::Approx(float(seq.garment_positions[t][i].x)));
        }
        CHECK(back.body_samples[t].size() == seq.body_samples[t].size());
        CHECK(back.wind[t].strength == doctest::Approx(float(seq.wind[t].strength)));
    }
    CHECK(back.patches[0].vertex_patch == seq.patches[0].vertex_patch);
    CHECK(back.layers[0].topology.edges == seq.layers[0].topology.edges);

    // a second write of the re-read data is byte-identical to itself
    fs::path p2 = fs::temp_directory_path() / "ls_fmt2.lseq";
    fs::path p3 = fs::temp_directory_path() / "ls_fmt3.lseq";
    write_lseq(p2.string(), back);
    write_lseq(p3.string(), back);
    CHECK(slurp(p2) == slurp(p3));
    fs::remove(path);
    fs::remove(p2);
    fs::remove(p3);
}

TEST_CASE("corrupted sequence files are rejected") {
    fs::path path = fs::temp_directory_path() / "ls_bad.lseq";
    std::ofstream(path.string(), std::ios::binary) << "NOPExxxxxxxxxxxxxxxx";
    CHECK_THROWS(read_lseq(path.string()));
    fs::remove(path);
    CHECK_THROWS(read_lseq("/nonexistent/file.lseq"));
}

TEST_CASE("OBJ export matches the sequence vertex count") {
    SequenceData seq = make_tiny_two_patch_sequence();
    fs::path path = fs::temp_directory_path() / "ls_frame.obj";
    export_obj(path.string(), seq, 0);

    std::ifstream is(path);
    std::string line;
    int verts = 0, faces = 0, objects = 0;
    while (std::getline(is, line)) {
        if (line.rfind("v ", 0) == 0) verts++;
        if (line.rfind("f ", 0) == 0) faces++;
        if (line.rfind("o ", 0) == 0) objects++;
    }
    CHECK(verts == seq.total_vertex_count());
    size_t expected_faces = 0;
    for (const auto& l : seq.layers) expected_faces += l.topology.faces.size();
    CHECK(faces == int(expected_faces));
    CHECK(objects == seq.layer_count());
    fs::remove(path);

    CHECK_THROWS_AS(export_obj("/tmp/x.obj", seq, 99), std::invalid_argument);
}

TEST_CASE("run configuration defaults satisfy the protocol constants") {
    RunConfig cfg = RunConfig::defaults();
    CHECK(cfg.model.history == 1);
    CHECK(cfg.train.epochs == 10);
    CHECK(cfg.scene.windy_threshold == doctest::Approx(50.0));
    CHECK(cfg.scene.max_wind_strength == doctest::Approx(400.0));
    CHECK(cfg.scene.wind_strength_scale == doctest::Approx(0.01));
    CHECK(cfg.train.noise_steps == 3);
    CHECK(cfg.train.learning_rate == doctest::Approx(1e-4));
    CHECK(cfg.train.loss.lambda_m == doctest::Approx(1.0));
    CHECK(cfg.train.loss.lambda_n == doctest::Approx(0.1));
    CHECK(cfg.train.loss.lambda_b == doctest::Approx(1.0));
    CHECK(cfg.train.loss.lambda_g == doctest::Approx(1.0));
    CHECK(cfg.scene.layers.size() == 2);
    cfg.scene.validate();
    cfg.model.validate();
}

TEST_CASE("unknown configuration keys are rejected, overrides merge") {
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"scene": {"dtt": 0.01}})"), std::invalid_argument);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"scnee": {}})"), std::invalid_argument);
    CHECK_THROWS_AS(RunConfig::from_json_text("not json"), std::invalid_argument);

    RunConfig cfg = RunConfig::from_json_text(R"({"model": {"hidden": 48}, "train": {"epochs": 3}})");
    CHECK(cfg.model.hidden == 48);
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.model.history == 1);  // untouched defaults remain

    // full serialization parses back to the same values
    RunConfig again = RunConfig::from_json_text(cfg.to_json_text());
    CHECK(again.model.hidden == 48);
    CHECK(again.train.epochs == 3);
    CHECK(again.scene.layers[1].spacing == doctest::Approx(cfg.scene.layers[1].spacing));
}

TEST_CASE("scene wind schedule parses explicit intervals") {
    RunConfig cfg = RunConfig::from_json_text(R"({
        "scene": {"wind": {"randomize": false,
                            "intervals": [{"start": 3, "length": 5,
                                           "quaternion": [1,0,0,0], "strength": 2.0}]}}})");
    CHECK(cfg.scene.randomize_wind == false);
    REQUIRE(cfg.scene.wind_intervals.size() == 1);
    CHECK(cfg.scene.wind_intervals[0].start == 3);
    CHECK(cfg.scene.wind_intervals[0].wind.strength == doctest::Approx(2.0));
}
