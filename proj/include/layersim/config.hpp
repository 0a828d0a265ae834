#pragma once

#include <string>

#include "layersim/model.hpp"
#include "layersim/oracle.hpp"
#include "layersim/train.hpp"

namespace layersim {

// The JSON run configuration with sections scene/model/train/eval. Every
// field has a documented default; unknown keys are rejected so typos fail
// loudly instead of silently using defaults.
struct RunConfig {
    SceneConfig scene;
    SimulatorConfig model;
    TrainConfig train;
    struct EvalConfig {
        double d_pen = 0.0;
        uint64_t rng_seed = 0;
    } eval;

    static RunConfig defaults();
    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
    std::string to_json_text() const;
};

}  // namespace layersim
