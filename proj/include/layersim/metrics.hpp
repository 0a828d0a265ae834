#pragma once

#include <string>
#include <vector>

#include "layersim/model.hpp"

namespace layersim {

// Per-frame mean of vertex Euclidean errors, then the mean over frames.
double euclidean_error(const std::vector<std::vector<Vec3>>& pred,
                       const std::vector<std::vector<Vec3>>& truth);

// Percentage of (frame, vertex) pairs lying behind their nearest body
// anchor's tangent plane by more than d_pen.
double collision_rate_body(const std::vector<std::vector<Vec3>>& garment_frames,
                           const std::vector<std::vector<SurfaceSample>>& body_frames, double d_pen);

// Percentage of (frame, outer vertex) pairs behind the inner surface by more
// than d_pen; only inner anchors within anchor_radius count.
double collision_rate_garment(const std::vector<std::vector<Vec3>>& inner_frames,
                              const std::vector<std::vector<Vec3>>& outer_frames,
                              const MeshTopology& inner_topo, double d_pen, double anchor_radius);

struct EvalRow {
    std::string id;
    double euclid_err_m = 0.0;
    double coll_body_pct = 0.0;
    double coll_garment_pct = 0.0;
    int diverged_at = -1;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_euclid() const;
    double mean_coll_body() const;
    double mean_coll_garment() const;
};

// Rolls the model over the whole sequence (starting after the history
// window) and scores the predictions.
EvalRow evaluate_sequence(const ModelParams& params, const SequenceData& seq, const std::string& id,
                          uint64_t rng_seed);

void write_eval_csv(const std::string& path, const EvalReport& report);

}  // namespace layersim
