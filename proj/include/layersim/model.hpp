#pragma once

#include <map>
#include <string>
#include <vector>

#include "layersim/rng.hpp"
#include "layersim/sequence.hpp"
#include "layersim/tensor.hpp"

namespace layersim {

struct SimulatorConfig {
    int history = 1;      // velocity history length h
    int layer_count = 2;  // attention layers L
    int hidden = 32;      // token width d
    int patch_size = 4;
    double radius_patch = -1.0;  // patch-patch interaction radius (<0: 2.5 * patch diameter)
    double radius_body = -1.0;   // patch-body interaction radius (<0: 2.5 * patch diameter)
    double dt = 1.0 / 30.0;
    bool use_rotation_lift = true;  // canonical-frame rotation of hidden features

    int patch_feature_dim() const { return 3 * (history + 1) + 3 + 5; }
    int body_feature_dim() const { return 3 * (history + 1) + 3; }
    void validate() const;
};

// Named parameter tensors, ordered by name so every walk is deterministic.
struct ModelParams {
    SimulatorConfig config;
    std::map<std::string, Shape> shapes;
    std::map<std::string, std::vector<double>> values;

    static ModelParams init(const SimulatorConfig& config, uint64_t seed);
    int64_t total_parameters() const;
};

// "LNPK" checkpoint: magic, u32 version, u64 JSON header length, JSON
// (config + tensor manifest with byte offsets), then little-endian f64 blobs.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

enum class TokenKind : uint8_t { Patch, Body, Wind, Gravity, Attribute };

// Inputs for one prediction step, everything already resolved to plain
// arrays. Garment position history is newest-first: x[0] = t, x[1] = t-1, ...
// (history + 2 frames). Body arrays follow the same convention with index 0
// at time t+1.
struct StepInput {
    const SequenceData* seq = nullptr;
    std::vector<std::vector<Vec3>> x_hist;
    std::vector<std::vector<Vec3>> body_pos;      // [0] = t+1, [1] = t
    std::vector<std::vector<Vec3>> body_normals;  // same indexing
    WindState wind;                               // at t+1
    Vec3 gravity;
    double dt = 1.0 / 30.0;
};

// Ground-truth step input at time t; garment history may be overridden with
// fed-back predictions (newest first), e.g. during rollout.
StepInput make_step_input(const SequenceData& seq, int t, int history,
                          const std::vector<std::vector<Vec3>>* override_hist = nullptr);

// Token features, interaction edges and canonical frames for one step.
// Token order: patches (garment layer 0 then 1), body samples, wind, gravity.
struct TokenGraph {
    int patch_tokens = 0;
    int body_tokens = 0;
    int total_tokens() const { return patch_tokens + body_tokens + 2; }
    int wind_token() const { return patch_tokens + body_tokens; }
    int gravity_token() const { return patch_tokens + body_tokens + 1; }

    std::vector<double> patch_features;    // [patch_tokens, patch_feature_dim]
    std::vector<double> body_features;     // [body_tokens, body_feature_dim]
    std::vector<double> wind_features;     // [1, 4]
    std::vector<double> gravity_features;  // [1, 3]

    EdgeSet edges;              // token ids, sorted by receiver
    std::vector<Mat3> frames;   // per token; identity for patch tokens
    std::vector<Vec3> patch_centers;  // at time t
    std::vector<int> patch_layer;     // garment layer per patch token
    std::vector<int> patch_of_vertex; // garment vertex -> patch token id
};

TokenGraph encode_tokens(const StepInput& in, const SimulatorConfig& cfg, Rng& rng);

// Normalized edge feature (r + s) / ||r - s||; the denominator is clamped
// at 1e-12 and *degenerate is set when that happens.
std::vector<double> edge_feature(const std::vector<double>& r, const std::vector<double>& s,
                                 bool* degenerate = nullptr);

// Hidden-space rotation W R W^T + (I - W W^T), row-major d x d. W must be
// semi-orthogonal (W^T W = I3).
std::vector<double> lift_rotation(const Mat3& rot, const std::vector<double>& w, int d);

// Gram-Schmidt of the three columns, differentiable; throws when the raw
// matrix is numerically rank-deficient.
Tensor semi_orthogonalize(Graph& g, Tensor raw);

// phi(R) (or its transpose) applied to feature rows without forming d x d
// matrices: f + W ((R - I) (W^T f)) per row.
Tensor lift_apply(Graph& g, Tensor features, Tensor w, const std::vector<Mat3>& rots, bool transpose);

struct ParamTensors {
    std::map<std::string, Tensor> t;
    Tensor at(const std::string& name) const;
};

ParamTensors make_param_tensors(Graph& g, const ModelParams& params, bool requires_grad);

// One prediction step: encode, layer_count attention layers, decode,
// integrate. Returns the predicted positions t+1 as both plain values and
// the in-graph tensor for losses.
struct StepPrediction {
    std::vector<Vec3> positions;
    Tensor tensor;              // [N,3]
    TokenGraph tokens;          // as encoded (frames included, for reuse)
};

StepPrediction forward_step(Graph& g, const ParamTensors& pt, const SimulatorConfig& cfg,
                            const StepInput& in, Rng& rng);

// Recursive rollout from frame t0 (needs history+2 ground-truth frames up to
// t0); body and wind always come from the sequence. Predictions are fed
// back; world edges and patch states are recomputed every step.
struct RolloutResult {
    std::vector<std::vector<Vec3>> frames;  // predicted t0+1 .. t0+steps
    int diverged_at = -1;                   // step index where |x| exceeded 1e3, -1 if none
};

RolloutResult rollout(const ModelParams& params, const SequenceData& seq, int t0, int steps,
                      uint64_t rng_seed);

}  // namespace layersim
