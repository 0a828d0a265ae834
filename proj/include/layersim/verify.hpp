#pragma once

#include <string>
#include <vector>

namespace layersim {

struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;  // worst observed error / deviation
    double bound = 0.0;     // what it must stay below
    std::string note;
};

// Rotation and identity properties of the attention machinery (>= 1000
// random trials each).
CheckResult check_edge_feature_equivariance(int trials = 1000);
CheckResult check_attention_weight_invariance(int trials = 1000);
CheckResult check_lift_homomorphism(int trials = 1000);
CheckResult check_edge_feature_identity(int trials = 1000);  // mean/deviation form vs simplified form

// Gradient checks: every differentiable primitive on random shapes, then
// the full one-step training loss on a tiny two-patch scene.
CheckResult check_op_gradients(int shapes_per_op = 10, double tol = 1e-5);
CheckResult check_full_loss_gradient(double tol = 1e-4);

// Oracle physics properties.
CheckResult check_com_ballistic(int steps = 1000);
CheckResult check_body_penetration();
CheckResult check_generation_determinism();

// Spatial hashing vs the serial pairwise scan (exact set equality).
CheckResult check_world_edges(int configs = 20, int points = 1000);

// Translation invariance of one prediction step on the tiny scene.
CheckResult check_translation_invariance();

// Everything above, in order.
std::vector<CheckResult> run_property_suite();

}  // namespace layersim

#include "layersim/model.hpp"

namespace layersim {

// Tiny two-layer scene (one patch per layer, four body samples, four
// frames) used by the gradient and invariance checks.
SequenceData make_tiny_two_patch_sequence();
SimulatorConfig tiny_model_config();

// Max displacement difference between a prediction on `seq` and the same
// prediction on the scene translated by (1,1,1).
double translation_invariance_error(const ModelParams& params, const SequenceData& seq, int t,
                                    uint64_t rng_seed);

// Max relative gradient error of the full one-step loss per parameter block
// on the tiny scene (ordered by name).
std::vector<std::pair<std::string, double>> per_block_gradcheck();

}  // namespace layersim
