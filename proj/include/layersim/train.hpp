#pragma once

#include <map>
#include <string>
#include <vector>

#include "layersim/model.hpp"

namespace layersim {

struct LossConfig {
    double lambda_m = 1.0;
    double lambda_n = 0.1;
    double lambda_b = 1.0;
    double lambda_g = 1.0;
    double d_eps = 0.004;  // meters, minimum separation before the penalty turns on

    void validate() const;
};

struct TrainConfig {
    int noise_steps = 3;  // T_n, gradient-free self-rollout length bound
    double learning_rate = 1e-4;
    int epochs = 10;
    int batch_size = 1;  // sequences per optimizer update
    int max_steps = -1;  // optional hard cap on optimizer steps (<0: none)
    uint64_t seed = 0;
    LossConfig loss;
};

// ---- losses, plain evaluation side ------------------------------------

// mean squared Euclidean error over vertices plus the same over patch centers
double loss_mse_plain(const std::vector<Vec3>& pred, const std::vector<Vec3>& truth,
                      const std::vector<Vec3>& pred_centers, const std::vector<Vec3>& truth_centers);

// mean squared vertex-normal difference between two states of one topology
double loss_normal_plain(const std::vector<Vec3>& pred, const std::vector<Vec3>& truth,
                         const MeshTopology& topo);

// nearest-anchor penetration penalty, averaged over the vertices with a
// positive penalty; zero when nothing penetrates
double loss_collision_plain(const std::vector<Vec3>& queries, const std::vector<Vec3>& anchors,
                            const std::vector<Vec3>& anchor_normals, double d_eps);

// lambda-weighted sum; throws on a NaN component, naming it
double total_loss_plain(double mse, double normal, double coll_body, double coll_garment,
                        const LossConfig& cfg);

// ---- losses, graph side ------------------------------------------------

struct StepLoss {
    Tensor total;
    double value = 0.0;
    double mse = 0.0, normal = 0.0, coll_body = 0.0, coll_garment = 0.0;
};

// Builds the full one-step training loss against ground truth at t+1:
// vertex+patch MSE, normal consistency, collision against the true body
// samples, and collision between the predicted garment layers.
StepLoss build_step_loss(Graph& g, const StepPrediction& pred, const SequenceData& seq, int t,
                         const LossConfig& cfg);

// ---- optimization --------------------------------------------------------

class Adam {
  public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void update(ModelParams& params, const std::map<std::string, std::vector<double>>& grads);
    int64_t steps() const { return steps_; }

  private:
    double lr_, beta1_, beta2_, eps_;
    int64_t steps_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

// One training step at sample (seq, t): roll T_n' ~ U{0..T_n} gradient-free
// self-prediction steps from t - T_n', then one supervised step predicting
// t+1, and apply the Adam update. Returns the step's loss components.
StepLoss train_step(ModelParams& params, Adam& adam, const SequenceData& seq, int t,
                    const TrainConfig& cfg, Rng& rng);

struct TrainLogRow {
    int step = 0;
    double total = 0.0, mse = 0.0, normal = 0.0, coll_body = 0.0, coll_garment = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<TrainLogRow> log;
};

// Epoch-based training over a corpus; deterministic in (configs, seed).
TrainResult train(const SimulatorConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::vector<SequenceData>& data);

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log);

}  // namespace layersim
