#pragma once

#include <optional>
#include <string>
#include <vector>

#include "emorec/dataset.hpp"
#include "emorec/model.hpp"

namespace emorec {

struct SchedulerConfig {
    double factor = 0.1;
    int patience = 5;        // epochs without improvement before a decay
    double min_lr = 1e-6;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 32;
    int max_epochs = 30;
    double grad_clip = 1.0;  // max global L2 norm
    double dropout = 0.15;
    std::array<int, 3> hidden{300, 200, 100};
    int num_layers = 2;
    SchedulerConfig scheduler;
    double threshold = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    std::vector<std::optional<double>> valid_w_acc;  // per emotion
    std::vector<std::optional<double>> valid_auc;
    double learning_rate = 0.0;
    double wall_seconds = 0.0;
};

using TrainHistory = std::vector<EpochRecord>;

class AdamOptimizer {
  public:
    AdamOptimizer(Eigen::Index n, double learning_rate, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    void step(VectorXd& params, const VectorXd& grad);
    void set_learning_rate(double lr) { lr_ = lr; }
    double learning_rate() const { return lr_; }

  private:
    VectorXd m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

// Scales grad in place so its L2 norm is at most max_norm.
void clip_global_norm(VectorXd& grad, double max_norm);

// Epoch selection: argmax of the mean per-emotion validation W-Acc over
// defined entries; ties resolve to the earliest epoch.
int select_best(const TrainHistory& history);

struct TrainResult {
    ModelState state;  // parameters from the selected best epoch
    TrainHistory history;
    int best_epoch = 0;
};

TrainResult train(const Dataset& dataset, const MatrixXd& e_t, const TrainConfig& config);

// Checkpoint directory: model.json plus one float64 MMER tensor per
// parameter; round-trips bitwise.
void save_checkpoint(const ModelState& state, const std::string& dir);
ModelState load_checkpoint(const std::string& dir);

}  // namespace emorec
