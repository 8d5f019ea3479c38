#pragma once

#include <string>
#include <vector>

#include "emorec/dataset.hpp"
#include "emorec/metrics.hpp"
#include "emorec/model.hpp"
#include "emorec/training.hpp"

namespace emorec {

// Source-emotion samples anchoring the GEM constraint; fixed after creation.
struct EpisodicMemory {
    std::vector<MultiModalSample> samples;
};

EpisodicMemory build_memory(const std::vector<MultiModalSample>& source_train, int n,
                            std::uint64_t seed);

// Adds the new emotion's textual embedding as the last row of E_t; no
// other parameter changes. Acoustic/visual embeddings for it arise
// automatically from the learned mapping functions.
ModelState expand_vocabulary(const ModelState& state, const std::string& new_emotion_word,
                             const EmbeddingTable& table);

// Metrics on the unseen emotion only (the last score column of the
// expanded state); labels come from `unseen_label_column` of the samples.
EmotionMetrics zeroshot_eval(const ModelState& expanded,
                             const std::vector<MultiModalSample>& test, int unseen_label_column,
                             const ModalityMask& mask, double threshold);

// Single-constraint GEM: if <g_target, g_memory> >= 0, unchanged;
// otherwise remove the component along g_memory.
VectorXd gem_project(const VectorXd& g_target, const VectorXd& g_memory);

enum class FewShotMode { FineTune, JointTrain, ContinualLearning };

FewShotMode parse_fewshot_mode(const std::string& name);

struct FewShotConfig {
    double learning_rate = 1e-5;  // conventionally the source rate x 0.1
    int batch_size = 16;
    int max_epochs = 20;
    double grad_clip = 1.0;
    int memory_size = 256;
    double threshold = 0.5;
    std::uint64_t seed = 0;
};

struct AdaptationResult {
    ModelState adapted;
    TrainHistory history;
    int best_epoch = 0;
    // Filled during continual learning: smallest <applied, memory> inner
    // product observed, for checking the GEM constraint.
    double min_constraint_dot = 0.0;
};

// `fewshot_set` and `valid` carry K+1 label columns aligned with the
// expanded vocabulary; `source_train` carries the source K columns (a zero
// column for the new emotion is appended internally).
AdaptationResult fewshot_adapt(const ModelState& expanded,
                               const std::vector<MultiModalSample>& fewshot_set,
                               const std::vector<MultiModalSample>& source_train,
                               const std::vector<MultiModalSample>& valid, FewShotMode mode,
                               const FewShotConfig& config);

}  // namespace emorec
